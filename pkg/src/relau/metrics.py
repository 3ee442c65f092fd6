"""Classification metrics and the paired t-test used in evaluation reports."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy import special

from .errors import ConfigError

CLASSES = (1, -1, 0)  # increase, decrease, no change
P_FLOOR = float(np.finfo(float).tiny)  # reported instead of an exact zero p-value


def f1_score(tp: int, fp: int, fn: int) -> float:
    """F1 from counts; 0 when there are no positives predicted or present."""
    denom = 2 * tp + fp + fn
    return 0.0 if denom == 0 else 2.0 * tp / denom


def binary_counts(truth, pred) -> Tuple[int, int, int]:
    t = np.asarray(truth, bool)
    p = np.asarray(pred, bool)
    return int(np.sum(t & p)), int(np.sum(~t & p)), int(np.sum(t & ~p))


def confusion_matrix(truth, pred, classes: Sequence = CLASSES) -> np.ndarray:
    """``M[i, j]`` counts samples of true class ``classes[i]`` predicted as ``classes[j]``."""
    truth = list(truth)
    pred = list(pred)
    if len(truth) != len(pred):
        raise ConfigError("truth and prediction lengths differ")
    pos = {c: i for i, c in enumerate(classes)}
    m = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(truth, pred):
        m[pos[t], pos[p]] += 1
    return m


def per_class_f1(cm: np.ndarray) -> np.ndarray:
    cm = np.asarray(cm)
    tp = np.diag(cm)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    return np.array([f1_score(a, b, c) for a, b, c in zip(tp, fp, fn)])


def macro_f1(cm: np.ndarray) -> float:
    return float(per_class_f1(cm).mean())


def accuracy(cm: np.ndarray) -> float:
    cm = np.asarray(cm)
    total = cm.sum()
    return float(np.trace(cm) / total) if total else 0.0


def roc_auc(labels, scores) -> float:
    """Area under the ROC curve (Mann-Whitney form, ties count one half)."""
    y = np.asarray(labels, bool)
    s = np.asarray(scores, float)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ConfigError("AUC needs both positive and negative samples")
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(len(s))
    sorted_s = s[order]
    # average ranks over ties
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass(frozen=True)
class TTest:
    t: float
    p: float
    df: int
    mean_diff: float


def paired_t_test(a, b) -> TTest:
    """Two-sided paired t-test of ``a - b``."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    if a.shape != b.shape or a.ndim != 1:
        raise ConfigError("paired t-test needs two equal-length 1-D samples")
    n = len(a)
    if n < 2:
        raise ConfigError("paired t-test needs at least 2 pairs")
    d = a - b
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    df = n - 1
    if sd == 0.0:
        if mean == 0.0:
            return TTest(0.0, 1.0, df, 0.0)
        return TTest(float(np.copysign(np.inf, mean)), P_FLOOR, df, mean)
    t = mean / (sd / np.sqrt(n))
    p = float(special.betainc(df / 2.0, 0.5, df / (df + t * t)))
    return TTest(float(t), min(max(p, P_FLOOR), 1.0), df, mean)
