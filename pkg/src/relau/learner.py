"""Pairwise change scorer (relative path) and frame intensity scorer
(baseline path): Isomap -> KCCA -> two-kernel epsilon-SVR, plus grid search
and the versioned model file."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, ConflictError, FormatError, TrainingError
from .features import FeatureConfig, FrameFeatures
from .fusion import KccaModel, _View, kcca_fit, kcca_project, sq_dists
from .manifold import IsomapModel, isomap_fit, isomap_transform
from .metrics import binary_counts, f1_score, macro_f1, confusion_matrix
from .relabel import PairSample, usable_positions
from .store import read_archive, write_archive
from .svr import svr_solve

log = logging.getLogger(__name__)

MODEL_FORMAT = "relau-model/1"
RELATIVE, BASELINE = "relative", "baseline"


def classify_pair(score: float, T: float) -> int:
    """+1 above ``T``, -1 below ``-T``, 0 otherwise (boundaries included)."""
    if not T > 0:
        raise ConfigError("pair threshold must be positive")
    if score > T:
        return 1
    if score < -T:
        return -1
    return 0


def classify_pairs(scores, T: float) -> np.ndarray:
    s = np.asarray(scores, float)
    return np.where(s > T, 1, np.where(s < -T, -1, 0))


def presence_threshold(mode: str) -> float:
    # halfway between absent and the weakest present intensity
    return 0.5 if mode == "discrete" else 0.29


# ---------------------------------------------------------------------------
# configuration


def _powers(lo: int, hi: int) -> Tuple[float, ...]:
    return tuple(2.0 ** e for e in range(lo, hi + 1))


@dataclass(frozen=True)
class HyperGrid:
    C: Tuple[float, ...] = field(default_factory=lambda: _powers(-3, 7))
    gamma1: Tuple[float, ...] = field(default_factory=lambda: _powers(-9, 3))
    gamma2: Tuple[float, ...] = field(default_factory=lambda: _powers(-9, 3))
    validation_subjects: int = 1

    def __post_init__(self):
        for name in ("C", "gamma1", "gamma2"):
            vals = tuple(float(v) for v in getattr(self, name))
            if not vals:
                raise ConfigError(f"grid list {name} is empty")
            if any(not v > 0 for v in vals):
                raise ConfigError(f"grid list {name} must be positive")
            object.__setattr__(self, name, tuple(sorted(set(vals))))
        if self.validation_subjects < 1:
            raise ConfigError("grid needs at least one validation subject")

    def cells(self) -> List[Tuple[float, float, float]]:
        """Grid cells in tie-break order: smaller C, then gamma1, then gamma2 first."""
        return list(itertools.product(self.C, self.gamma1, self.gamma2))

    def __len__(self):
        return len(self.C) * len(self.gamma1) * len(self.gamma2)


@dataclass(frozen=True)
class StackParams:
    """Everything except the grid-searched SVR hyperparameters."""

    isomap_d: int = 40
    isomap_k: int = 8
    kcca_components: int = 20
    kappa: float = 1e-3
    epsilon: float = 0.1
    tol: float = 1e-3


# ---------------------------------------------------------------------------
# training sets


@dataclass(frozen=True, eq=False)
class TrainingSet:
    g: np.ndarray        # geometric view rows
    a: np.ndarray        # appearance rows (pair differences or frame vectors)
    target: np.ndarray
    groups: np.ndarray   # subject id per row

    def __len__(self):
        return len(self.target)

    def subset(self, mask) -> "TrainingSet":
        return TrainingSet(self.g[mask], self.a[mask], self.target[mask], self.groups[mask])


def balance_pairs(pairs: Sequence[PairSample], T: float, ratio: float = 1.5, seed: int = 0) -> List[PairSample]:
    """Subsample no-change pairs to at most ``ratio`` times the larger signed class."""
    labels = [classify_pair(p.target, T) for p in pairs]
    zero = [i for i, l in enumerate(labels) if l == 0]
    n_signed = max(labels.count(1), labels.count(-1))
    cap = int(ratio * n_signed)
    if n_signed == 0 or len(zero) <= cap:
        return list(pairs)
    rng = np.random.default_rng(seed)
    keep_zero = set(rng.choice(zero, size=cap, replace=False).tolist())
    return [p for i, p in enumerate(pairs) if labels[i] != 0 or i in keep_zero]


def reversed_pair(p: PairSample) -> PairSample:
    m = len(p.g) // 2
    g = np.concatenate([p.g[m:], p.g[:m]])
    return PairSample(p.t2, p.t, -p.target, g, -p.a, p.subject_id, p.sequence_id)


def pair_training_set(pairs: Sequence[PairSample], T: float, zero_ratio: float = 1.5,
                      reverse: bool = True, max_pairs: Optional[int] = None, seed: int = 0) -> TrainingSet:
    """Balance, optionally add reversed copies, cap, and stack pair samples."""
    if not pairs:
        raise TrainingError("no training pairs")
    base = balance_pairs(pairs, T, zero_ratio, seed)
    if max_pairs is not None:
        limit = max_pairs // 2 if reverse else max_pairs
        if len(base) > limit:
            rng = np.random.default_rng(seed + 1)
            keep = np.sort(rng.choice(len(base), size=limit, replace=False))
            base = [base[i] for i in keep]
    rows = list(base)
    if reverse:
        rows += [reversed_pair(p) for p in base]
    return TrainingSet(
        np.vstack([p.g for p in rows]),
        np.vstack([p.a for p in rows]),
        np.array([p.target for p in rows]),
        np.array([p.subject_id for p in rows]),
    )


def frame_training_set(items, au_id: int, mode: str, border_margin: int = 2) -> TrainingSet:
    """Single-frame samples for the baseline from ``(bundle, FrameFeatures)`` items."""
    g, a, y, groups = [], [], [], []
    for bundle, feats in items:
        inten = bundle.intensities(au_id, mode)
        present = bundle.intensities(au_id, "discrete") > 0
        for p in usable_positions(present, border_margin):
            g.append(feats.geometric[p])
            a.append(feats.appearance[p])
            y.append(inten[p])
            groups.append(bundle.subject_id)
    if not y:
        raise TrainingError(f"no usable frames for AU{au_id}")
    return TrainingSet(np.vstack(g), np.vstack(a), np.array(y), np.array(groups))


# ---------------------------------------------------------------------------
# models


@dataclass(frozen=True, eq=False)
class SvrModel:
    z1: np.ndarray       # support vectors, geometric-view projections
    z2: np.ndarray       # support vectors, appearance-view projections
    coef: np.ndarray     # alpha - alpha*, each in [-C, C]
    bias: float
    C: float
    epsilon: float
    gamma1: float
    gamma2: float
    kkt: float = 0.0

    def kernel(self, z1, z2) -> np.ndarray:
        return 0.5 * np.exp(-self.gamma1 * sq_dists(z1, self.z1)) + 0.5 * np.exp(-self.gamma2 * sq_dists(z2, self.z2))

    def decision(self, z1, z2) -> np.ndarray:
        if len(self.coef) == 0:
            return np.full(np.atleast_2d(z1).shape[0], self.bias)
        return self.kernel(z1, z2) @ self.coef + self.bias


def svr_train(z1, z2, target, C: float, epsilon: float, gamma1: float, gamma2: float,
              tol: float = 1e-3) -> SvrModel:
    """Fit the two-kernel epsilon-SVR on already projected views."""
    z1 = np.asarray(z1, float)
    z2 = np.asarray(z2, float)
    y = np.asarray(target, float)
    if np.any(np.abs(y) > 1) or not np.all(np.isfinite(y)):
        raise TrainingError("SVR targets must be finite and lie in [-1, 1]")
    K = 0.5 * np.exp(-gamma1 * sq_dists(z1, z1)) + 0.5 * np.exp(-gamma2 * sq_dists(z2, z2))
    sol = svr_solve(K, y, C, epsilon, tol)
    sv = np.flatnonzero(sol.theta != 0)
    return SvrModel(z1[sv], z2[sv], sol.theta[sv], sol.bias, C, epsilon, gamma1, gamma2, sol.kkt)


def svr_predict(model: SvrModel, z1, z2, clip=(-1.0, 1.0)) -> np.ndarray:
    """SVR output clipped to ``clip``; this is the pairwise change score."""
    return np.clip(model.decision(z1, z2), *clip)


@dataclass(frozen=True, eq=False)
class TrainedModel:
    kind: str                  # "relative" or "baseline"
    features: FeatureConfig
    mode: str
    isomap: IsomapModel
    kcca: KccaModel
    svr: SvrModel
    params: StackParams
    meta: Dict = field(default_factory=dict)

    @property
    def au_id(self) -> int:
        return self.features.au_id

    @property
    def clip(self) -> Tuple[float, float]:
        return (-1.0, 1.0) if self.kind == RELATIVE else (0.0, 1.0)

    def project(self, g, a):
        iso = isomap_transform(self.isomap, np.atleast_2d(a))
        return kcca_project(self.kcca, np.atleast_2d(g), iso)

    def predict_rows(self, g, a) -> np.ndarray:
        z1, z2 = self.project(g, a)
        return svr_predict(self.svr, z1, z2, self.clip)

    def pair_scores(self, feats: FrameFeatures, first, second) -> np.ndarray:
        """Change scores for position pairs ``(first[k], second[k])`` of one sequence."""
        if self.kind != RELATIVE:
            raise ConfigError("pair_scores needs a relative model")
        first = np.asarray(first)
        second = np.asarray(second)
        g = np.hstack([feats.geometric[first], feats.geometric[second]])
        a = feats.appearance[second] - feats.appearance[first]
        return self.predict_rows(g, a)

    def frame_scores(self, feats: FrameFeatures) -> np.ndarray:
        if self.kind != BASELINE:
            raise ConfigError("frame_scores needs a baseline model")
        return self.predict_rows(feats.geometric, feats.appearance)


@dataclass(frozen=True, eq=False)
class _Stack:
    isomap: IsomapModel
    kcca: KccaModel
    z1: np.ndarray
    z2: np.ndarray


def _fit_stack(data: TrainingSet, params: StackParams) -> _Stack:
    n = len(data)
    d = params.isomap_d
    if n <= d:
        raise TrainingError(f"{n} training samples cannot support a {d}-dimensional Isomap")
    iso = isomap_fit(data.a, d=d, k=params.isomap_k)
    comps = min(params.kcca_components, n)
    kc = kcca_fit(data.g, iso.embedding, kappa=params.kappa, components=comps)
    z1, z2 = kcca_project(kc, data.g, iso.embedding)
    return _Stack(iso, kc, z1, z2)


def fit_model(data: TrainingSet, kind: str, fcfg: FeatureConfig, mode: str, C: float, gamma1: float,
              gamma2: float, params: StackParams = StackParams(), meta: Optional[dict] = None) -> TrainedModel:
    stack = _fit_stack(data, params)
    svr = svr_train(stack.z1, stack.z2, data.target, C, params.epsilon, gamma1, gamma2, params.tol)
    info = {"n_train": len(data)}
    info.update(meta or {})
    return TrainedModel(kind, fcfg, mode, stack.isomap, stack.kcca, svr, params, info)


def _validation_split(groups: np.ndarray, n_val: int, seed: int):
    subjects = sorted(set(groups.tolist()))
    if len(subjects) < 2:
        raise ConfigError("grid search needs training data from at least 2 subjects")
    n_val = min(n_val, len(subjects) - 1)
    rng = np.random.default_rng(seed)
    val = set(rng.permutation(subjects)[:n_val].tolist())
    return np.array([g in val for g in groups]), sorted(val)


def validation_score(kind: str, pred, target, T: float, mode: str) -> float:
    """Macro-F1 over {+1, -1, 0} for pairs; presence F1 for the baseline."""
    if kind == RELATIVE:
        return macro_f1(confusion_matrix(classify_pairs(target, T), classify_pairs(pred, T)))
    thr = presence_threshold(mode)
    tp, fp, fn = binary_counts(np.asarray(target) > 0, np.asarray(pred) >= thr)
    return f1_score(tp, fp, fn)


@dataclass(frozen=True, eq=False)
class GridResult:
    C: float
    gamma1: float
    gamma2: float
    score: float
    table: List[Tuple[float, float, float, float]]  # (C, gamma1, gamma2, score)
    model: TrainedModel
    validation_subjects: List[str]


def grid_search(data: TrainingSet, grid: HyperGrid, kind: str, fcfg: FeatureConfig, mode: str, T: float,
                params: StackParams = StackParams(), seed: int = 0, meta: Optional[dict] = None) -> GridResult:
    """Pick (C, gamma1, gamma2) by validation F1 on held-out training subjects,
    then refit the whole stack on all of ``data``.

    Ties go to the smaller C, then smaller gamma1, then smaller gamma2.
    """
    if len(grid) == 0:
        raise ConfigError("empty hyperparameter grid")
    cells = grid.cells()
    table = []
    val_subjects: List[str] = []
    if len(cells) == 1:
        best = cells[0]
        best_score = float("nan")
        table.append((*best, best_score))
    else:
        is_val, val_subjects = _validation_split(data.groups, grid.validation_subjects, seed)
        train, val = data.subset(~is_val), data.subset(is_val)
        stack = _fit_stack(train, params)
        vz1, vz2 = kcca_project(stack.kcca, val.g, isomap_transform(stack.isomap, val.a))
        d1_tt, d2_tt = sq_dists(stack.z1, stack.z1), sq_dists(stack.z2, stack.z2)
        d1_vt, d2_vt = sq_dists(vz1, stack.z1), sq_dists(vz2, stack.z2)
        clip = (-1.0, 1.0) if kind == RELATIVE else (0.0, 1.0)
        best, best_score = None, -np.inf
        kern_cache = {}
        for C, g1, g2 in cells:
            key = (g1, g2)
            if key not in kern_cache:
                kern_cache.clear()
                kern_cache[key] = (0.5 * np.exp(-g1 * d1_tt) + 0.5 * np.exp(-g2 * d2_tt),
                                   0.5 * np.exp(-g1 * d1_vt) + 0.5 * np.exp(-g2 * d2_vt))
            K, Kv = kern_cache[key]
            sol = svr_solve(K, train.target, C, params.epsilon, params.tol)
            pred = np.clip(Kv @ sol.theta + sol.bias, *clip)
            score = validation_score(kind, pred, val.target, T, mode)
            table.append((C, g1, g2, score))
            if score > best_score:
                best, best_score = (C, g1, g2), score
    info = {"grid_score": None if np.isnan(best_score) else float(best_score), "validation_subjects": val_subjects}
    info.update(meta or {})
    model = fit_model(data, kind, fcfg, mode, *best, params=params, meta=info)
    return GridResult(*best, best_score, table, model, val_subjects)


# ---------------------------------------------------------------------------
# serialization


def _as_compact(arr: np.ndarray) -> np.ndarray:
    a = np.asarray(arr)
    if a.dtype.kind == "f" and a.size and np.all(np.isfinite(a)) and np.all(a == np.rint(a)) \
            and np.abs(a).max() < 2 ** 31:
        return a.astype(np.int32)
    return a


def save_model(model: TrainedModel, path) -> None:
    """Single versioned file with every sub-model and the config hashes used.

    Identical models give identical bytes.
    """
    arrays = {
        "isomap/points": _as_compact(model.isomap.points),
        "isomap/center": model.isomap.center,
        "isomap/geodesic": model.isomap.geodesic,
        "isomap/embedding": model.isomap.embedding,
        "isomap/eigenvalues": model.isomap.eigenvalues,
        "isomap/eigenvectors": model.isomap.eigenvectors,
        "isomap/sq_col_mean": model.isomap.sq_col_mean,
        "kcca/correlations": model.kcca.correlations,
        "svr/z1": model.svr.z1,
        "svr/z2": model.svr.z2,
        "svr/coef": model.svr.coef,
    }
    views = {}
    for name, view in (("view1", model.kcca.view1), ("view2", model.kcca.view2)):
        arrays[f"kcca/{name}/x"] = view.x
        arrays[f"kcca/{name}/col_mean"] = view.col_mean
        arrays[f"kcca/{name}/dual"] = view.dual
        arrays[f"kcca/{name}/std"] = view.std
        views[name] = {"gamma": view.gamma, "total_mean": view.total_mean, "scale": view.scale}
    meta = {
        "format": MODEL_FORMAT,
        "kind": model.kind,
        "au_id": model.au_id,
        "mode": model.mode,
        "features": model.features.to_dict(),
        "feature_hash": model.features.hash,
        "params": model.params.__dict__,
        "isomap_k": model.isomap.k,
        "kcca": {"kappa": model.kcca.kappa, **views},
        "svr": {"bias": model.svr.bias, "C": model.svr.C, "epsilon": model.svr.epsilon,
                "gamma1": model.svr.gamma1, "gamma2": model.svr.gamma2, "kkt": model.svr.kkt},
        "info": model.meta,
    }
    write_archive(path, meta, arrays)


def load_model(path) -> TrainedModel:
    path = Path(path)
    meta, arr = read_archive(path)
    if meta.get("format") != MODEL_FORMAT:
        raise FormatError(f"{path}: unsupported model format {meta.get('format')!r}")
    fcfg = FeatureConfig.from_dict(meta["features"])
    if fcfg.hash != meta["feature_hash"]:
        raise ConflictError(f"{path}: feature config does not match its recorded hash")
    iso = IsomapModel(
        arr["isomap/points"].astype(float), arr["isomap/center"], int(meta["isomap_k"]),
        arr["isomap/geodesic"], arr["isomap/embedding"], arr["isomap/eigenvalues"],
        arr["isomap/eigenvectors"], arr["isomap/sq_col_mean"])
    views = []
    for name in ("view1", "view2"):
        v = meta["kcca"][name]
        views.append(_View(arr[f"kcca/{name}/x"], float(v["gamma"]), arr[f"kcca/{name}/col_mean"],
                           float(v["total_mean"]), float(v["scale"]), arr[f"kcca/{name}/dual"],
                           arr[f"kcca/{name}/std"]))
    kc = KccaModel(views[0], views[1], float(meta["kcca"]["kappa"]), arr["kcca/correlations"])
    s = meta["svr"]
    svr = SvrModel(arr["svr/z1"], arr["svr/z2"], arr["svr/coef"], float(s["bias"]), float(s["C"]),
                   float(s["epsilon"]), float(s["gamma1"]), float(s["gamma2"]), float(s["kkt"]))
    return TrainedModel(meta["kind"], fcfg, meta["mode"], iso, kc, svr, StackParams(**meta["params"]),
                        meta.get("info", {}))
