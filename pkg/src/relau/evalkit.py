"""Leave-one-subject-out comparison of the relative and frame-based pipelines.

Reference relative labels come from the annotations: intensities are turned
into pair differences and aggregated with the same window and threshold as
the predictions, so truth and prediction are directly comparable.
"""
from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .config import RunConfig
from .errors import ConfigError, RelauError
from .metrics import accuracy, confusion_matrix, macro_f1, paired_t_test, roc_auc
from .pipeline import extract_all, feature_config, train_baseline, train_relative
from .relabel import DEC, INC, SAME, annotation_relative, baseline_predict, predict_sequence
from .seqmodel import SequenceBundle, group_by_subject

log = logging.getLogger(__name__)

METHODS = ("baseline", "relative")
METRICS = ("f1", "auc", "accuracy")


@dataclass
class MethodResult:
    truth: List[str] = field(default_factory=list)
    pred: List[str] = field(default_factory=list)
    score: List[float] = field(default_factory=list)

    def extend(self, truth, labels):
        self.truth += [t.label for t in truth]
        self.pred += [p.label for p in labels]
        self.score += [p.score for p in labels]

    def confusion(self) -> np.ndarray:
        return confusion_matrix(self.truth, self.pred, (INC, DEC, SAME))

    def metrics(self) -> Dict[str, Optional[float]]:
        cm = self.confusion()
        return {"f1": macro_f1(cm), "auc": mean_auc(self.truth, self.score), "accuracy": accuracy(cm)}


def mean_auc(truth: Sequence[str], scores: Sequence[float]) -> Optional[float]:
    """Mean one-vs-rest AUC of increase (ranked by s) and decrease (ranked by -s)."""
    s = np.asarray(scores, float)
    t = np.asarray(truth)
    vals = []
    for cls, sign in ((INC, 1.0), (DEC, -1.0)):
        y = t == cls
        if y.any() and (~y).any():
            vals.append(roc_auc(y, sign * s))
    return float(np.mean(vals)) if vals else None


def _mask(labels, skip_boundary: bool):
    return [not (skip_boundary and l.boundary_flag) for l in labels]


@dataclass
class EvalReport:
    config: dict
    config_hash: str
    rows: List[dict]            # one per AU: {"au": .., "f1_baseline": .., ...}
    summary: Dict[str, dict]    # "mean", "variance", "p" -> {metric_method: value}
    folds: List[dict]
    warnings: List[str]

    def table(self) -> List[List[str]]:
        header = ["au"] + [f"{m}_{meth}" for m in METRICS for meth in METHODS]
        out = [header]
        for r in self.rows:
            out.append([f"AU{r['au']}"] + [_fmt(r[k]) for k in header[1:]])
        for name in ("mean", "variance"):
            out.append([name] + [_fmt(self.summary[name].get(k)) for k in header[1:]])
        p = self.summary["p"]
        out.append(["p"] + [_fmt(p.get(m)) if meth == "relative" else "" for m in METRICS for meth in METHODS])
        return out

    @property
    def stamp(self) -> str:
        return f"seed={self.config.get('seed')} config={self.config_hash}"

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# relau {self.stamp}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerows(self.table())
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "format": "relau-report/1",
            "config_hash": self.config_hash,
            "seed": self.config.get("seed"),
            "config": self.config,
            "rows": self.rows,
            "summary": self.summary,
            "folds": self.folds,
            "warnings": self.warnings,
        }
        return json.dumps(_round(doc), sort_keys=True, indent=1) + "\n"

    def render(self) -> str:
        rows = self.table()
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in rows) + "\n"

    def write(self, out_dir) -> List[Path]:
        from .plotting import plot_report

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / "report.csv", out / "report.json", out / "report.png"]
        paths[0].write_text(self.to_csv(), encoding="utf-8", newline="\n")
        paths[1].write_text(self.to_json(), encoding="utf-8", newline="\n")
        plot_report(self, paths[2], self.stamp)
        return paths


def _fmt(v) -> str:
    return "" if v is None else f"{v:.6f}"


def _round(obj):
    if isinstance(obj, float):
        return round(obj, 6) if np.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    return obj


def _fold(subject: str, by_subject, items_by_key, au: int, fcfg, cfg: RunConfig):
    train_items = [items_by_key[b.key] for s, bs in by_subject.items() if s != subject for b in bs]
    test_items = [items_by_key[b.key] for b in by_subject[subject]]
    # audit: no held-out data in training
    assert all(b.subject_id != subject for b, _ in train_items)
    warnings: List[str] = []
    rel = train_relative(train_items, au, fcfg, cfg, warnings).model
    base = train_baseline(train_items, au, fcfg, cfg).model
    res = {m: MethodResult() for m in METHODS}
    wcfg = cfg.window_config
    for bundle, feats in test_items:
        truth = annotation_relative(bundle, au, wcfg, cfg.mode)
        keep = _mask(truth, cfg.skip_boundary)
        r_labels = predict_sequence(rel, bundle, wcfg, feats)
        b_labels = baseline_predict(base, bundle, wcfg, feats).labels
        sel = lambda xs: [x for x, k in zip(xs, keep) if k]
        res["relative"].extend(sel(truth), sel(r_labels))
        res["baseline"].extend(sel(truth), sel(b_labels))
    info = {"au": au, "subject": subject,
            "relative": {"C": rel.svr.C, "gamma1": rel.svr.gamma1, "gamma2": rel.svr.gamma2},
            "baseline": {"C": base.svr.C, "gamma1": base.svr.gamma1, "gamma2": base.svr.gamma2}}
    for m in METHODS:
        info[m].update(res[m].metrics())
    return res, info, warnings


def loso_cv(bundles: Sequence[SequenceBundle], cfg: RunConfig, extractor=None) -> EvalReport:
    """Train both pipelines on all but one subject, label the held-out subject, repeat.

    Confusions are pooled over folds per AU; means, variances and the paired
    t-test are taken across AUs. Folds run on ``cfg.workers`` threads; the
    report does not depend on the worker count. ``extractor(bundles, fcfg)``
    may supply features (e.g. from a feature store).
    """
    by_subject = group_by_subject(bundles)
    if len(by_subject) < 2:
        raise ConfigError("leave-one-subject-out needs at least 2 subjects")
    subjects = sorted(by_subject)
    rows, folds, warnings = [], [], []
    for au in cfg.au:
        fcfg = feature_config(cfg, au)
        ordered = [b for s in subjects for b in by_subject[s]]
        items = extractor(ordered, fcfg) if extractor else extract_all(ordered, fcfg, cfg.workers)
        items_by_key = {b.key: item for b, item in zip(ordered, items)}
        pooled = {m: MethodResult() for m in METHODS}

        def run(subject):
            try:
                return _fold(subject, by_subject, items_by_key, au, fcfg, cfg)
            except RelauError as exc:
                return None, {"au": au, "subject": subject, "skipped": str(exc)}, [
                    f"fold AU{au}/{subject} skipped: {exc}"]

        if cfg.workers > 1:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                results = list(pool.map(run, subjects))
        else:
            results = [run(s) for s in subjects]
        for res, info, warn in results:
            folds.append(info)
            warnings += warn
            for w in warn:
                log.warning(w)
            if res is None:
                continue
            for m in METHODS:
                pooled[m].truth += res[m].truth
                pooled[m].pred += res[m].pred
                pooled[m].score += res[m].score
        row = {"au": au}
        for m in METHODS:
            met = pooled[m].metrics() if pooled[m].truth else {k: None for k in METRICS}
            for k in METRICS:
                row[f"{k}_{m}"] = met[k]
            row[f"confusion_{m}"] = pooled[m].confusion().tolist()
        rows.append(row)
    return EvalReport(cfg.result_dict(), cfg.hash, rows, _summary(rows), folds, warnings)


def _summary(rows: List[dict]) -> Dict[str, dict]:
    mean, var, p = {}, {}, {}
    for k in METRICS:
        cols = {}
        for m in METHODS:
            vals = [r[f"{k}_{m}"] for r in rows]
            cols[m] = vals
            ok = [v for v in vals if v is not None]
            mean[f"{k}_{m}"] = float(np.mean(ok)) if ok else None
            var[f"{k}_{m}"] = float(np.var(ok, ddof=1)) if len(ok) > 1 else None
        both = [(r, b) for r, b in zip(cols["relative"], cols["baseline"]) if r is not None and b is not None]
        if len(both) >= 2:
            t = paired_t_test([r for r, _ in both], [b for _, b in both])
            p[k] = t.p
            p[f"{k}_t"] = t.t
        else:
            p[k] = None
    return {"mean": mean, "variance": var, "p": p}
