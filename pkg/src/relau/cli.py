"""``relau`` command line: synth, extract, pairs, train, predict, evaluate, gridsearch.

Every subcommand reads one JSON run config (``--config``); flags override
the config keys of the same name. Failures print a JSON diagnostic on
standard error and exit with the error class's code.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .config import MODES, RunConfig, load_run_config
from .errors import ConflictError, MissingInputError, RelauError
from .learner import load_model, save_model
from .pipeline import collect_pairs, feature_config, train_baseline, train_relative
from .seqmodel import load_bundles, save_bundle

log = logging.getLogger("relau")


def _au_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--au expects comma-separated integers, got {text!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(json.dumps({"error": "usage", "message": message, "exit_code": 2}) + "\n")
        raise SystemExit(2)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config; flags override its keys")
    common.add_argument("--au", type=_au_list, help="comma-separated AU ids")
    common.add_argument("--window", type=int, help="total window size w (even)")
    common.add_argument("--threshold", type=float, help="label threshold T")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--mode", choices=MODES)
    common.add_argument("--out", help="output directory")
    common.add_argument("--bundles", help="directory searched for bundles")
    common.add_argument("--features", help="feature store directory (default <out>/features)")
    common.add_argument("--models", help="model directory (default <out>/models)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="relau", description="Relative facial action unit detection.")
    p.add_argument("--version", action="version", version=f"relau {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("synth", "write a synthetic bundle corpus to --out"),
        ("extract", "extract per-frame features into the feature store"),
        ("pairs", "write the training pair list per AU"),
        ("train", "grid-search and fit relative and baseline models"),
        ("predict", "label every frame of every bundle"),
        ("evaluate", "leave-one-subject-out comparison report"),
        ("gridsearch", "validation score of every grid cell"),
    ):
        sub.add_parser(name, parents=[common], help=help_text)
    return p


def resolve_config(args) -> RunConfig:
    cfg = load_run_config(args.config)
    return cfg.with_overrides(au=args.au, window=args.window, threshold=args.threshold, seed=args.seed,
                              workers=args.workers, mode=args.mode, out=args.out, bundles=args.bundles,
                              features=args.features, models=args.models)


def _features_dir(cfg: RunConfig) -> Path:
    return Path(cfg.features) if cfg.features else Path(cfg.out) / "features"


def _models_dir(cfg: RunConfig) -> Path:
    return Path(cfg.models) if cfg.models else Path(cfg.out) / "models"


def _stamp(cfg: RunConfig) -> str:
    return f"# relau {__version__} seed={cfg.seed} config={cfg.hash}\n"


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")


def _bundles(cfg: RunConfig):
    bundles = load_bundles(cfg.bundles)
    if not bundles:
        raise MissingInputError(f"no bundles found under {cfg.bundles}")
    return bundles


def _items(cfg: RunConfig, bundles, fcfg):
    from .store import FeatureStore

    return FeatureStore(_features_dir(cfg), fcfg).extract(bundles, cfg.workers)


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(cfg: RunConfig) -> dict:
    from .synth import generate

    scfg = cfg.synth_config
    scfg = type(scfg).from_dict({**scfg.to_dict(), "seed": cfg.seed})
    out = Path(cfg.out)
    bundles = generate(scfg, workers=cfg.workers)
    for b in bundles:
        save_bundle(b, out / b.subject_id / b.sequence_id)
    return {"bundles": len(bundles), "subjects": scfg.n_subjects, "out": str(out)}


def cmd_extract(cfg: RunConfig) -> dict:
    from .store import FeatureStore

    bundles = _bundles(cfg)
    summary = {}
    for au in cfg.au:
        store = FeatureStore(_features_dir(cfg), feature_config(cfg, au))
        store.extract(bundles, cfg.workers)
        summary[f"AU{au}"] = {"computed": store.computed, "reused": store.reused,
                              "length": store.fcfg.appearance_length}
    return summary


def cmd_pairs(cfg: RunConfig) -> dict:
    from .learner import classify_pair

    bundles = _bundles(cfg)
    summary = {}
    for au in cfg.au:
        warnings: list = []
        pairs = collect_pairs([(b, None) for b in bundles], au, cfg, warnings)
        buf = io.StringIO()
        buf.write(_stamp(cfg))
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["subject_id", "sequence_id", "first", "second", "target", "label"])
        for p in pairs:
            w.writerow([p.subject_id, p.sequence_id, p.t, p.t2, f"{p.target:.9g}", classify_pair(p.target, cfg.threshold)])
        _write_text(Path(cfg.out) / "pairs" / f"AU{au}.csv", buf.getvalue())
        summary[f"AU{au}"] = {"pairs": len(pairs), "skipped": len(warnings)}
    return summary


def _grid_csv(cfg: RunConfig, table) -> str:
    buf = io.StringIO()
    buf.write(_stamp(cfg))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["C", "gamma1", "gamma2", "score"])
    for row in table:
        w.writerow([f"{v:.9g}" for v in row])
    return buf.getvalue()


def cmd_train(cfg: RunConfig) -> dict:
    bundles = _bundles(cfg)
    mdir = _models_dir(cfg)
    summary = {}
    for au in cfg.au:
        fcfg = feature_config(cfg, au)
        items = _items(cfg, bundles, fcfg)
        rel = train_relative(items, au, fcfg, cfg)
        base = train_baseline(items, au, fcfg, cfg)
        save_model(rel.model, mdir / f"{au}.model")
        save_model(base.model, mdir / f"{au}.baseline.model")
        summary[f"AU{au}"] = {"relative": {"C": rel.C, "gamma1": rel.gamma1, "gamma2": rel.gamma2},
                              "baseline": {"C": base.C, "gamma1": base.gamma1, "gamma2": base.gamma2}}
    _write_text(mdir / "train.json", json.dumps({"seed": cfg.seed, "config_hash": cfg.hash, "models": summary},
                                                sort_keys=True, indent=1) + "\n")
    return summary


def cmd_gridsearch(cfg: RunConfig) -> dict:
    bundles = _bundles(cfg)
    summary = {}
    for au in cfg.au:
        fcfg = feature_config(cfg, au)
        items = _items(cfg, bundles, fcfg)
        for kind, result in (("relative", train_relative(items, au, fcfg, cfg)),
                             ("baseline", train_baseline(items, au, fcfg, cfg))):
            _write_text(Path(cfg.out) / "gridsearch" / f"AU{au}_{kind}.csv", _grid_csv(cfg, result.table))
            summary[f"AU{au}_{kind}"] = {"C": result.C, "gamma1": result.gamma1, "gamma2": result.gamma2,
                                         "score": result.score}
    return summary


def cmd_predict(cfg: RunConfig) -> dict:
    from .plotting import plot_predictions
    from .relabel import predict_sequence

    bundles = _bundles(cfg)
    mdir = _models_dir(cfg)
    buf = io.StringIO()
    buf.write(_stamp(cfg))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["subject_id", "sequence_id", "frame", "au_id", "s", "label", "comparisons_used", "boundary_flag"])
    wcfg = cfg.window_config
    first = None
    n = 0
    for au in cfg.au:
        fcfg = feature_config(cfg, au)
        model = load_model(mdir / f"{au}.model")
        if model.features.hash != fcfg.hash:
            raise ConflictError(f"model for AU{au} was trained with feature config {model.features.hash[:12]}, "
                                f"current config is {fcfg.hash[:12]}")
        if model.mode != cfg.mode:
            raise ConflictError(f"model for AU{au} was trained in {model.mode} mode, config asks for {cfg.mode}")
        for bundle, feats in _items(cfg, bundles, fcfg):
            labels = predict_sequence(model, bundle, wcfg, feats)
            for f, lab in zip(bundle.frames, labels):
                w.writerow([bundle.subject_id, bundle.sequence_id, f.index, au, f"{lab.score:.9g}", lab.label,
                            lab.comparisons_used, int(lab.boundary_flag)])
                n += 1
            spread = float(np.ptp(bundle.intensities(au, cfg.mode)))
            if first is None or spread > first[0]:
                first = (spread, bundle, au, labels)
    out = Path(cfg.out)
    _write_text(out / "predictions.csv", buf.getvalue())
    _, bundle, au, labels = first
    plot_predictions([f.index for f in bundle.frames], [l.score for l in labels], [l.label for l in labels],
                     cfg.threshold, out / "predictions.png", title=f"{bundle.key} AU{au}",
                     truth=bundle.intensities(au, cfg.mode), description=_stamp(cfg)[2:].strip())
    return {"rows": n, "out": str(out / "predictions.csv")}


def cmd_evaluate(cfg: RunConfig) -> dict:
    from .evalkit import loso_cv

    bundles = _bundles(cfg)
    report = loso_cv(bundles, cfg, extractor=lambda bs, fcfg: _items(cfg, bs, fcfg))
    paths = report.write(cfg.out)
    sys.stdout.write(report.render())
    return {"outputs": [str(p) for p in paths]}


COMMANDS = {
    "synth": cmd_synth,
    "extract": cmd_extract,
    "pairs": cmd_pairs,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "gridsearch": cmd_gridsearch,
}


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")
    return code


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors and --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        result = COMMANDS[args.command](cfg)
    except RelauError as exc:
        return _fail(exc.kind, str(exc), exc.exit_code)
    except OSError as exc:
        return _fail("io", str(exc), 1)
    if args.command != "evaluate":
        sys.stdout.write(json.dumps(result, sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
