"""Prediction throughput: feature extraction + pair scores + window aggregation.

Trains one relative model at the default stack size on a synthetic corpus,
then times labelling of held-out sequences (2 patches of 32 x 32 per frame).

    python3 benchmarks/bench_predict.py [--subjects 4] [--au 12]
"""
from __future__ import annotations

import argparse
import json
import time

from relau.config import RunConfig
from relau.features import extract_features
from relau.pipeline import extract_all, feature_config, train_relative
from relau.relabel import predict_sequence
from relau.synth import SynthConfig, generate


def run_benchmark(subjects: int = 4, au: int = 12, seed: int = 0, repeats: int = 3) -> dict:
    scfg = SynthConfig(seed=seed, n_subjects=subjects + 1, aus=(au,))
    bundles = generate(scfg)
    train, test = bundles[:-1], bundles[-1:]
    cfg = RunConfig.from_dict({"au": [au], "seed": seed,
                               "grid": {"C": [2.0], "gamma1": [0.125], "gamma2": [0.125]}})
    fcfg = feature_config(cfg, au)
    model = train_relative(extract_all(train, fcfg), au, fcfg, cfg).model
    wcfg = cfg.window_config
    n_frames = sum(len(b.frames) for b in test)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        for b in test:
            predict_sequence(model, b, wcfg, extract_features(b, fcfg))
        best = min(best, time.perf_counter() - t0)
    return {"ms_per_frame": 1000.0 * best / n_frames, "frames": n_frames, "patches": len(fcfg.patches),
            "patch_size": [fcfg.patches[0].width, fcfg.patches[0].height], "n_train": model.meta["n_train"],
            "support_vectors": int(len(model.svr.coef)), "window": wcfg.w}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--subjects", type=int, default=4)
    ap.add_argument("--au", type=int, default=12)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    print(json.dumps(run_benchmark(args.subjects, args.au, args.seed), indent=1))


if __name__ == "__main__":
    main()
