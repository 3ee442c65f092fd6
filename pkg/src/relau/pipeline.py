"""Glue shared by the CLI and the evaluation harness: feature extraction for a
set of bundles and training of the relative and baseline models."""
from __future__ import annotations

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .config import RunConfig
from .errors import ExtractionError, TrainingError
from .features import FeatureConfig, FrameFeatures, extract_features, load_feature_config
from .learner import (BASELINE, RELATIVE, GridResult, frame_training_set, grid_search,
                      pair_training_set)
from .relabel import PairSample, sample_pairs
from .seqmodel import SequenceBundle

log = logging.getLogger(__name__)

Item = Tuple[SequenceBundle, FrameFeatures]


def feature_config(cfg: RunConfig, au_id: int) -> FeatureConfig:
    return load_feature_config(au_id, cfg.config_dir)


def extract_all(bundles: Sequence[SequenceBundle], fcfg: FeatureConfig, workers: int = 1) -> List[Item]:
    return [(b, extract_features(b, fcfg, workers=workers)) for b in bundles]


def collect_pairs(items: Sequence[Item], au_id: int, cfg: RunConfig,
                  warnings: Optional[list] = None) -> List[PairSample]:
    """Pair samples from every bundle; bundles without usable frames are reported and skipped."""
    pairs: List[PairSample] = []
    for bundle, feats in items:
        try:
            pairs += sample_pairs(bundle, au_id, cfg.border_margin, cfg.mode, cfg.pair_gap, feats)
        except ExtractionError as exc:
            msg = f"skipped {bundle.key} for AU{au_id}: {exc}"
            log.warning(msg)
            if warnings is not None:
                warnings.append(msg)
    return pairs


def _subsample(data, limit: int, seed: int):
    if len(data) <= limit:
        return data
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(len(data), size=limit, replace=False))
    return data.subset(keep)


def train_relative(items: Sequence[Item], au_id: int, fcfg: FeatureConfig, cfg: RunConfig,
                   warnings: Optional[list] = None) -> GridResult:
    pairs = collect_pairs(items, au_id, cfg, warnings)
    if not pairs:
        raise TrainingError(f"no usable training pairs for AU{au_id}")
    data = pair_training_set(pairs, cfg.threshold, cfg.zero_ratio, cfg.reverse_pairs, cfg.max_pairs, cfg.seed)
    return grid_search(data, cfg.hyper_grid, RELATIVE, fcfg, cfg.mode, cfg.threshold, cfg.stack_params,
                       cfg.seed, meta={"seed": cfg.seed, "run_config_hash": cfg.hash})


def train_baseline(items: Sequence[Item], au_id: int, fcfg: FeatureConfig, cfg: RunConfig) -> GridResult:
    data = frame_training_set(items, au_id, cfg.mode, cfg.border_margin)
    data = _subsample(data, cfg.max_frames, cfg.seed)
    return grid_search(data, cfg.hyper_grid, BASELINE, fcfg, cfg.mode, cfg.threshold, cfg.stack_params,
                       cfg.seed, meta={"seed": cfg.seed, "run_config_hash": cfg.hash})
