"""Per-AU feature configuration and per-frame extraction (geometry + LGBP)."""
from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .appearance import GaborBank, appearance_vector, load_patch_specs
from .errors import ConfigError, ExtractionError, RelauError
from .geometry import DistancePairConfig, frame_geometry, load_distance_config
from .seqmodel import PatchSpec, SequenceBundle


def packaged_config_dir() -> Path:
    return Path(str(resources.files("relau") / "config"))


def available_aus(config_dir=None) -> List[int]:
    root = Path(config_dir) if config_dir else packaged_config_dir()
    geo = {int(p.stem) for p in (root / "geometry").glob("*.csv")}
    pat = {int(p.stem) for p in (root / "patches").glob("*.csv")}
    return sorted(geo & pat)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class FeatureConfig:
    au_id: int
    distances: DistancePairConfig
    patches: Tuple[PatchSpec, ...]
    bank: GaborBank

    def to_dict(self) -> dict:
        return {
            "au_id": self.au_id,
            "pairs": [list(p) for p in self.distances.pairs],
            "patches": [s.to_dict() for s in self.patches],
            "gabor": self.bank.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        au = int(d["au_id"])
        return cls(
            au,
            DistancePairConfig(au, tuple(tuple(p) for p in d["pairs"])),
            tuple(PatchSpec.from_dict(s) for s in d["patches"]),
            GaborBank.from_dict(d["gabor"]),
        )

    @property
    def hash(self) -> str:
        return sha256_text(canonical_json(self.to_dict()))

    @property
    def appearance_length(self) -> int:
        return len(self.bank) * len(self.patches) * 256


def load_feature_config(au_id: int, config_dir=None, bank: Optional[GaborBank] = None) -> FeatureConfig:
    root = Path(config_dir) if config_dir else packaged_config_dir()
    gpath = root / "geometry" / f"{au_id}.csv"
    ppath = root / "patches" / f"{au_id}.csv"
    if not gpath.is_file() or not ppath.is_file():
        raise ConfigError(f"no feature configuration for AU{au_id} under {root}")
    return FeatureConfig(au_id, load_distance_config(gpath, au_id),
                         tuple(load_patch_specs(ppath, au_id)), bank or GaborBank())


def all_patch_specs(config_dir=None, aus: Optional[Sequence[int]] = None) -> List[PatchSpec]:
    """Distinct patch specs across the configured AUs, first occurrence wins."""
    seen = {}
    for au in aus or available_aus(config_dir):
        for spec in load_feature_config(au, config_dir).patches:
            seen.setdefault(spec.patch_id, spec)
    return list(seen.values())


@dataclass(frozen=True, eq=False)
class FrameFeatures:
    """Per-frame features of one bundle for one AU, rows in frame order."""

    geometric: np.ndarray   # (n_frames, n_pairs)
    appearance: np.ndarray  # (n_frames, 30 * n_patches * 256)
    frames: np.ndarray      # frame indices

    def __len__(self):
        return len(self.frames)


def _one_frame(frame, fcfg: FeatureConfig):
    try:
        return frame_geometry(frame, fcfg.distances), appearance_vector(frame, fcfg.patches, fcfg.bank)
    except ExtractionError as exc:
        if exc.frame is None:
            raise ExtractionError(str(exc), frame=frame.index) from None
        raise
    except RelauError as exc:
        raise ExtractionError(str(exc), frame=frame.index) from None


def extract_features(bundle: SequenceBundle, fcfg: FeatureConfig, workers: int = 1) -> FrameFeatures:
    """Geometric and appearance features for every frame; output order never depends on ``workers``."""
    frames = bundle.frames
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda f: _one_frame(f, fcfg), frames))
    else:
        rows = [_one_frame(f, fcfg) for f in frames]
    g = np.vstack([r[0][None, :] for r in rows])
    a = np.vstack([r[1][None, :] for r in rows])
    return FrameFeatures(g, a, np.array([f.index for f in frames]))
