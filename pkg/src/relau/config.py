"""Run configuration: one JSON document, command-line flags override keys of the same name."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Tuple

from .errors import ConfigError, MissingInputError
from .features import canonical_json, sha256_text
from .learner import HyperGrid, StackParams
from .relabel import WindowConfig
from .synth import SynthConfig

MODES = ("continuous", "discrete")


def _default_grid() -> dict:
    # small enough for a full LOSO run on one core; HyperGrid() holds the wide default
    return {"C": [0.5, 2.0, 8.0], "gamma1": [2.0 ** -5, 2.0 ** -3], "gamma2": [2.0 ** -5, 2.0 ** -3],
            "validation_subjects": 1}


@dataclass(frozen=True)
class RunConfig:
    au: Tuple[int, ...] = (1, 2, 4, 12, 15, 25)
    window: int = 10
    threshold: float = 0.15
    mode: str = "continuous"
    seed: int = 0
    workers: int = 1
    out: str = "out"
    bundles: str = "bundles"
    features: Optional[str] = None      # None: <out>/features
    models: Optional[str] = None        # None: <out>/models
    config_dir: Optional[str] = None
    border_margin: int = 2
    max_gap: Optional[int] = None       # None: pairs up to one window apart
    zero_ratio: float = 1.5
    reverse_pairs: bool = True
    max_pairs: int = 800
    max_frames: int = 800
    skip_boundary: bool = True
    grid: dict = field(default_factory=_default_grid)
    stack: dict = field(default_factory=lambda: asdict(StackParams()))
    synth: dict = field(default_factory=lambda: SynthConfig().to_dict())

    def __post_init__(self):
        au = self.au if isinstance(self.au, (list, tuple)) else (self.au,)
        object.__setattr__(self, "au", tuple(int(a) for a in au))
        if not self.au or len(set(self.au)) != len(self.au):
            raise ConfigError("au must be a non-empty list of distinct AU ids")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.border_margin < 0:
            raise ConfigError("border_margin must be >= 0")
        if self.max_gap is not None and self.max_gap < 1:
            raise ConfigError("max_gap must be >= 1")
        if self.max_pairs < 2 or self.max_frames < 2:
            raise ConfigError("max_pairs and max_frames must be >= 2")
        if not self.zero_ratio > 0:
            raise ConfigError("zero_ratio must be positive")
        # building the typed views validates them
        self.window_config, self.hyper_grid, self.stack_params, self.synth_config

    # typed views -----------------------------------------------------------
    @property
    def window_config(self) -> WindowConfig:
        return WindowConfig(self.window, self.threshold)

    @property
    def hyper_grid(self) -> HyperGrid:
        extra = set(self.grid) - {"C", "gamma1", "gamma2", "validation_subjects"}
        if extra:
            raise ConfigError(f"unknown grid keys: {sorted(extra)}")
        d = dict(self.grid)
        for k in ("C", "gamma1", "gamma2"):
            if k in d:
                d[k] = tuple(d[k])
        return HyperGrid(**d)

    @property
    def stack_params(self) -> StackParams:
        extra = set(self.stack) - {f.name for f in fields(StackParams)}
        if extra:
            raise ConfigError(f"unknown stack keys: {sorted(extra)}")
        p = StackParams(**self.stack)
        if p.isomap_d < 1 or p.isomap_k < 1 or p.kcca_components < 1:
            raise ConfigError("stack dimensions must be positive")
        if not 0 < p.kappa <= 1:
            raise ConfigError("kappa must lie in (0, 1]")
        if p.epsilon < 0 or not p.tol > 0:
            raise ConfigError("epsilon must be >= 0 and tol > 0")
        return p

    @property
    def synth_config(self) -> SynthConfig:
        return SynthConfig.from_dict(self.synth)

    @property
    def pair_gap(self) -> int:
        return self.max_gap if self.max_gap is not None else self.window

    # serialisation ----------------------------------------------------------
    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["au"] = list(self.au)
        return d

    def result_dict(self) -> dict:
        """Every key that can change results; paths and the worker count are left out."""
        d = self.to_dict()
        for k in ("workers", "out", "bundles", "features", "models"):
            d.pop(k)
        return d

    @property
    def hash(self) -> str:
        return sha256_text(canonical_json(self.result_dict()))

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        names = {f.name for f in fields(cls)}
        extra = set(d) - names
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        base = cls()
        merged = {}
        for k, v in d.items():
            if k in ("grid", "stack", "synth"):
                if not isinstance(v, dict):
                    raise ConfigError(f"config key {k!r} must be an object")
                sub = dict(getattr(base, k))
                sub.update(v)
                v = sub
            merged[k] = v
        try:
            return replace(base, **merged)
        except (TypeError, ValueError) as exc:  # wrong value types
            raise ConfigError(f"invalid config value: {exc}") from None

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return RunConfig.from_dict({**self.to_dict(), **kw}) if kw else self


def load_run_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig()
    p = Path(path)
    if not p.is_file():
        raise MissingInputError(f"config file {p} not found")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from None
    return RunConfig.from_dict(data)
