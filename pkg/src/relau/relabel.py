"""Pair-sample construction and windowed aggregation of pairwise change
scores into per-frame relative labels (increase / decrease / no change)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from .appearance import pair_appearance
from .errors import ConfigError, ExtractionError, FormatError
from .features import FrameFeatures
from .geometry import pair_geometric
from .seqmodel import SequenceBundle

INC, DEC, SAME = "inc", "dec", "same"
LABELS = (INC, DEC, SAME)
ARROWS = {INC: "↑", DEC: "↓", SAME: "↔"}


@dataclass(frozen=True)
class WindowConfig:
    w: int = 10
    T: float = 0.15

    def __post_init__(self):
        if int(self.w) != self.w or self.w < 2 or self.w % 2:
            raise ConfigError(f"window size must be an even integer >= 2, got {self.w}")
        if not 0 < self.T < 1:
            raise ConfigError(f"threshold must lie in (0, 1), got {self.T}")

    @property
    def half(self) -> int:
        return self.w // 2


@dataclass(frozen=True)
class RelativeLabel:
    label: str
    score: float
    comparisons_used: int
    boundary_flag: bool

    @property
    def arrow(self) -> str:
        return ARROWS[self.label]


@dataclass(frozen=True, eq=False)
class PairSample:
    t: int              # frame index of the first image
    t2: int             # frame index of the second image
    target: float
    g: Optional[np.ndarray] = None
    a: Optional[np.ndarray] = None
    subject_id: str = ""
    sequence_id: str = ""


def pair_target(intensity_first: float, intensity_second: float) -> float:
    """Intensity change from the first frame to the second."""
    for v in (intensity_first, intensity_second):
        if not 0.0 <= v <= 1.0:
            raise FormatError(f"intensity {v!r} outside [0, 1]")
    return float(intensity_second) - float(intensity_first)


def label_from_score(s: float, T: float) -> str:
    if s > T:
        return INC
    if s < -T:
        return DEC
    return SAME


def presence_transitions(present: Sequence[bool]) -> List[int]:
    """Positions whose presence state differs from the previous frame."""
    p = np.asarray(present, dtype=bool)
    return [int(i) for i in np.flatnonzero(p[1:] != p[:-1]) + 1]


def usable_positions(present: Sequence[bool], border_margin: int) -> List[int]:
    """Frame positions farther than ``border_margin - 1`` frames from every transition frame."""
    n = len(present)
    trans = presence_transitions(present)
    return [i for i in range(n) if all(abs(i - tr) >= border_margin for tr in trans)]


def sample_pairs(bundle: SequenceBundle, au_id: int, border_margin: int = 2, mode: str = "continuous",
                 max_gap: Optional[int] = None, features: Optional[FrameFeatures] = None) -> List[PairSample]:
    """Forward frame pairs (first earlier than second) between usable frames.

    Frames close to a presence transition are skipped. Targets are the
    intensity change under ``mode``; in discrete mode that is +1 for
    absent-to-present, -1 for present-to-absent and 0 otherwise.
    """
    levels = bundle.intensities(au_id, mode)
    present = bundle.intensities(au_id, "discrete") > 0
    usable = usable_positions(present, border_margin)
    if len(usable) < 2:
        raise ExtractionError(f"{bundle.key}: no usable frames for AU{au_id} after border exclusion")
    idx = [f.index for f in bundle.frames]
    out = []
    for ii, p in enumerate(usable):
        for q in usable[ii + 1:]:
            if max_gap is not None and q - p > max_gap:
                break
            g = a = None
            if features is not None:
                g = pair_geometric(features.geometric[p], features.geometric[q])
                a = pair_appearance(features.appearance[p], features.appearance[q])
            out.append(PairSample(idx[p], idx[q], pair_target(levels[p], levels[q]), g, a,
                                  bundle.subject_id, bundle.sequence_id))
    return out


ScoreSource = Union[np.ndarray, Callable[[int, int], float]]


def aggregate_relative(scores: ScoreSource, t: int, cfg: WindowConfig, n_frames: int) -> RelativeLabel:
    """Relative label of frame position ``t`` from prior-vs-next pair scores.

    ``scores[a, b]`` (or ``scores(a, b)``) is the change score of the pair
    (frame a, frame b). Windows cut by the sequence ends are averaged over
    the pairs that exist.
    """
    if not 0 <= t < n_frames:
        raise ConfigError(f"frame position {t} outside sequence of {n_frames} frames")
    get = scores if callable(scores) else (lambda a, b: scores[a, b])
    h = cfg.half
    n_prev = min(h, t)
    n_next = min(h, n_frames - 1 - t)
    if n_prev == 0 or n_next == 0:
        return RelativeLabel(SAME, 0.0, 0, True)
    total = 0.0
    for i in range(1, n_prev + 1):
        for j in range(1, n_next + 1):
            total += get(t - i, t + j)
    m = n_prev * n_next
    factor = 4.0 / (cfg.w * cfg.w) if m == h * h else 1.0 / m
    s = total * factor
    return RelativeLabel(label_from_score(s, cfg.T), s, m, False)


def window_pairs(n_frames: int, cfg: WindowConfig) -> List[tuple]:
    """Every (first, second) position pair any frame's window compares, sorted."""
    h = cfg.half
    pairs = set()
    for t in range(n_frames):
        for i in range(1, min(h, t) + 1):
            for j in range(1, min(h, n_frames - 1 - t) + 1):
                pairs.add((t - i, t + j))
    return sorted(pairs)


def aggregate_sequence(score_matrix: np.ndarray, cfg: WindowConfig) -> List[RelativeLabel]:
    n = score_matrix.shape[0]
    return [aggregate_relative(score_matrix, t, cfg, n) for t in range(n)]


def intensity_pair_matrix(intensities: Sequence[float]) -> np.ndarray:
    """``M[a, b] = intensity[b] - intensity[a]`` for every position pair."""
    v = np.asarray(intensities, dtype=float)
    if np.any((v < 0) | (v > 1)):
        raise FormatError("intensities must lie in [0, 1]")
    return v[None, :] - v[:, None]


def labels_from_intensities(intensities: Sequence[float], cfg: WindowConfig) -> List[RelativeLabel]:
    return aggregate_sequence(intensity_pair_matrix(intensities), cfg)


def annotation_relative(bundle: SequenceBundle, au_id: int, cfg: WindowConfig,
                        mode: str = "continuous") -> List[RelativeLabel]:
    """Reference relative labels derived from a bundle's annotations."""
    return labels_from_intensities(bundle.intensities(au_id, mode), cfg)


def predict_sequence(model, bundle: SequenceBundle, cfg: WindowConfig,
                     features: Optional[FrameFeatures] = None, workers: int = 1) -> List[RelativeLabel]:
    """Relative labels for every frame using a trained pairwise scorer.

    Each window pair is scored once and cached in a score matrix.
    """
    from .features import extract_features

    if features is None:
        features = extract_features(bundle, model.features, workers=workers)
    n = len(bundle.frames)
    pairs = window_pairs(n, cfg)
    scores = np.zeros((n, n))
    if pairs:
        first = np.array([p for p, _ in pairs])
        second = np.array([q for _, q in pairs])
        c = model.pair_scores(features, first, second)
        scores[first, second] = c
    return aggregate_sequence(scores, cfg)


@dataclass(frozen=True, eq=False)
class BaselinePrediction:
    intensities: np.ndarray
    labels: List[RelativeLabel]
    pair_matrix: np.ndarray

    def pair_label(self, a: int, b: int, T: float) -> int:
        from .learner import classify_pair

        return classify_pair(self.pair_matrix[a, b], T)


def baseline_predict(model, bundle: SequenceBundle, cfg: WindowConfig,
                     features: Optional[FrameFeatures] = None, workers: int = 1) -> BaselinePrediction:
    """Frame-based comparison path: per-frame intensities, then the same
    pairwise differencing and window aggregation as the relative path."""
    from .features import extract_features

    if features is None:
        features = extract_features(bundle, model.features, workers=workers)
    inten = model.frame_scores(features)
    mat = intensity_pair_matrix(inten)
    return BaselinePrediction(inten, aggregate_sequence(mat, cfg), mat)
