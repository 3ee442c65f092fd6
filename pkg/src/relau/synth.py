"""Synthetic AU sequences with known intensity curves.

Each subject gets a scaled, perturbed 66-point face, subject-constant skin
texture and permanent wrinkles, and one sequence per AU holding a single
trapezoidal episode. Wrinkles are oriented sinusoids drawn in face
coordinates, so the texture follows the face under head motion.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from .appearance import warp_patch
from .errors import ConfigError, MissingInputError
from .features import all_patch_specs
from .geometry import apply_pose, project
from .relabel import RelativeLabel, WindowConfig, labels_from_intensities
from .seqmodel import (AUAnnotation, CameraIntrinsics, Frame, LandmarkFrame, Patch, PoseVector,
                       SequenceBundle, quantize_level, round_sig)

N_LANDMARKS = 66
IMAGE_SIZE = 256
INTRINSICS = CameraIntrinsics(800.0, 128.0, 128.0)
FACE_DEPTH = 600.0


def _template() -> np.ndarray:
    """Neutral face in mm: x to the subject's left, y down, z away from the camera."""
    p = np.zeros((N_LANDMARKS, 3))
    phi = np.pi * np.arange(17) / 16
    p[:17] = np.c_[-70 * np.cos(phi), -10 + 105 * np.sin(phi), 40 - 20 * np.sin(phi)]
    u = np.linspace(0, 1, 5)
    p[17:22] = np.c_[-55 + 43 * u, -45 - 6 * np.sin(np.pi * u), np.full(5, -2.0)]
    p[22:27] = np.c_[12 + 43 * u, -45 - 6 * np.sin(np.pi * u[::-1]), np.full(5, -2.0)]
    p[27:31] = np.c_[np.zeros(4), [-35, -22, -10, 2], [-10, -15, -20, -25]]
    p[31:36] = np.c_[[-14, -7, 0, 7, 14], [10, 12, 13, 12, 10], [-8, -12, -15, -12, -8]]
    eye = np.array([[-12, 0], [-4, -4], [4, -4], [12, 0], [4, 4], [-4, 4]], float)
    p[36:42, :2] = eye + [-32, -28]
    p[42:48, :2] = eye + [32, -28]
    p[48:60, :2] = [[-25, 40], [-16, 35], [-6, 33], [0, 34], [6, 33], [16, 35],
                    [25, 40], [16, 46], [6, 49], [0, 50], [-6, 49], [-16, 46]]
    p[48:60, 2] = -10
    p[60:66, :2] = [[-8, 38], [0, 38], [8, 38], [8, 42], [0, 42], [-8, 42]]
    p[60:66, 2] = -8
    return p


def _displacements() -> Dict[int, np.ndarray]:
    """Landmark motion (mm) at full intensity for each synthetic AU."""
    d = {au: np.zeros((N_LANDMARKS, 3)) for au in (1, 2, 4, 12, 15, 25)}
    for (r, l), dy in zip(((21, 22), (20, 23), (19, 24)), (-6.0, -4.0, -2.0)):
        d[1][[r, l], 1] = dy
    for (r, l), dy in zip(((17, 26), (18, 25), (19, 24)), (-5.0, -5.0, -3.0)):
        d[2][[r, l], 1] = dy
    for (r, l), (dx, dy) in zip(((21, 22), (20, 23), (19, 24)), ((3.0, 4.0), (2.0, 4.0), (1.0, 3.0))):
        d[4][r] = [dx, dy, 0]
        d[4][l] = [-dx, dy, 0]
    d[12][48] = [-6, -4, 0]
    d[12][54] = [6, -4, 0]
    d[12][[49, 59], :2] = [[-2, -1], [-2, -1]]
    d[12][[53, 55], :2] = [[2, -1], [2, -1]]
    d[15][[48, 54], 1] = 5.0
    d[15][[59, 55], 1] = 2.0
    d[25][55:60, 1] = 6.0
    d[25][63:66, 1] = 6.0
    d[25][60:63, 1] = -1.0
    d[25][6:11, 1] = 2.0
    return d


# (patch regions, line-normal angle, wavelength mm, amplitude grey levels)
AU_TEXTURE: Dict[int, Tuple[Tuple[str, ...], float, float, float]] = {
    1: (("glabella", "brow_r"), math.pi / 2, 6.0, 24.0),
    2: (("brow_r", "brow_l"), math.pi / 3, 7.0, 24.0),
    4: (("glabella", "brow_l"), 0.0, 6.0, 24.0),
    12: (("nasolabial_r", "nasolabial_l"), math.pi / 6, 7.0, 24.0),
    15: (("chin", "mouth"), 3 * math.pi / 4, 6.0, 24.0),
    25: (("mouth", "chin"), math.pi / 2, 8.0, 24.0),
}


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_subjects: int = 8
    frames: int = 30
    aus: Tuple[int, ...] = (1, 2, 4, 12, 15, 25)
    onset: int = 5
    apex: int = 6
    offset: int = 5
    peak: float = 1.0
    peak_jitter: float = 0.2        # peak drawn from [peak - jitter, peak]
    au_amplitude: float = 1.0       # scales every episode; 0 renders no AU activity at all
    start_jitter: int = 3
    scale_range: Tuple[float, float] = (0.88, 1.12)
    shape_offset: float = 0.5       # neutral offsets along AU motion, fraction of full motion
    shape_noise: float = 1.0        # mm, per-landmark subject idiosyncrasy
    wrinkle_amplitude: float = 1.0  # permanent wrinkles, multiple of AU texture amplitude
    skin_amplitude: float = 8.0
    translation_amplitude: Tuple[float, float, float] = (5.0, 5.0, 20.0)
    rotation_amplitude: float = 0.08
    landmark_jitter: float = 0.3
    pixel_noise: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "aus", tuple(int(a) for a in self.aus))
        object.__setattr__(self, "scale_range", tuple(float(v) for v in self.scale_range))
        object.__setattr__(self, "translation_amplitude", tuple(float(v) for v in self.translation_amplitude))
        for name in ("n_subjects", "frames", "onset", "apex", "offset"):
            if getattr(self, name) < 1:
                raise ConfigError(f"synth {name} must be positive")
        if not 0 < self.peak <= 1:
            raise ConfigError("synth peak level must lie in (0, 1]")
        if not 0 <= self.peak_jitter < self.peak or self.peak_jitter > self.peak:
            raise ConfigError("synth peak_jitter must lie in [0, peak)")
        if not 0 <= self.au_amplitude <= 1:
            raise ConfigError("synth au_amplitude must lie in [0, 1]")
        if self.start_jitter < 0:
            raise ConfigError("synth start_jitter must be nonnegative")
        if self.onset + self.apex + self.offset + self.start_jitter > self.frames:
            raise ConfigError("episode plus start jitter does not fit in the sequence")
        unknown = set(self.aus) - set(AU_TEXTURE)
        if unknown or not self.aus:
            raise ConfigError(f"synth supports AUs {sorted(AU_TEXTURE)}, got {sorted(self.aus)}")
        lo, hi = self.scale_range
        if not 0 < lo <= hi:
            raise ConfigError("synth scale_range must be positive and ordered")
        for name in ("shape_offset", "shape_noise", "wrinkle_amplitude", "skin_amplitude",
                     "rotation_amplitude", "landmark_jitter", "pixel_noise"):
            if getattr(self, name) < 0:
                raise ConfigError(f"synth {name} must be nonnegative")
        if self.rotation_amplitude >= 1.0:
            raise ConfigError("synth rotation_amplitude must stay below 1 rad")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown synth config keys: {sorted(extra)}")
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**kw)


def trapezoid(n: int, start: int, onset: int, apex: int, offset: int, peak: float) -> np.ndarray:
    """Linear onset over ``onset`` frames, ``apex`` frames at ``peak``, linear offset."""
    t = np.arange(n, dtype=float)
    up = np.clip((t - start + 1) / onset, 0, 1)
    down = np.clip((start + onset + apex + offset - t - 1) / offset, 0, 1)
    return peak * np.minimum(up, down)


class _Waves:
    """Sum of oriented sinusoids evaluated at face coordinates, with optional Gaussian windows."""

    def __init__(self):
        self.k, self.phase, self.amp, self.center, self.sigma = [], [], [], [], []

    def add(self, angle, wavelength, phase, amp, center=(0.0, 0.0), sigma=np.inf):
        w = 2 * np.pi / wavelength
        self.k.append((w * math.cos(angle), w * math.sin(angle)))
        self.phase.append(phase)
        self.amp.append(amp)
        self.center.append(center)
        self.sigma.append(sigma)

    def __call__(self, u, v, scales=None):
        out = np.zeros_like(u)
        for i, (kx, ky) in enumerate(self.k):
            a = self.amp[i] * (1.0 if scales is None else scales[i])
            if a == 0:
                continue
            val = np.cos(kx * u + ky * v + self.phase[i])
            s = self.sigma[i]
            if np.isfinite(s):
                cx, cy = self.center[i]
                val = val * np.exp(-((u - cx) ** 2 + (v - cy) ** 2) / (2 * s * s))
            out += a * val
        return out


@dataclass
class _Subject:
    subject_id: str
    base: np.ndarray
    skin: _Waves
    wrinkles: _Waves                     # permanent, always on
    au_waves: Dict[int, _Waves] = field(default_factory=dict)


def _region_windows(base: np.ndarray, specs) -> Dict[str, Tuple[Tuple[float, float], float]]:
    out = {}
    for spec in specs:
        q = base[list(spec.quad), :2]
        c = q.mean(axis=0)
        radius = float(np.sqrt(((q - c) ** 2).sum(axis=1)).mean())
        out[spec.patch_id] = ((float(c[0]), float(c[1])), 0.7 * radius)
    return out


def _make_subject(idx: int, cfg: SynthConfig, specs, disp) -> _Subject:
    rng = np.random.default_rng([cfg.seed, idx])
    scale = rng.uniform(*cfg.scale_range)
    base = _template() * scale + rng.normal(0, cfg.shape_noise, (N_LANDMARKS, 3)) * [1, 1, 0]
    for au in sorted(disp):
        base += rng.uniform(-cfg.shape_offset, cfg.shape_offset) * disp[au] * scale
    skin = _Waves()
    for _ in range(24):
        skin.add(rng.uniform(0, np.pi), rng.uniform(3.0, 12.0), rng.uniform(0, 2 * np.pi),
                 cfg.skin_amplitude * math.sqrt(2.0 / 24))
    # every texture region exists on every face, whichever AUs are rendered
    windows = _region_windows(base, all_patch_specs())
    wrinkles = _Waves()
    au_waves = {}
    for au in sorted(AU_TEXTURE):
        regions, angle, wavelength, amp = AU_TEXTURE[au]
        waves = _Waves()
        strength = rng.uniform(0, cfg.wrinkle_amplitude)
        for rid in regions:
            center, sigma = windows[rid]
            waves.add(angle, wavelength * scale, rng.uniform(0, 2 * np.pi), amp, center, sigma)
            wrinkles.add(angle + rng.normal(0, 0.15), wavelength * scale * rng.uniform(0.9, 1.1),
                         rng.uniform(0, 2 * np.pi), amp * strength, center, sigma)
        au_waves[au] = waves
    return _Subject(f"S{idx + 1:03d}", base, skin, wrinkles, au_waves)


def _pose_track(rng, n: int, cfg: SynthConfig) -> List[PoseVector]:
    t = np.arange(n, dtype=float)
    out = np.zeros((n, 6))
    amps = list(cfg.translation_amplitude) + [cfg.rotation_amplitude] * 3
    for c, amp in enumerate(amps):
        if amp == 0:
            continue
        for _ in range(2):
            period = rng.uniform(n / 2, 2 * n)
            out[:, c] += 0.5 * amp * np.sin(2 * np.pi * t / period + rng.uniform(0, 2 * np.pi))
    out[:, 2] += FACE_DEPTH
    out = round_sig(out, 9)
    return [PoseVector(tuple(r[:3]), tuple(r[3:])) for r in out]


def _render(subject: _Subject, shape2d_img: np.ndarray, intensities: Dict[int, float],
            bbox, rng, pixel_noise: float) -> np.ndarray:
    """Grey image whose texture is pinned to the subject's face coordinates."""
    img = np.full((IMAGE_SIZE, IMAGE_SIZE), 128.0)
    x0, y0, x1, y1 = bbox
    # least-squares affine map from image coordinates back to face coordinates
    src = np.c_[shape2d_img, np.ones(len(shape2d_img))]
    m, *_ = np.linalg.lstsq(src, subject.base[:, :2], rcond=None)
    ys, xs = np.mgrid[y0:y1, x0:x1].astype(float)
    u = m[0, 0] * xs + m[1, 0] * ys + m[2, 0]
    v = m[0, 1] * xs + m[1, 1] * ys + m[2, 1]
    tex = subject.skin(u, v) + subject.wrinkles(u, v)
    for au, level in intensities.items():
        if level > 0:
            tex += level * subject.au_waves[au](u, v)
    img[y0:y1, x0:x1] += tex
    if pixel_noise > 0:
        img += rng.normal(0, pixel_noise, img.shape)
    return np.clip(img, 0, 255)


def _sequence(subject: _Subject, idx: int, seq_no: int, au: int, cfg: SynthConfig, specs, disp) -> SequenceBundle:
    rng = np.random.default_rng([cfg.seed, idx, seq_no + 1])
    n = cfg.frames
    start = int(rng.integers(0, cfg.start_jitter + 1)) + (n - cfg.onset - cfg.apex - cfg.offset - cfg.start_jitter) // 2
    peak = cfg.peak - rng.uniform(0, cfg.peak_jitter)
    curves = {a: np.zeros(n) for a in cfg.aus}
    curves[au] = cfg.au_amplitude * trapezoid(n, start, cfg.onset, cfg.apex, cfg.offset, peak)
    poses = _pose_track(rng, n, cfg)
    scale = float(np.ptp(subject.base[:17, 0]) / 140.0)
    frames = []
    for t in range(n):
        shape = subject.base.copy()
        for a in cfg.aus:
            if curves[a][t] > 0:
                shape += curves[a][t] * disp[a] * scale
        shape[:, :2] += rng.normal(0, cfg.landmark_jitter, (N_LANDMARKS, 2))
        cam = round_sig(apply_pose(shape, poses[t]), 9)
        img_pts = project(cam, INTRINSICS)
        quads = np.vstack([img_pts[list(s.quad)] for s in specs])
        lo = np.maximum(np.floor(quads.min(axis=0)).astype(int) - 3, 0)
        hi = np.minimum(np.ceil(quads.max(axis=0)).astype(int) + 4, IMAGE_SIZE)
        img = _render(subject, img_pts, {a: curves[a][t] for a in cfg.aus}, (lo[0], lo[1], hi[0], hi[1]),
                      rng, cfg.pixel_noise)
        patches = {}
        for s in specs:
            px = warp_patch(img_pts[list(s.quad)], img, s, poses[t]).pixels
            patches[s.patch_id] = Patch(np.clip(np.rint(px), 0, 255).astype(np.uint8), s.patch_id)
        frames.append(Frame(t, LandmarkFrame(cam), poses[t], patches))
    annotations = tuple(AUAnnotation(a, tuple(quantize_level(v) for v in curves[a])) for a in cfg.aus)
    truth = {a: round_sig(curves[a], 9) for a in cfg.aus}
    return SequenceBundle(subject.subject_id, f"AU{au:02d}", tuple(frames), annotations, INTRINSICS,
                          tuple(specs), truth)


def subject_bundles(cfg: SynthConfig, idx: int) -> List[SequenceBundle]:
    """All sequences of subject ``idx``; depends only on ``(cfg.seed, idx)``."""
    specs = all_patch_specs(aus=cfg.aus)
    disp = _displacements()
    subject = _make_subject(idx, cfg, specs, disp)
    return [_sequence(subject, idx, k, au, cfg, specs, disp) for k, au in enumerate(cfg.aus)]


def generate(cfg: SynthConfig = SynthConfig(), workers: int = 1) -> List[SequenceBundle]:
    """Synthetic corpus: ``n_subjects`` subjects with one single-episode sequence per AU."""
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda i: subject_bundles(cfg, i), range(cfg.n_subjects)))
    else:
        parts = [subject_bundles(cfg, i) for i in range(cfg.n_subjects)]
    return [b for part in parts for b in part]


def ground_truth_relative(bundle: SequenceBundle, au_id: int, cfg: WindowConfig) -> List[RelativeLabel]:
    """Relative labels from the generator's continuous intensity curve."""
    if bundle.truth is None or au_id not in bundle.truth:
        raise MissingInputError(f"{bundle.key}: no continuous ground truth for AU{au_id}")
    return labels_from_intensities(bundle.truth[au_id], cfg)
