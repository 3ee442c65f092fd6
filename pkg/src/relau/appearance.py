"""Patch warping and LGBP (LBP-on-Gabor-magnitude) histogram features."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ExtractionError, FormatError, WarpError
from .seqmodel import Frame, Patch, PatchSpec, PoseVector

N_BINS = 256

# neighbour offsets (drow, dcol), bit 0 = east, counter-clockwise
LBP_NEIGHBOURS = (
    (0, 1),    # east
    (-1, 1),   # north-east
    (-1, 0),   # north
    (-1, -1),  # north-west
    (0, -1),   # west
    (1, -1),   # south-west
    (1, 0),    # south
    (1, 1),    # south-east
)


# ---------------------------------------------------------------------------
# warping


def _bilinear(src: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    h, w = src.shape
    x = np.clip(x, 0.0, w - 1.0)
    y = np.clip(y, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(x).astype(int), w - 2) if w > 1 else np.zeros_like(x, dtype=int)
    y0 = np.minimum(np.floor(y).astype(int), h - 2) if h > 1 else np.zeros_like(y, dtype=int)
    fx = x - x0
    fy = y - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    top = src[y0, x0] * (1 - fx) + src[y0, x1] * fx
    bottom = src[y1, x0] * (1 - fx) + src[y1, x1] * fx
    return top * (1 - fy) + bottom * fy


def _affine_from_triangle(dst_tri: np.ndarray, src_tri: np.ndarray) -> np.ndarray:
    """3x3 matrix mapping homogeneous destination points onto the source triangle."""
    d = np.vstack([dst_tri.T, np.ones(3)])
    s = np.vstack([src_tri.T, np.ones(3)])
    return s @ np.linalg.inv(d)


def _tri_area(tri: np.ndarray) -> float:
    (x0, y0), (x1, y1), (x2, y2) = tri
    return 0.5 * ((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0))


def warp_patch(quad_points, source, spec: PatchSpec, pose: Optional[PoseVector] = None) -> Patch:
    """Warp the image quadrilateral ``quad_points`` (4 projected (x, y) points,
    ordered v0..v3) into a ``spec.width`` x ``spec.height`` patch.

    The quad is split along the v0-v2 diagonal; output pixels above the
    diagonal come from triangle (v0, v1, v2), the rest from (v0, v2, v3).
    Source reads are bilinear and clamp at the image border. ``pose`` is used
    only to reject faces turned away from the camera.
    """
    src = np.asarray(source, dtype=float)
    q = np.asarray(quad_points, dtype=float)
    if q.shape != (4, 2):
        raise WarpError(f"quad must be 4 (x, y) points, got shape {q.shape}")
    if pose is not None:
        pitch, yaw, _ = pose.rotation
        if abs(pitch) >= math.pi / 2 or abs(yaw) >= math.pi / 2:
            raise WarpError(f"patch {spec.patch_id!r} faces away from the camera")
    W, H = spec.width, spec.height
    corners = np.array([[0.0, 0.0], [W - 1.0, 0.0], [W - 1.0, H - 1.0], [0.0, H - 1.0]])
    tri_a, tri_b = (0, 1, 2), (0, 2, 3)
    for tri in (tri_a, tri_b):
        a = _tri_area(q[list(tri)])
        if not abs(a) > 1e-9:
            raise WarpError(f"patch {spec.patch_id!r}: degenerate triangle {tri}")
    if np.sign(_tri_area(q[list(tri_a)])) != np.sign(_tri_area(q[list(tri_b)])):
        raise WarpError(f"patch {spec.patch_id!r}: quad is not simple (folded diagonal)")

    ys, xs = np.mgrid[0:H, 0:W].astype(float)
    # above the (0,0)-(W-1,H-1) diagonal: y*(W-1) <= x*(H-1)
    upper = ys * (W - 1) <= xs * (H - 1)
    homog = np.stack([xs, ys, np.ones_like(xs)])
    m_a = _affine_from_triangle(corners[list(tri_a)], q[list(tri_a)])
    m_b = _affine_from_triangle(corners[list(tri_b)], q[list(tri_b)])
    src_a = np.einsum("ij,jhw->ihw", m_a, homog)
    src_b = np.einsum("ij,jhw->ihw", m_b, homog)
    sx = np.where(upper, src_a[0], src_b[0])
    sy = np.where(upper, src_a[1], src_b[1])
    return Patch(_bilinear(src, sx, sy), spec.patch_id)


# ---------------------------------------------------------------------------
# Gabor bank


def default_scales() -> Tuple[float, ...]:
    return tuple(math.pi / 2 * 2 ** (-s / 2) for s in range(5))


def default_orientations() -> Tuple[float, ...]:
    return tuple(o * math.pi / 6 for o in range(6))


def _support_side(beta: float, sigma: float, limit: int) -> int:
    side = math.ceil(8 * sigma / beta)
    if side % 2 == 0:
        side += 1
    cap = limit if limit % 2 == 1 else limit - 1
    return max(1, min(side, cap))


def gabor_kernel(beta: float, theta: float, sigma: float, side: int) -> np.ndarray:
    """Complex kernel ``f1 + i f2`` on a ``side`` x ``side`` grid centred at 0.

    The DC offset is recomputed on the truncated grid so that the real part
    sums to zero exactly; for an untruncated, finely sampled grid this equals
    ``exp(-sigma**2 / 2)``.
    """
    half = side // 2
    v, u = np.mgrid[-half:half + 1, -half:half + 1].astype(float)  # v: rows (y), u: cols (x)
    kx, ky = beta * math.cos(theta), beta * math.sin(theta)
    k2 = beta * beta
    envelope = (k2 / sigma ** 2) * np.exp(-(u * u + v * v) * k2 / (2 * sigma ** 2))
    phase = kx * u + ky * v
    dc = float(np.sum(envelope * np.cos(phase)) / np.sum(envelope))
    real = envelope * (np.cos(phase) - dc)
    imag = envelope * np.sin(phase)
    return real + 1j * imag


@dataclass(frozen=True)
class GaborBank:
    scales: Tuple[float, ...] = field(default_factory=default_scales)
    orientations: Tuple[float, ...] = field(default_factory=default_orientations)
    sigma: float = math.pi

    def __post_init__(self):
        if len(self.scales) != 5 or len(self.orientations) != 6:
            raise FormatError("a Gabor bank has exactly 5 scales and 6 orientations")
        if not self.sigma > 0:
            raise FormatError("Gabor sigma must be positive")
        object.__setattr__(self, "_cache", {})

    @property
    def filters(self) -> List[Tuple[float, float]]:
        """(beta, theta) per filter, scale-major."""
        return [(b, t) for b in self.scales for t in self.orientations]

    def __len__(self):
        return len(self.scales) * len(self.orientations)

    def kernels(self, shape: Tuple[int, int]) -> List[np.ndarray]:
        limit = min(shape)
        return [gabor_kernel(b, t, self.sigma, _support_side(b, self.sigma, limit)) for b, t in self.filters]

    def _plan(self, shape: Tuple[int, int]):
        plan = self._cache.get(shape)
        if plan is None:
            kernels = self.kernels(shape)
            pad = max(k.shape[0] for k in kernels) // 2
            ph, pw = shape[0] + 2 * pad, shape[1] + 2 * pad
            spectra = np.empty((len(kernels), ph, pw), dtype=complex)
            for n, k in enumerate(kernels):
                r = k.shape[0] // 2
                buf = np.zeros((ph, pw), dtype=complex)
                buf[:k.shape[0], :k.shape[1]] = k
                buf = np.roll(buf, (-r, -r), axis=(0, 1))  # centre tap at (0, 0)
                spectra[n] = np.fft.fft2(buf)
            plan = (pad, spectra)
            self._cache[shape] = plan
        return plan

    def to_dict(self) -> dict:
        return {"scales": list(self.scales), "orientations": list(self.orientations), "sigma": self.sigma}

    @classmethod
    def from_dict(cls, d: dict) -> "GaborBank":
        return cls(tuple(d["scales"]), tuple(d["orientations"]), float(d["sigma"]))


def gabor_responses(patch, bank: GaborBank) -> np.ndarray:
    """30 Gabor magnitude maps of ``patch`` as a ``(30, H, W)`` array.

    Convolution uses symmetric (half-sample) reflection padding and
    same-size output.
    """
    px = np.asarray(patch.pixels if isinstance(patch, Patch) else patch, dtype=float)
    if px.ndim != 2 or px.shape[0] < 3 or px.shape[1] < 3:
        raise ExtractionError(f"patch must be at least 3x3, got {px.shape}")
    pad, spectra = bank._plan(px.shape)
    padded = np.pad(px, pad, mode="symmetric")
    out = np.fft.ifft2(np.fft.fft2(padded)[None] * spectra)
    h, w = px.shape
    return np.abs(out[:, pad:pad + h, pad:pad + w])


# ---------------------------------------------------------------------------
# LBP


def lbp_codes(values) -> np.ndarray:
    m = np.asarray(values, dtype=float)
    if m.ndim != 2 or m.shape[0] < 3 or m.shape[1] < 3:
        raise ExtractionError(f"LBP needs a map of at least 3x3, got {m.shape}")
    h, w = m.shape
    center = m[1:-1, 1:-1]
    codes = np.zeros(center.shape, dtype=np.int64)
    for bit, (dr, dc) in enumerate(LBP_NEIGHBOURS):
        neighbour = m[1 + dr:h - 1 + dr, 1 + dc:w - 1 + dc]
        codes |= (neighbour >= center).astype(np.int64) << bit
    return codes


def lbp_histogram(values) -> np.ndarray:
    """256-bin histogram of plain 8-neighbour LBP codes over interior pixels."""
    return np.bincount(lbp_codes(values).ravel(), minlength=N_BINS).astype(float)


def lgbp_histograms(patch, bank: GaborBank) -> np.ndarray:
    """Concatenated LBP histograms of every Gabor magnitude map of one patch."""
    mags = gabor_responses(patch, bank)
    return np.concatenate([lbp_histogram(m) for m in mags])


def appearance_vector(frame: Frame, specs: Sequence[PatchSpec], bank: GaborBank) -> np.ndarray:
    """Length ``30 * len(specs) * 256`` LGBP vector for one frame, patches in spec order."""
    parts = []
    for spec in specs:
        patch = frame.patches.get(spec.patch_id)
        if patch is None:
            raise ExtractionError(f"missing patch {spec.patch_id!r}", frame=frame.index)
        parts.append(lgbp_histograms(patch, bank))
    return np.concatenate(parts) if parts else np.zeros(0)


def pair_appearance(a_first, a_second) -> np.ndarray:
    """Appearance change of a frame pair: second minus first."""
    a1, a2 = np.asarray(a_first, float), np.asarray(a_second, float)
    if a1.shape != a2.shape:
        raise ExtractionError(f"appearance vector lengths differ: {a1.shape} vs {a2.shape}")
    return a2 - a1


def load_patch_specs(path, au_id: int) -> List[PatchSpec]:
    specs = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#") or row[0].strip() == "patch_id":
                continue
            if len(row) != 7:
                raise FormatError(f"{path}: rows must be 'patch_id,i0,i1,i2,i3,W,H'")
            pid, *rest = row
            q = tuple(int(v) for v in rest[:4])
            specs.append(PatchSpec(pid.strip(), au_id, q, int(rest[4]), int(rest[5])))
    return specs


def save_patch_specs(specs: Sequence[PatchSpec], path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("patch_id,i0,i1,i2,i3,W,H\n")
        for s in specs:
            fh.write(",".join([s.patch_id, *map(str, s.quad), str(s.width), str(s.height)]) + "\n")
