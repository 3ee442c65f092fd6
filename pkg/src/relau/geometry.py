"""Rigid-motion removal, perspective projection and landmark-distance features."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple

import numpy as np

from .errors import BehindCameraError, FormatError, GeometryError
from .seqmodel import CameraIntrinsics, LandmarkFrame, PoseVector


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _points(landmarks) -> np.ndarray:
    if isinstance(landmarks, LandmarkFrame):
        return landmarks.points
    return np.asarray(landmarks, dtype=float)


def normalize_shape(landmarks, pose: PoseVector) -> np.ndarray:
    """Remove head translation and rotation from 3D landmarks.

    Points are row vectors: ``(p - r) @ Rz(-wz) @ Ry(-wy) @ Rx(-wx)``.
    Returns an ``(n, 3)`` array.
    """
    p = _points(landmarks)
    wx, wy, wz = pose.rotation
    m = rot_z(-wz) @ rot_y(-wy) @ rot_x(-wx)
    return (p - np.asarray(pose.translation)) @ m


def apply_pose(shape, pose: PoseVector) -> np.ndarray:
    """Inverse of :func:`normalize_shape`: place a normalized shape at ``pose``."""
    p = np.asarray(shape, dtype=float)
    wx, wy, wz = pose.rotation
    m = rot_x(wx) @ rot_y(wy) @ rot_z(wz)
    return p @ m + np.asarray(pose.translation)


def project(point, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Pinhole projection of one ``(3,)`` point or an ``(n, 3)`` array to pixels."""
    p = np.asarray(point, dtype=float)
    z = p[..., 2]
    if np.any(z <= 0):
        raise BehindCameraError("cannot project a point with Z <= 0")
    x = intrinsics.f * p[..., 0] / z + intrinsics.cx
    y = intrinsics.f * p[..., 1] / z + intrinsics.cy
    return np.stack([x, y], axis=-1)


@dataclass(frozen=True)
class DistancePairConfig:
    au_id: int
    pairs: Tuple[Tuple[int, int], ...]

    def __post_init__(self):
        pairs = tuple((int(i), int(j)) for i, j in self.pairs)
        seen = set()
        for i, j in pairs:
            if i == j or i < 0 or j < 0:
                raise FormatError(f"AU{self.au_id}: invalid landmark pair ({i}, {j})")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise FormatError(f"AU{self.au_id}: duplicate landmark pair ({i}, {j})")
            seen.add(key)
        object.__setattr__(self, "pairs", pairs)

    def check(self, n_points: int) -> None:
        for i, j in self.pairs:
            if i >= n_points or j >= n_points:
                raise GeometryError(
                    f"AU{self.au_id}: pair ({i}, {j}) out of range for {n_points} landmarks")


def geometric_features(shape, config: DistancePairConfig) -> np.ndarray:
    p = _points(shape)
    config.check(len(p))
    if not config.pairs:
        return np.zeros(0)
    idx = np.array(config.pairs)
    return np.linalg.norm(p[idx[:, 0]] - p[idx[:, 1]], axis=1)


def pair_geometric(g_first, g_second) -> np.ndarray:
    g1, g2 = np.asarray(g_first, float), np.asarray(g_second, float)
    if g1.shape != g2.shape:
        raise GeometryError(f"geometric feature lengths differ: {g1.shape} vs {g2.shape}")
    return np.concatenate([g1, g2])


def frame_geometry(frame, config: DistancePairConfig) -> np.ndarray:
    return geometric_features(normalize_shape(frame.landmarks, frame.pose), config)


def load_distance_config(path, au_id: int) -> DistancePairConfig:
    pairs: List[Tuple[int, int]] = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#") or row[0].strip() == "i":
                continue
            if len(row) != 2:
                raise FormatError(f"{path}: rows must be 'i,j'")
            pairs.append((int(row[0]), int(row[1])))
    return DistancePairConfig(au_id, tuple(pairs))


def save_distance_config(config: DistancePairConfig, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("i,j\n")
        for i, j in config.pairs:
            fh.write(f"{i},{j}\n")
