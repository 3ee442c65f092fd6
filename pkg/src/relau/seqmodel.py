"""Sequence domain types, FACS intensity mapping and the on-disk bundle format.

A bundle directory looks like::

    manifest.json
    landmarks/<t>.csv          X,Y,Z per row
    pose/<t>.csv               r_x,r_y,r_z,w_x,w_y,w_z
    patches/<t>_<patch_id>.pgm binary 8-bit PGM
    annotations.csv            frame,au_id,level
    truth.csv                  frame,au_id,value   (optional, synthetic data)
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (
    AnnotationLengthError,
    BundleError,
    FormatError,
    FrameOrderError,
    LandmarkCountError,
    MissingFileError,
)

BUNDLE_FORMAT = "relau-bundle/1"

FACS_LEVELS = ("absent", "A", "B", "C", "D", "E")
_LEVEL_VALUES = {
    "absent": 0.0,
    "A": 0.580,
    "B": 0.685,
    "C": 0.790,
    "D": 0.895,
    "E": 1.0,
}

Level = Union[str, float]


def intensity_value(level: Level, mode: str = "continuous") -> float:
    """Map a FACS level (or a continuous intensity) onto [0, 1].

    In ``"discrete"`` mode only presence matters: any present level maps to 1.
    """
    if isinstance(level, str):
        try:
            value = _LEVEL_VALUES[level]
        except KeyError:
            raise FormatError(f"unknown FACS intensity level {level!r}") from None
    else:
        value = float(level)
        if not (0.0 <= value <= 1.0) or math.isnan(value):
            raise FormatError(f"continuous intensity {value!r} outside [0, 1]")
    if mode == "discrete":
        return 1.0 if value > 0.0 else 0.0
    if mode != "continuous":
        raise FormatError(f"unknown intensity mode {mode!r}")
    return value


def quantize_level(value: float) -> str:
    """Nearest FACS level symbol for a continuous intensity."""
    best = min(FACS_LEVELS, key=lambda s: (abs(_LEVEL_VALUES[s] - value), _LEVEL_VALUES[s]))
    return best


def parse_level(text: str) -> Level:
    text = text.strip()
    if text in _LEVEL_VALUES:
        return text
    try:
        value = float(text)
    except ValueError:
        raise FormatError(f"unknown FACS intensity level {text!r}") from None
    intensity_value(value)
    return value


def round_sig(values, digits: int = 9) -> np.ndarray:
    """Round to ``digits`` significant digits exactly as the text format stores them."""
    arr = np.asarray(values, dtype=float)
    return np.vectorize(lambda v: float(f"{v:.{digits}g}"), otypes=[float])(arr) if arr.size else arr.copy()


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True, eq=False)
class LandmarkFrame:
    points: np.ndarray  # (count, 3)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise BundleError(f"landmarks must be an (n, 3) array, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise BundleError("landmark coordinates must be finite")
        if np.any(pts[:, 2] <= 0):
            raise BundleError("landmarks must lie in front of the camera (Z > 0)")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def count(self) -> int:
        return self.points.shape[0]

    def __eq__(self, other):
        return isinstance(other, LandmarkFrame) and np.array_equal(self.points, other.points)


@dataclass(frozen=True)
class PoseVector:
    """Rigid head pose: translation (same units as landmarks) and pitch/yaw/roll in radians."""

    translation: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    rotation: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        r = tuple(float(v) for v in self.translation)
        w = tuple(float(v) for v in self.rotation)
        if len(r) != 3 or len(w) != 3:
            raise BundleError("pose needs 3 translation and 3 rotation components")
        if not all(math.isfinite(v) for v in r + w):
            raise BundleError("pose must be finite")
        if not all(-math.pi < v <= math.pi for v in w):
            raise BundleError("pose angles must lie in (-pi, pi]")
        object.__setattr__(self, "translation", r)
        object.__setattr__(self, "rotation", w)

    def as_array(self) -> np.ndarray:
        return np.array(self.translation + self.rotation)

    @classmethod
    def from_array(cls, values) -> "PoseVector":
        v = [float(x) for x in values]
        if len(v) != 6:
            raise BundleError(f"pose needs 6 values, got {len(v)}")
        return cls(tuple(v[:3]), tuple(v[3:]))


@dataclass(frozen=True)
class CameraIntrinsics:
    f: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.f > 0 and math.isfinite(self.f)):
            raise BundleError("focal length must be positive")


@dataclass(frozen=True, eq=False)
class Patch:
    pixels: np.ndarray
    patch_id: str

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.shape[0] < 3 or px.shape[1] < 3:
            raise BundleError(f"patch {self.patch_id!r} must be at least 3x3, got {px.shape}")
        if px.dtype != np.uint8:
            px = px.astype(float)
            if not np.all(np.isfinite(px)) or px.min() < 0 or px.max() > 255:
                raise BundleError(f"patch {self.patch_id!r} values must lie in [0, 255]")
        px = px.copy()
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def __eq__(self, other):
        return (
            isinstance(other, Patch)
            and self.patch_id == other.patch_id
            and np.array_equal(np.asarray(self.pixels, float), np.asarray(other.pixels, float))
        )


@dataclass(frozen=True)
class PatchSpec:
    """Source quadrilateral (4 landmark indices) and output size of a warped patch."""

    patch_id: str
    au_id: int
    quad: Tuple[int, int, int, int]
    width: int = 32
    height: int = 32

    def __post_init__(self):
        quad = tuple(int(i) for i in self.quad)
        if len(quad) != 4 or len(set(quad)) != 4 or min(quad) < 0:
            raise FormatError(f"patch spec {self.patch_id!r} needs 4 distinct landmark indices")
        if self.width < 8 or self.height < 8:
            raise FormatError(f"patch spec {self.patch_id!r} output must be at least 8x8")
        object.__setattr__(self, "quad", quad)

    def to_dict(self) -> dict:
        return {
            "patch_id": self.patch_id,
            "au_id": self.au_id,
            "quad": list(self.quad),
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PatchSpec":
        return cls(str(d["patch_id"]), int(d["au_id"]), tuple(d["quad"]), int(d["width"]), int(d["height"]))


@dataclass(frozen=True)
class Frame:
    index: int
    landmarks: LandmarkFrame
    pose: PoseVector
    patches: Dict[str, Patch] = field(default_factory=dict)


@dataclass(frozen=True)
class AUAnnotation:
    au_id: int
    levels: Tuple[Level, ...]

    def intensities(self, mode: str = "continuous") -> np.ndarray:
        return np.array([intensity_value(v, mode) for v in self.levels])


@dataclass(frozen=True)
class SequenceBundle:
    subject_id: str
    sequence_id: str
    frames: Tuple[Frame, ...]
    annotations: Tuple[AUAnnotation, ...]
    intrinsics: CameraIntrinsics
    patch_specs: Tuple[PatchSpec, ...] = ()
    truth: Optional[Dict[int, np.ndarray]] = None

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        object.__setattr__(self, "annotations", tuple(self.annotations))
        object.__setattr__(self, "patch_specs", tuple(self.patch_specs))
        validate_bundle(self)

    def __eq__(self, other):
        if not isinstance(other, SequenceBundle):
            return NotImplemented
        if (self.subject_id, self.sequence_id, self.intrinsics, self.frames, self.annotations,
                self.patch_specs) != (other.subject_id, other.sequence_id, other.intrinsics,
                                      other.frames, other.annotations, other.patch_specs):
            return False
        if (self.truth is None) != (other.truth is None):
            return False
        if self.truth is None:
            return True
        return self.truth.keys() == other.truth.keys() and all(
            np.array_equal(self.truth[k], other.truth[k]) for k in self.truth)

    __hash__ = None

    def __len__(self):
        return len(self.frames)

    @property
    def au_ids(self) -> List[int]:
        return [a.au_id for a in self.annotations]

    def annotation(self, au_id: int) -> AUAnnotation:
        for a in self.annotations:
            if a.au_id == au_id:
                return a
        raise BundleError(f"bundle {self.subject_id}/{self.sequence_id} has no annotation for AU{au_id}")

    def intensities(self, au_id: int, mode: str = "continuous") -> np.ndarray:
        return self.annotation(au_id).intensities(mode)

    @property
    def key(self) -> str:
        return f"{self.subject_id}/{self.sequence_id}"


def validate_bundle(bundle: SequenceBundle) -> None:
    if not bundle.frames:
        raise BundleError("bundles must contain at least one frame")
    counts = {f.landmarks.count for f in bundle.frames}
    if len(counts) != 1:
        raise LandmarkCountError(f"landmark count varies across frames: {sorted(counts)}")
    idx = [f.index for f in bundle.frames]
    if idx[0] < 0 or any(b <= a for a, b in zip(idx, idx[1:])):
        raise FrameOrderError(f"frame indices must be nonnegative and strictly increasing, got {idx}")
    seen = set()
    for a in bundle.annotations:
        if a.au_id in seen:
            raise BundleError(f"duplicate annotation for AU{a.au_id}")
        seen.add(a.au_id)
        if len(a.levels) != len(bundle.frames):
            raise AnnotationLengthError(
                f"AU{a.au_id} has {len(a.levels)} annotations for {len(bundle.frames)} frames")
        for v in a.levels:
            intensity_value(v)
    if bundle.truth is not None:
        for au, values in bundle.truth.items():
            if len(values) != len(bundle.frames):
                raise AnnotationLengthError(f"AU{au} truth has {len(values)} values for {len(bundle.frames)} frames")
    n = next(iter(counts))
    for spec in bundle.patch_specs:
        if max(spec.quad) >= n:
            raise LandmarkCountError(f"patch spec {spec.patch_id!r} references landmark beyond {n - 1}")


# ---------------------------------------------------------------------------
# PGM


def write_pgm(path: Path, pixels: np.ndarray) -> None:
    px = np.asarray(pixels)
    if px.dtype != np.uint8:
        px = np.clip(np.rint(px), 0, 255).astype(np.uint8)
    h, w = px.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(px.tobytes())


def read_pgm(path: Path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit PGM is supported")
    body = data[pos:pos + w * h]
    if len(body) != w * h:
        raise FormatError(f"{path}: truncated PGM")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w).copy()


# ---------------------------------------------------------------------------
# bundle I/O


def _fmt(v: float) -> str:
    return f"{v:.9g}"


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _level_text(level: Level) -> str:
    return level if isinstance(level, str) else _fmt(level)


def save_bundle(bundle: SequenceBundle, path) -> None:
    """Write ``bundle`` to directory ``path`` (created if needed)."""
    if not bundle.frames:
        raise BundleError("bundles must contain at least one frame")
    root = Path(path)
    for sub in ("landmarks", "pose", "patches"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": BUNDLE_FORMAT,
        "subject_id": bundle.subject_id,
        "sequence_id": bundle.sequence_id,
        "intrinsics": {"f": bundle.intrinsics.f, "cx": bundle.intrinsics.cx, "cy": bundle.intrinsics.cy},
        "landmark_count": bundle.frames[0].landmarks.count,
        "frames": [
            {"index": f.index, "patches": sorted(f.patches)} for f in bundle.frames
        ],
        "patch_specs": [s.to_dict() for s in bundle.patch_specs],
        "truth": bundle.truth is not None,
    }
    _write_text(root / "manifest.json", json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    for f in bundle.frames:
        rows = "".join(",".join(_fmt(v) for v in p) + "\n" for p in f.landmarks.points)
        _write_text(root / "landmarks" / f"{f.index}.csv", rows)
        _write_text(root / "pose" / f"{f.index}.csv", ",".join(_fmt(v) for v in f.pose.as_array()) + "\n")
        for pid, patch in f.patches.items():
            write_pgm(root / "patches" / f"{f.index}_{pid}.pgm", patch.pixels)
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["frame", "au_id", "level"])
    for ann in bundle.annotations:
        for f, lv in zip(bundle.frames, ann.levels):
            w.writerow([f.index, ann.au_id, _level_text(lv)])
    _write_text(root / "annotations.csv", buf.getvalue())
    if bundle.truth is not None:
        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["frame", "au_id", "value"])
        for au in sorted(bundle.truth):
            for f, v in zip(bundle.frames, bundle.truth[au]):
                w.writerow([f.index, au, _fmt(v)])
        _write_text(root / "truth.csv", buf.getvalue())


def _read_csv_floats(path: Path) -> List[List[float]]:
    if not path.is_file():
        raise MissingFileError(f"missing file {path}")
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise FormatError(f"{path}: non-numeric value in row {row}") from None
    return rows


def load_bundle(path) -> SequenceBundle:
    """Read and fully validate the bundle stored in directory ``path``."""
    root = Path(path)
    mpath = root / "manifest.json"
    if not mpath.is_file():
        raise MissingFileError(f"missing file {mpath}")
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{mpath}: {exc}") from None
    if manifest.get("format", BUNDLE_FORMAT) != BUNDLE_FORMAT:
        raise FormatError(f"{mpath}: unsupported format {manifest.get('format')!r}")
    try:
        intr = manifest["intrinsics"]
        intrinsics = CameraIntrinsics(float(intr["f"]), float(intr["cx"]), float(intr["cy"]))
        frame_entries = manifest["frames"]
        subject_id = str(manifest["subject_id"])
        sequence_id = str(manifest["sequence_id"])
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{mpath}: missing key {exc}") from None
    specs = tuple(PatchSpec.from_dict(d) for d in manifest.get("patch_specs", []))
    if not frame_entries:
        raise BundleError("bundles must contain at least one frame")

    frames = []
    expected_count = manifest.get("landmark_count")
    for entry in frame_entries:
        if isinstance(entry, dict):
            t, patch_ids = int(entry["index"]), entry.get("patches", [])
        else:
            t, patch_ids = int(entry), [s.patch_id for s in specs]
        pts = _read_csv_floats(root / "landmarks" / f"{t}.csv")
        if any(len(r) != 3 for r in pts):
            raise FormatError(f"landmarks/{t}.csv: rows must have 3 values")
        if expected_count is not None and len(pts) != expected_count:
            raise LandmarkCountError(
                f"frame {t}: {len(pts)} landmarks, manifest declares {expected_count}")
        pose_rows = _read_csv_floats(root / "pose" / f"{t}.csv")
        if len(pose_rows) != 1 or len(pose_rows[0]) != 6:
            raise FormatError(f"pose/{t}.csv: expected one row of 6 values")
        patches = {}
        for pid in patch_ids:
            ppath = root / "patches" / f"{t}_{pid}.pgm"
            if not ppath.is_file():
                raise MissingFileError(f"missing file {ppath}")
            patches[pid] = Patch(read_pgm(ppath), pid)
        frames.append(Frame(t, LandmarkFrame(np.array(pts)), PoseVector.from_array(pose_rows[0]), patches))

    position = {f.index: i for i, f in enumerate(frames)}
    apath = root / "annotations.csv"
    if not apath.is_file():
        raise MissingFileError(f"missing file {apath}")
    per_au: Dict[int, Dict[int, Level]] = {}
    with open(apath, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                t, au = int(row["frame"]), int(row["au_id"])
            except (KeyError, ValueError, TypeError):
                raise FormatError(f"{apath}: malformed row {row}") from None
            if t not in position:
                raise AnnotationLengthError(f"{apath}: annotation for unknown frame {t}")
            levels = per_au.setdefault(au, {})
            if t in levels:
                raise AnnotationLengthError(f"{apath}: duplicate annotation for frame {t}, AU{au}")
            levels[t] = parse_level(row["level"])
    annotations = []
    for au in sorted(per_au):
        levels = per_au[au]
        if len(levels) != len(frames):
            raise AnnotationLengthError(f"AU{au} has {len(levels)} annotations for {len(frames)} frames")
        annotations.append(AUAnnotation(au, tuple(levels[f.index] for f in frames)))

    truth = None
    if manifest.get("truth"):
        tpath = root / "truth.csv"
        if not tpath.is_file():
            raise MissingFileError(f"missing file {tpath}")
        values: Dict[int, Dict[int, float]] = {}
        with open(tpath, encoding="utf-8", newline="") as fh:
            for row in csv.DictReader(fh):
                values.setdefault(int(row["au_id"]), {})[int(row["frame"])] = float(row["value"])
        truth = {}
        for au, vals in values.items():
            if len(vals) != len(frames) or set(vals) != set(position):
                raise AnnotationLengthError(f"AU{au} truth does not cover every frame")
            truth[au] = np.array([vals[f.index] for f in frames])

    return SequenceBundle(subject_id, sequence_id, tuple(frames), tuple(annotations), intrinsics, specs, truth)


def find_bundles(root) -> List[Path]:
    """Bundle directories below ``root`` (any directory holding a manifest), sorted."""
    root = Path(root)
    if (root / "manifest.json").is_file():
        return [root]
    return sorted(p.parent for p in root.rglob("manifest.json"))


def load_bundles(root) -> List[SequenceBundle]:
    paths = find_bundles(root)
    if not paths:
        raise MissingFileError(f"no bundles found under {root}")
    return [load_bundle(p) for p in paths]


def group_by_subject(bundles: Sequence[SequenceBundle]) -> Dict[str, List[SequenceBundle]]:
    groups: Dict[str, List[SequenceBundle]] = {}
    for b in bundles:
        groups.setdefault(b.subject_id, []).append(b)
    return {k: sorted(v, key=lambda b: b.sequence_id) for k, v in sorted(groups.items())}
