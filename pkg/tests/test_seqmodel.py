import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from relau.errors import (AnnotationLengthError, BundleError, FormatError, FrameOrderError,
                          LandmarkCountError, MissingFileError)
from relau.seqmodel import (FACS_LEVELS, Frame, LandmarkFrame, PoseVector, SequenceBundle, intensity_value, load_bundle,
                            load_bundles, quantize_level, read_pgm, save_bundle, write_pgm)

from helpers import INTR, make_bundle


@pytest.mark.parametrize("level,value", [("C", 0.790), ("absent", 0.0), ("E", 1.0), ("A", 0.580),
                                         ("B", 0.685), ("D", 0.895)])
def test_intensity_levels(level, value):
    assert intensity_value(level) == value


def test_intensity_strictly_increasing():
    vals = [intensity_value(l) for l in FACS_LEVELS]
    assert all(a < b for a, b in zip(vals, vals[1:]))


def test_intensity_discrete_and_continuous():
    assert intensity_value("A", "discrete") == 1.0
    assert intensity_value("absent", "discrete") == 0.0
    assert intensity_value(0.42) == 0.42
    with pytest.raises(FormatError):
        intensity_value("F")
    with pytest.raises(FormatError):
        intensity_value(1.5)


def test_quantize_round_trip():
    for l in FACS_LEVELS:
        assert quantize_level(intensity_value(l)) == l
    assert quantize_level(0.28) == "absent"
    assert quantize_level(0.30) == "A"


def test_three_frame_round_trip(tmp_path):
    b = make_bundle()
    save_bundle(b, tmp_path / "b")
    back = load_bundle(tmp_path / "b")
    assert len(back.frames) == 3
    assert back == b


def test_24_point_round_trip(tmp_path):
    b = make_bundle(n_points=24, truth=True, levels=(0.1, "B", 0.0))
    save_bundle(b, tmp_path / "b")
    assert load_bundle(tmp_path / "b") == b


def test_annotation_length_error():
    with pytest.raises(AnnotationLengthError):
        make_bundle(levels=("A", "B"))


def test_frame_order_error():
    with pytest.raises(FrameOrderError):
        make_bundle(indices=[0, 2, 1])


def test_empty_bundle_rejected():
    with pytest.raises(BundleError):
        SequenceBundle("S", "q", (), (), INTR)


def test_landmark_count_must_be_constant():
    b = make_bundle()
    f = b.frames[1]
    bad = Frame(f.index, LandmarkFrame(f.landmarks.points[:10]), f.pose, f.patches)
    with pytest.raises(LandmarkCountError):
        SequenceBundle("S", "q", (b.frames[0], bad), (), INTR)


def test_landmarks_in_front_of_camera():
    with pytest.raises(BundleError):
        LandmarkFrame(np.array([[0.0, 0.0, -1.0]]))


def test_pose_angle_range():
    with pytest.raises(BundleError):
        PoseVector((0, 0, 0), (4.0, 0, 0))


def test_missing_file_on_load(tmp_path):
    b = make_bundle()
    save_bundle(b, tmp_path / "b")
    (tmp_path / "b" / "pose" / "1.csv").unlink()
    with pytest.raises(MissingFileError):
        load_bundle(tmp_path / "b")
    with pytest.raises(MissingFileError):
        load_bundle(tmp_path / "nothing")


def test_load_rejects_bad_annotation(tmp_path):
    b = make_bundle()
    save_bundle(b, tmp_path / "b")
    p = tmp_path / "b" / "annotations.csv"
    p.write_text(p.read_text().replace(",C\n", ",Z\n") if ",C\n" in p.read_text() else p.read_text() + "0,4,Z\n")
    with pytest.raises(FormatError):
        load_bundle(tmp_path / "b")


def test_load_checks_landmark_count(tmp_path):
    b = make_bundle()
    save_bundle(b, tmp_path / "b")
    p = tmp_path / "b" / "landmarks" / "2.csv"
    p.write_text("".join(p.read_text().splitlines(True)[:-1]))
    with pytest.raises(LandmarkCountError):
        load_bundle(tmp_path / "b")


def test_text_files_are_utf8_lf(tmp_path):
    save_bundle(make_bundle(truth=True), tmp_path / "b")
    for p in (tmp_path / "b").rglob("*"):
        if p.suffix in (".csv", ".json"):
            data = p.read_bytes()
            assert b"\r" not in data
            data.decode("utf-8")
    m = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert m["format"] == "relau-bundle/1"


def test_pgm_round_trip(tmp_path, rng):
    px = rng.integers(0, 256, (7, 11)).astype(np.uint8)
    write_pgm(tmp_path / "x.pgm", px)
    assert np.array_equal(read_pgm(tmp_path / "x.pgm"), px)


def test_load_bundles_sorted(tmp_path):
    save_bundle(make_bundle(seed=1), tmp_path / "b" / "S1")
    out = load_bundles(tmp_path / "b")
    assert len(out) == 1
    with pytest.raises(MissingFileError):
        load_bundles(tmp_path / "empty")


level_st = st.one_of(st.sampled_from(FACS_LEVELS),
                     st.floats(0, 1, allow_nan=False).map(lambda v: float(f"{v:.9g}")))


@given(n_frames=st.integers(1, 5), n_points=st.integers(4, 30), seed=st.integers(0, 10_000),
       data=st.data(), truth=st.booleans(), patch=st.booleans())
def test_round_trip_property(tmp_path_factory, n_frames, n_points, seed, data, truth, patch):
    levels = tuple(data.draw(level_st) for _ in range(n_frames))
    b = make_bundle(n_frames, n_points, seed, levels, patch, truth)
    d = tmp_path_factory.mktemp("rt")
    save_bundle(b, d)
    assert load_bundle(d) == b
