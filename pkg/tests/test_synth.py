import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relau.errors import ConfigError, MissingInputError
from relau.features import extract_features, load_feature_config
from relau.geometry import normalize_shape
from relau.relabel import DEC, INC, SAME, WindowConfig, intensity_pair_matrix, labels_from_intensities
from relau.seqmodel import FACS_LEVELS, SequenceBundle, quantize_level, save_bundle, validate_bundle
from relau.synth import FACE_DEPTH, SynthConfig, generate, ground_truth_relative, subject_bundles, trapezoid

from oracles import eq1_oracle

FLIP = {INC: DEC, DEC: INC, SAME: SAME}


def quick(**kw):
    base = dict(seed=11, n_subjects=1, frames=24, aus=(12,))
    base.update(kw)
    return SynthConfig(**base)


def test_bundles_pass_invariants(small_corpus, small_cfg):
    assert len(small_corpus) == small_cfg.n_subjects * len(small_cfg.aus)
    for b in small_corpus:
        validate_bundle(b)
        assert len(b.frames) == small_cfg.frames
        for au in small_cfg.aus:
            levels = b.annotation(au).levels
            assert all(l in FACS_LEVELS for l in levels)
            assert levels == tuple(quantize_level(v) for v in b.truth[au])
    assert len({b.subject_id for b in small_corpus}) == small_cfg.n_subjects


def test_same_seed_gives_identical_bytes(tmp_path):
    cfg = quick()
    for run in ("a", "b"):
        for b in generate(cfg):
            save_bundle(b, tmp_path / run / b.key)
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert files
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert generate(cfg, workers=2) == generate(cfg)


def test_subject_depends_only_on_seed_and_index():
    a = subject_bundles(quick(n_subjects=3), 1)
    b = subject_bundles(quick(n_subjects=5), 1)
    assert a == b


def test_no_head_motion():
    cfg = quick(translation_amplitude=(0, 0, 0), rotation_amplitude=0.0, landmark_jitter=0.0)
    (b,) = generate(cfg)
    for f in b.frames:
        assert f.pose.rotation == (0.0, 0.0, 0.0)
        assert f.pose.translation == (0.0, 0.0, FACE_DEPTH)
        # a pure constant shift: normalized shapes differ from raw ones by the face depth only
        assert np.allclose(normalize_shape(f.landmarks.points, f.pose), f.landmarks.points - [0, 0, FACE_DEPTH])


def test_zero_au_amplitude_gives_no_change():
    (b,) = generate(quick(au_amplitude=0.0))
    assert all(l.label == SAME for l in ground_truth_relative(b, 12, WindowConfig()))
    assert set(b.annotation(12).levels) == {"absent"}


def test_episode_labels():
    (b,) = generate(quick())
    labels = [l.label for l in ground_truth_relative(b, 12, WindowConfig(4, 0.15))]
    assert INC in labels and DEC in labels
    assert labels.index(INC) < labels.index(DEC)
    with pytest.raises(MissingInputError):
        ground_truth_relative(b, 4, WindowConfig())


def test_trapezoid_against_eq1():
    curve = trapezoid(20, 3, 6, 8, 4, 1.0)      # onset over frames 3..8
    assert curve[2] == 0 and curve[8] == 1.0 and curve[16] == 1.0 and curve[17] < 1.0
    labels = labels_from_intensities(curve, WindowConfig(4, 0.15))
    mat = intensity_pair_matrix(curve)
    for t in range(20):
        assert labels[t].label == eq1_oracle(mat, t, 4, 0.15, 20)[0]
    assert all(labels[t].label == INC for t in range(3, 9))
    assert labels[12].label == SAME            # plateau 9..16 is longer than w
    assert all(labels[t].label == DEC for t in range(17, 20 - 2))


@settings(max_examples=8)
@given(st.integers(0, 10_000), st.sampled_from([4, 6, 10]))
def test_time_reversal_swaps_labels(seed, w):
    (b,) = generate(quick(seed=seed, pixel_noise=0.0))
    n = len(b.frames)
    rev = SequenceBundle(b.subject_id, b.sequence_id, b.frames, b.annotations, b.intrinsics, b.patch_specs,
                         {k: v[::-1].copy() for k, v in b.truth.items()})
    cfg = WindowConfig(w, 0.15)
    fwd = ground_truth_relative(b, 12, cfg)
    back = ground_truth_relative(rev, 12, cfg)
    for t in range(n):
        assert back[n - 1 - t].label == FLIP[fwd[t].label]
        assert back[n - 1 - t].score == pytest.approx(-fwd[t].score, abs=1e-12)


def test_permanent_wrinkles_cancel_in_pair_differences():
    fcfg = load_feature_config(12)
    feats = {}
    for amp in (0.0, 3.0):
        (b,) = generate(quick(wrinkle_amplitude=amp, n_subjects=1))
        feats[amp] = (b, extract_features(b, fcfg))
    b, _ = feats[0.0]
    neutral = np.flatnonzero(b.truth[12] == 0)
    first, last = neutral[0], neutral[-1]
    pair = {amp: f.appearance[last] - f.appearance[first] for amp, (_, f) in feats.items()}
    floor = np.mean(np.abs(pair[0.0]))
    # wrinkles change the single-frame appearance beyond the noise floor ...
    assert np.mean(np.abs(feats[3.0][1].appearance[first] - feats[0.0][1].appearance[first])) > 1.25 * floor
    # ... but a same-subject, equal-intensity difference stays at the noise floor
    assert np.mean(np.abs(pair[3.0])) < 3 * floor


def test_config_validation():
    for bad in (dict(peak=0.0), dict(au_amplitude=1.5), dict(aus=(99,)), dict(frames=5),
                dict(rotation_amplitude=2.0), dict(n_subjects=0)):
        with pytest.raises(ConfigError):
            quick(**bad)
    with pytest.raises(ConfigError):
        SynthConfig.from_dict({"nope": 1})
    cfg = quick()
    assert SynthConfig.from_dict(cfg.to_dict()) == cfg
