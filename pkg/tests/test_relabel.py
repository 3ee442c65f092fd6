import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relau.errors import ConfigError, ExtractionError, FormatError
from relau.learner import classify_pair
from relau.relabel import (DEC, INC, SAME, WindowConfig, aggregate_relative, aggregate_sequence,
                           intensity_pair_matrix, label_from_score, labels_from_intensities, pair_target,
                           presence_transitions, sample_pairs, usable_positions, window_pairs)
from relau.synth import trapezoid

from helpers import level_bundle
from oracles import eq1_oracle

# annotation trace shaped like the worked example: absent, seven present frames, absent
FIG2 = ["absent"] * 3 + ["C"] * 7 + ["absent"] * 4
ORDER = {DEC: -1, SAME: 0, INC: 1}


def test_pair_target_examples():
    assert pair_target(0.0, 0.790) == 0.790
    assert pair_target(1.0, 0.0) == -1.0
    assert pair_target(0.4, 0.4) == 0.0
    with pytest.raises(FormatError):
        pair_target(1.2, 0.0)


@given(st.floats(0, 1), st.floats(0, 1))
def test_pair_target_antisymmetric(a, b):
    assert pair_target(a, b) == -pair_target(b, a)


def test_unanimous_window():
    cfg = WindowConfig(6, 0.15)
    lab = aggregate_relative(np.ones((13, 13)), 6, cfg, 13)
    assert lab.score == 1.0 and lab.label == INC and lab.arrow == "↑" and lab.comparisons_used == 9
    lab = aggregate_relative(np.zeros((13, 13)), 6, cfg, 13)
    assert lab.score == 0.0 and lab.label == SAME


def test_callable_score_source():
    cfg = WindowConfig(4, 0.15)
    lab = aggregate_relative(lambda a, b: -1.0, 5, cfg, 12)
    assert lab.label == DEC and lab.score == -1.0


def test_matches_double_sum_oracle(rng):
    cfg = WindowConfig(10, 0.15)
    c = rng.uniform(-1, 1, (30, 30))
    for t in range(30):
        lab = aggregate_relative(c, t, cfg, 30)
        label, s = eq1_oracle(c, t, 10, 0.15, 30)
        assert lab.score == s and lab.label == label


def test_boundary_frames_are_flagged():
    labels = aggregate_sequence(np.ones((8, 8)), WindowConfig(4, 0.15))
    assert labels[0].boundary_flag and labels[-1].boundary_flag
    assert labels[0].label == SAME and labels[0].comparisons_used == 0
    assert labels[1].comparisons_used == 2 and labels[1].score == 1.0


def test_short_sequence_does_not_crash():
    labels = labels_from_intensities([0.0, 0.3, 0.6, 0.9], WindowConfig(10, 0.15))
    assert len(labels) == 4
    assert [l.label for l in labels] == [SAME, INC, INC, SAME]


def test_ties_go_to_same():
    assert label_from_score(0.15, 0.15) == SAME
    assert label_from_score(-0.15, 0.15) == SAME
    assert classify_pair(0.15, 0.15) == 0


def test_window_config_validation():
    for w, T in ((3, 0.1), (0, 0.1), (4, 0.0), (4, 1.0)):
        with pytest.raises(ConfigError):
            WindowConfig(w, T)


def test_constant_intensity_gives_no_change():
    labels = labels_from_intensities(np.full(20, 0.685), WindowConfig())
    assert all(l.label == SAME for l in labels)


def test_onset_ramp_rises():
    curve = trapezoid(30, 3, 6, 8, 6, 1.0)
    labels = labels_from_intensities(curve, WindowConfig(4, 0.15))
    for t in range(30):
        label, s = eq1_oracle(intensity_pair_matrix(curve), t, 4, 0.15, 30)
        assert labels[t].label == label
    ramp = [t for t in range(4, 9)]
    assert all(labels[t].label == INC for t in ramp)
    assert labels[13].label == SAME
    assert any(l.label == DEC for l in labels[18:26])


def test_window_pairs_cover_every_comparison():
    cfg = WindowConfig(4, 0.15)
    n = 9
    seen = set()
    for t in range(n):
        for i in range(1, min(2, t) + 1):
            for j in range(1, min(2, n - 1 - t) + 1):
                seen.add((t - i, t + j))
    assert window_pairs(n, cfg) == sorted(seen)


def test_border_exclusion():
    present = [l != "absent" for l in FIG2]
    assert presence_transitions(present) == [3, 10]
    assert usable_positions(present, 2) == [0, 1, 5, 6, 7, 8, 12, 13]
    assert usable_positions(present, 0) == list(range(14))


def test_worked_example_pairs():
    b = level_bundle(FIG2)
    pairs = {(p.t, p.t2): classify_pair(p.target, 0.15) for p in sample_pairs(b, 4, border_margin=2)}
    assert pairs[(1, 5)] == 1 and pairs[(1, 6)] == 1
    assert pairs[(7, 12)] == -1 and pairs[(8, 12)] == -1
    assert pairs[(0, 1)] == 0 and pairs[(5, 7)] == 0
    assert all(t not in (2, 3, 4, 9, 10, 11) and t2 not in (2, 3, 4, 9, 10, 11) for t, t2 in pairs)
    assert all(t < t2 for t, t2 in pairs)


def test_discrete_mode_targets():
    b = level_bundle(FIG2)
    pairs = sample_pairs(b, 4, 2, mode="discrete")
    assert {p.target for p in pairs} == {-1.0, 0.0, 1.0}


def test_max_gap_and_no_usable_frames():
    b = level_bundle(FIG2)
    assert all(p.t2 - p.t <= 3 for p in sample_pairs(b, 4, 2, max_gap=3))
    with pytest.raises(ExtractionError):
        sample_pairs(level_bundle(["absent", "A", "absent"]), 4, 2)


@settings(max_examples=100)
@given(st.integers(1, 6).map(lambda h: 2 * h), st.floats(0.01, 0.99), st.integers(2, 25), st.data())
def test_eq1_oracle_property(w, T, n, data):
    rng = np.random.default_rng(data.draw(st.integers(0, 2 ** 32 - 1)))
    c = rng.uniform(-1, 1, (n, n))
    t = data.draw(st.integers(0, n - 1))
    lab = aggregate_relative(c, t, WindowConfig(w, T), n)
    label, s = eq1_oracle(c, t, w, T, n)
    assert lab.score == s and lab.label == label


@settings(max_examples=100)
@given(st.integers(1, 5).map(lambda h: 2 * h), st.floats(0.01, 0.99), st.data())
def test_label_monotone_in_each_score(w, T, data):
    n = 2 * w + 1
    rng = np.random.default_rng(data.draw(st.integers(0, 2 ** 32 - 1)))
    c = rng.uniform(-1, 1, (n, n))
    t = w
    i = data.draw(st.integers(1, w // 2))
    j = data.draw(st.integers(1, w // 2))
    before = aggregate_relative(c, t, WindowConfig(w, T), n)
    c[t - i, t + j] += data.draw(st.floats(0, 5))
    after = aggregate_relative(c, t, WindowConfig(w, T), n)
    assert ORDER[after.label] >= ORDER[before.label]
