import numpy as np
import pytest
from hypothesis import given, strategies as st

from relau.errors import ConfigError
from relau.metrics import (P_FLOOR, accuracy, confusion_matrix, f1_score, macro_f1, paired_t_test,
                           per_class_f1, roc_auc)

from oracles import auc_oracle, t_pvalue_oracle

counts = st.integers(0, 1000)


def test_f1_examples():
    assert f1_score(10, 0, 0) == 1.0
    assert abs(f1_score(5, 5, 0) - 2 / 3) < 1e-15    # precision 0.5, recall 1
    assert f1_score(0, 5, 5) == 0.0
    assert f1_score(0, 0, 0) == 0.0


@given(counts, counts, counts)
def test_f1_bounded_and_monotone(tp, fp, fn):
    f = f1_score(tp, fp, fn)
    assert 0.0 <= f <= 1.0
    assert f1_score(tp + 1, fp, fn) >= f


def test_macro_f1_examples():
    assert macro_f1(np.diag([4, 5, 6])) == 1.0
    assert abs(macro_f1(np.full((3, 3), 7)) - 1 / 3) < 1e-15
    cm = np.array([[5, 1, 0], [2, 3, 1], [0, 4, 9]])
    perm = [2, 0, 1]
    assert macro_f1(cm[np.ix_(perm, perm)]) == pytest.approx(macro_f1(cm), abs=1e-15)
    assert accuracy(cm) == 17 / 25


def test_confusion_layout():
    cm = confusion_matrix([1, 1, -1, 0], [1, 0, -1, -1])
    assert cm.tolist() == [[1, 0, 1], [0, 1, 0], [0, 1, 0]]
    assert np.allclose(per_class_f1(cm), [2 / 3, 2 / 3, 0.0])
    with pytest.raises(ConfigError):
        confusion_matrix([1], [1, 0])


def test_auc_examples(rng):
    assert roc_auc([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]) == 1.0
    assert roc_auc([0, 1, 0, 1], [3, 3, 3, 3]) == 0.5
    y = rng.integers(0, 2, 1000)
    assert abs(roc_auc(y, rng.normal(size=1000)) - 0.5) < 0.05
    with pytest.raises(ConfigError):
        roc_auc([1, 1], [0.2, 0.3])


@given(st.lists(st.tuples(st.booleans(), st.integers(-5, 5)), min_size=2, max_size=40)
       .filter(lambda xs: 0 < sum(y for y, _ in xs) < len(xs)))
def test_auc_against_pair_count_oracle(xs):
    y = [a for a, _ in xs]
    s = np.array([b for _, b in xs], float)
    a = roc_auc(y, s)
    assert a == pytest.approx(auc_oracle(y, s), abs=1e-12)
    assert a + roc_auc(y, -s) == 1.0


def test_t_test_examples():
    x = [0.3, 0.5, 0.7]
    assert paired_t_test(x, x).p == 1.0
    r = paired_t_test([2, 2, 2, 2, 2], [1, 1, 1, 1, 1])
    assert r.p == P_FLOOR and r.t == np.inf
    # textbook case: differences with mean 1.0, sd 1.0, n = 9 give t = 3 on 8 df
    d = np.array([1.0] * 9) + np.array([-1.5, 1.5, 0, 0, 0, 0, 0, 0, 0]) * np.sqrt(8 / 4.5)
    r = paired_t_test(d, np.zeros(9))
    assert r.df == 8 and abs(r.t - 3.0) < 1e-12
    assert abs(r.p - t_pvalue_oracle(3.0, 8)) < 1e-6
    assert abs(r.p - 0.017071) < 1e-6
    with pytest.raises(ConfigError):
        paired_t_test([1.0], [2.0])


@given(st.lists(st.tuples(st.floats(-10, 10), st.floats(-10, 10)), min_size=2, max_size=20))
def test_t_test_symmetric_and_bounded(xs):
    a = [u for u, _ in xs]
    b = [v for _, v in xs]
    r1, r2 = paired_t_test(a, b), paired_t_test(b, a)
    assert r1.p == r2.p
    assert 0.0 <= r1.p <= 1.0
