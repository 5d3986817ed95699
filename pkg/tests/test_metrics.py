import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sths.metrics import (
    MetricError,
    acc,
    confusion,
    group_precision,
    gzsl_snapshot,
    harmonic_mean,
    per_class_accuracy,
    per_class_precision,
    snapshot,
)


def test_confusion_example():
    assert confusion([0, 0, 1], [0, 1, 1], 2).tolist() == [[1, 1], [0, 1]]
    assert confusion([], [], 3).tolist() == [[0] * 3] * 3
    with pytest.raises(MetricError):
        confusion([0, 1], [0], 2)
    with pytest.raises(MetricError):
        confusion([0, 2], [0, 1], 2)


def test_accuracy_and_precision_example():
    cm = np.array([[1, 1], [0, 1]])
    assert per_class_accuracy(cm).tolist() == [0.5, 1.0]
    assert acc(cm) == 0.75
    assert per_class_precision(cm).tolist() == [1.0, 0.5]
    assert acc(np.diag([3, 4])) == 1.0


def test_empty_class_is_excluded(caplog):
    cm = np.array([[2, 0, 0], [0, 0, 0], [1, 0, 1]])
    with caplog.at_level("WARNING"):
        assert acc(cm) == 0.75
    assert "excluded" in caplog.text
    with pytest.raises(MetricError):
        acc(np.zeros((2, 2)))


def test_never_predicted_class_is_undefined():
    cm = np.array([[2, 0], [1, 0]])
    prec = per_class_precision(cm)
    assert prec[0] == 2 / 3 and np.isnan(prec[1])
    assert group_precision(cm, [0, 1]) == 2 / 3
    assert np.isnan(group_precision(cm, [1]))


cases = st.integers(1, 6).flatmap(
    lambda C: st.integers(0, 50).flatmap(
        lambda N: st.tuples(
            st.just(C), st.lists(st.integers(0, C - 1), min_size=N, max_size=N), st.lists(st.integers(0, C - 1), min_size=N, max_size=N)
        )
    )
)


@settings(max_examples=300, deadline=None)
@given(cases)
def test_metrics_match_per_sample_tally(case):
    C, t, p = case
    cm = confusion(t, p, C)
    for i in range(C):
        for j in range(C):
            assert cm[i, j] == sum(1 for a, b in zip(t, p) if a == i and b == j)
    accs, precs = [], []
    for c in range(C):
        n = sum(1 for a in t if a == c)
        k = sum(1 for a, b in zip(t, p) if a == c and b == c)
        m = sum(1 for b in p if b == c)
        if n:
            accs.append(k / n)
            assert per_class_accuracy(cm)[c] == k / n
        if m:
            precs.append(k / m)
            assert per_class_precision(cm)[c] == k / m
    if accs:
        assert acc(cm) == pytest.approx(sum(accs) / len(accs), abs=1e-15)


def test_harmonic_mean_examples():
    assert round(harmonic_mean(91.4, 92.3), 1) == 91.8
    assert harmonic_mean(0.3, 0.3) == pytest.approx(0.3)
    assert harmonic_mean(0, 0.9) == 0.0
    assert harmonic_mean(0, 0) == 0.0
    with pytest.raises(MetricError):
        harmonic_mean(-1, 0.5)


@settings(max_examples=300, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1))
def test_harmonic_mean_properties(U, S):
    H = harmonic_mean(U, S)
    assert H == pytest.approx(harmonic_mean(S, U))
    assert H <= (U + S) / 2 + 1e-12
    assert H <= 2 * min(U, S) + 1e-12
    assert harmonic_mean(100 * U, 100 * S) == pytest.approx(100 * H)


def test_snapshot_and_gzsl():
    snap = snapshot([2, 2, 3, 3], [2, 3, 3, 3], 4, [2, 3], groups={"hard": [2]})
    assert snap.acc == 0.75
    assert snap.groups["hard"] == 1.0
    d = snap.to_dict()
    assert d["per_class_accuracy"] == [0.5, 1.0]
    assert snap.to_csv().splitlines()[0] == "class,accuracy,precision"
    g = gzsl_snapshot([2, 3], [2, 0], [0, 1], [0, 1], 4, [0, 1], [2, 3])
    assert g.U == 0.5 and g.S == 1.0 and g.H == pytest.approx(2 / 3)
