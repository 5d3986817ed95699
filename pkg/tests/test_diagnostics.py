import numpy as np
import pytest

from sths.dataset import ClassSplit, Oracle, ZslDataset
from sths.diagnostics import (
    diag_diversity,
    diag_precision_contrast,
    diag_retrain_contrast,
    diag_uneven_prediction,
    fig1_report,
    fit_inductive,
    hard_class_identification_ratio,
)
from sths.models import EmbeddingModel
from sths.sampling import hardness_order
from sths.synthetic import SyntheticConfig, generate_synthetic


class Exact:
    """Predicts the true label of every pool row it was built with."""

    def __init__(self, X, y):
        self.lookup = {tuple(x): int(c) for x, c in zip(X, y)}

    def predict(self, X, candidates):
        return np.array([self.lookup[tuple(x)] for x in X])


class Constant:
    def __init__(self, c):
        self.c = c

    def predict(self, X, candidates):
        return np.full(len(X), self.c)


class Wrap:
    def __init__(self, fitted):
        self.fitted = fitted

    def fit(self, train, attributes, seed=None):
        return self.fitted


@pytest.fixture(scope="module")
def fixture():
    return generate_synthetic(SyntheticConfig(seed=0, n_unseen=6, unseen_per_class=30))


def test_exact_model_has_no_spread(tiny):
    o = Oracle(tiny)
    exact = Exact(tiny.test_unseen.features, o.labels("test_unseen"))
    rep = diag_uneven_prediction(exact, o)
    assert rep.spread == 0.0 and rep.acc == 1.0
    prec = diag_precision_contrast(o, Wrap(exact), group_size=1)
    assert prec["easy"] == prec["hard"] == prec["all"] == 1.0


def test_constant_model_precision_is_undefined_not_a_crash(tiny):
    o = Oracle(tiny)
    prec = diag_precision_contrast(o, Wrap(Constant(2)), group_size=1)
    assert prec["all"] == 0.5
    assert np.isnan(prec["hard"]) or prec["hard"] == 0.5


def test_fixture_is_uneven(fixture):
    o = Oracle(fixture)
    rep = diag_uneven_prediction(fit_inductive(o, EmbeddingModel(), 0), o)
    assert rep.spread > 0.3
    assert len(rep.easy) == len(rep.hard) == 3
    assert not set(rep.easy) & set(rep.hard)


def test_zero_budget_keeps_baseline(fixture):
    o = Oracle(fixture)
    for mode in ("easy", "hard", "all"):
        r = diag_retrain_contrast(o, EmbeddingModel(), mode, budget=0, seed=1)
        assert r.acc == r.baseline_acc
    div = diag_diversity(o, EmbeddingModel(), (1, 2), budget=0, seed=1)
    assert all(g["acc"] == div["baseline_acc"] for g in div["groups"])


def test_all_true_labels_do_not_hurt(fixture):
    o = Oracle(fixture)
    r = diag_retrain_contrast(o, EmbeddingModel(), "all", budget=len(fixture.test_unseen), seed=0)
    assert r.acc >= r.baseline_acc


def test_oversized_budget_is_flagged(fixture):
    r = diag_retrain_contrast(Oracle(fixture), EmbeddingModel(), "easy", budget=500, seed=0, group_size=1)
    assert r.flags == ("sampled_with_replacement",)


def test_diagnostics_are_reproducible(fixture):
    o = Oracle(fixture)
    a = diag_diversity(o, EmbeddingModel(), (1, 1, 2), seed=3)
    b = diag_diversity(o, EmbeddingModel(), (1, 1, 2), seed=3)
    assert a == b
    assert a["groups"][0]["acc"] == a["groups"][1]["acc"]


def test_identification_ratio():
    acc = np.array([0.9, 0.1, 0.5, 0.3])
    exact = hardness_order(acc)
    assert hard_class_identification_ratio(exact, acc, 0.5) == 1.0
    assert hard_class_identification_ratio(exact.order[::-1], acc, 0.5) == 0.0
    assert hard_class_identification_ratio([1, 0, 2, 3], acc, 0.5) == 0.5
    # ties in accuracy resolve to the smaller position
    assert hard_class_identification_ratio([0, 1, 2, 3], [0.2, 0.2, 0.2, 0.9], 0.25) == 1.0
    with pytest.raises(ValueError):
        hard_class_identification_ratio([0, 1], acc[:2], 0.0)


def test_single_unseen_class_skips_diversity():
    rng = np.random.default_rng(0)
    attrs = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    ds = ZslDataset.from_arrays(
        ClassSplit([0, 1], [2]), attrs, rng.normal(size=(8, 3)), np.repeat([0, 1], 4), rng.normal(size=(5, 3)), np.full(5, 2)
    )
    rep = fig1_report(Oracle(ds), EmbeddingModel(), 0)
    assert rep["uneven"]["spread"] == 0.0
    assert "skipped" in rep["diversity"] and "skipped" in rep["retrain"]
