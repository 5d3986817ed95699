import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sths.prior import (
    cluster_gmm,
    consistency_subgraph,
    estimate_prior,
    estimate_prior_3c,
    pca,
    reduce_dims,
)


def brute_subgraph(P_clu, P_cls):
    """Explicit edge intersection of the two prediction graphs."""
    M = len(P_clu)
    nodes = set()
    for i, j in itertools.combinations(range(M), 2):
        if P_clu[i] == P_clu[j] and P_cls[i] == P_cls[j]:
            nodes.update((i, j))
    return sorted(nodes)


pairs = st.integers(0, 30).flatmap(
    lambda M: st.tuples(st.lists(st.integers(0, 4), min_size=M, max_size=M), st.lists(st.integers(0, 4), min_size=M, max_size=M))
)


@settings(max_examples=300, deadline=None)
@given(pairs)
def test_subgraph_matches_edge_intersection(case):
    P_clu, P_cls = map(np.array, case)
    sub = consistency_subgraph(P_clu, P_cls)
    nodes = brute_subgraph(P_clu.tolist(), P_cls.tolist())
    assert sub.kept.tolist() == nodes
    assert sub.labels.tolist() == [P_cls[i] for i in nodes]


def test_subgraph_length_mismatch():
    with pytest.raises(ValueError):
        consistency_subgraph([0, 1], [0])


def test_prior_example():
    est = estimate_prior([1, 1, 3, 3], [1, 2, 3])
    np.testing.assert_allclose(est.prior, [3 / 7, 1 / 7, 3 / 7])
    assert est.n_sub == 4 and est.floor == 1 / 11


def test_empty_subgraph_gives_uniform_prior():
    est = estimate_prior([], 4)
    np.testing.assert_allclose(est.prior, 0.25)
    assert "empty_subgraph_uniform_prior" in est.flags


def test_concentrated_prior_is_flagged():
    est = estimate_prior([0] * 100, 2)
    assert est.prior[0] > 0.9 and "concentrated_prior" in est.flags


def test_pca_matches_eigensolver():
    rng = np.random.default_rng(0)
    for _ in range(20):
        X = rng.normal(size=(rng.integers(5, 40), rng.integers(2, 8)))
        X = X * rng.uniform(0.1, 3, size=X.shape[1])
        d = int(rng.integers(1, min(X.shape) + 1))
        res = pca(X, d)
        evals = np.linalg.eigvalsh(np.cov(X, rowvar=False))[::-1][:d]
        np.testing.assert_allclose(res.explained_variance, evals, atol=1e-6)
        # sign convention: largest-magnitude coordinate of each direction is positive
        pivot = np.argmax(np.abs(res.components), axis=1)
        assert (res.components[np.arange(d), pivot] > 0).all()


def test_reduce_dims_is_deterministic_and_checks_range():
    X = np.random.default_rng(1).normal(size=(20, 5))
    np.testing.assert_array_equal(reduce_dims(X, 3, 0), reduce_dims(X, 3, 1))
    with pytest.raises(ValueError):
        reduce_dims(X, 6)
    with pytest.raises(ValueError):
        reduce_dims(X, 0)


def test_em_log_likelihood_never_decreases():
    rng = np.random.default_rng(2)
    for _ in range(100):
        k = int(rng.integers(1, 5))
        centers = rng.normal(scale=4, size=(k, 2))
        X = np.vstack([c + rng.normal(size=(int(rng.integers(3, 20)), 2)) for c in centers])
        res = cluster_gmm(X, int(rng.integers(1, 5)), seed=int(rng.integers(1000)))
        h = np.array(res.history)
        assert (np.diff(h) >= -1e-8 * np.abs(h[:-1]).max()).all()


def test_two_point_masses_are_separated():
    X = np.vstack([np.zeros((10, 2)), np.full((10, 2), 5.0)])
    res = cluster_gmm(X, 2, seed=0)
    assert len(set(res.labels[:10])) == 1 and len(set(res.labels[10:])) == 1
    assert res.labels[0] != res.labels[-1]


def test_gmm_errors():
    with pytest.raises(ValueError):
        cluster_gmm(np.zeros((2, 2)), 3)
    with pytest.raises(ValueError):
        cluster_gmm(np.array([[0.0], [np.nan]]), 1)


def test_3c_on_tiny_pool():
    est = estimate_prior_3c(np.zeros((1, 4)), np.array([2]), [2, 3], d=3)
    np.testing.assert_allclose(est.prior, 0.5)
    assert "empty_subgraph_uniform_prior" in est.flags


def test_3c_is_deterministic_and_normalized():
    rng = np.random.default_rng(3)
    X = np.vstack([rng.normal(c, 0.3, size=(30, 4)) for c in (0, 3, 6)])
    P = np.repeat([0, 1, 2], 30)
    a = estimate_prior_3c(X, P, [0, 1, 2], d=2, seed=5)
    b = estimate_prior_3c(X, P, [0, 1, 2], d=2, seed=5)
    np.testing.assert_array_equal(a.prior, b.prior)
    assert abs(a.prior.sum() - 1) < 1e-12
    np.testing.assert_allclose(a.prior, 1 / 3, atol=0.02)
