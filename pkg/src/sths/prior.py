"""Classification-clustering consistency (3C) prior estimation.

The unlabeled pool is projected with PCA, clustered with a diagonal Gaussian
mixture, and a sample is kept when another sample shares both its cluster and
its predicted class. The smoothed histogram of the kept samples' predicted
labels is the approximate class prior.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

log = logging.getLogger(__name__)

VAR_FLOOR = 1e-6


# -- dimensionality reduction -------------------------------------------------


@dataclass(frozen=True, eq=False)
class PCAResult:
    projected: np.ndarray
    components: np.ndarray
    mean: np.ndarray
    explained_variance: np.ndarray
    explained_variance_ratio: np.ndarray


def pca(features, d: int) -> PCAResult:
    """Top-``d`` principal directions of the centered data via SVD.

    Each direction is signed so that its largest-magnitude coordinate is
    positive.
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("features must be a 2-D matrix")
    M, V = X.shape
    if not 1 <= d <= min(M, V):
        raise ValueError(f"target dimension {d} outside [1, {min(M, V)}]")
    if not np.all(np.isfinite(X)):
        raise ValueError("features contain non-finite values")
    mean = X.mean(axis=0)
    Xc = X - mean
    _, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    comps = Vt[:d].copy()
    pivot = np.argmax(np.abs(comps), axis=1)
    signs = np.sign(comps[np.arange(d), pivot])
    signs[signs == 0] = 1.0
    comps *= signs[:, None]
    var = s**2 / max(M - 1, 1)
    total = var.sum()
    ratio = var[:d] / total if total > 0 else np.zeros(d)
    return PCAResult(
        projected=Xc @ comps.T,
        components=comps,
        mean=mean,
        explained_variance=var[:d],
        explained_variance_ratio=ratio,
    )


def reduce_dims(features, d: int, seed: Optional[int] = None) -> np.ndarray:
    """M x d PCA projection. Exact and deterministic; ``seed`` is accepted for
    interface symmetry with the other stages and has no effect."""
    return pca(features, d).projected


# -- Gaussian mixture ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ClusterAssignment:
    labels: np.ndarray
    components: int
    log_likelihood: float
    history: tuple = ()
    weights: Optional[np.ndarray] = None
    means: Optional[np.ndarray] = None
    variances: Optional[np.ndarray] = None
    converged: bool = False


def _kmeanspp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    M = X.shape[0]
    centers = [X[rng.integers(M)]]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            i = rng.integers(M)
        else:
            i = rng.choice(M, p=d2 / total)
        centers.append(X[i])
        d2 = np.minimum(d2, ((X - X[i]) ** 2).sum(axis=1))
    return np.array(centers)


def _log_joint(X, weights, means, variances):
    with np.errstate(divide="ignore"):
        logw = np.log(weights)
    ll = -0.5 * (
        np.log(2 * np.pi * variances).sum(axis=1)[None, :]
        + (((X[:, None, :] - means[None, :, :]) ** 2) / variances[None, :, :]).sum(axis=2)
    )
    return ll + logw[None, :]


def cluster_gmm(
    points,
    components: int,
    seed: Optional[int] = None,
    max_iter: int = 200,
    tol: float = 1e-6,
    var_floor: float = VAR_FLOOR,
) -> ClusterAssignment:
    """EM for a diagonal-covariance mixture with k-means++ seeding.

    Stops when the total log-likelihood changes by less than ``tol`` or after
    ``max_iter`` iterations. Components that lose all responsibility keep
    their parameters with zero weight.
    """
    X = np.asarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if components < 1:
        raise ValueError("components must be >= 1")
    if X.shape[0] < components:
        raise ValueError(f"{X.shape[0]} points cannot fill {components} components")
    if not np.all(np.isfinite(X)):
        raise ValueError("points contain non-finite values")
    rng = np.random.default_rng(seed)
    M, D = X.shape
    means = _kmeanspp(X, components, rng)
    variances = np.tile(np.maximum(X.var(axis=0), var_floor), (components, 1))
    weights = np.full(components, 1.0 / components)

    history = []
    converged = False
    for _ in range(max_iter):
        joint = _log_joint(X, weights, means, variances)
        norm = logsumexp(joint, axis=1)
        history.append(float(norm.sum()))
        if len(history) > 1 and abs(history[-1] - history[-2]) < tol:
            converged = True
            break
        resp = np.exp(joint - norm[:, None])
        Nk = resp.sum(axis=0)
        live = Nk > 1e-12
        weights = Nk / M
        mk = (resp.T @ X)[live] / Nk[live, None]
        means[live] = mk
        sq = resp.T @ (X**2)
        vk = sq[live] / Nk[live, None] - mk**2
        variances[live] = np.maximum(vk, var_floor)

    joint = _log_joint(X, weights, means, variances)
    labels = np.argmax(joint, axis=1)
    final = float(logsumexp(joint, axis=1).sum())
    if not history or final != history[-1]:
        history.append(final)
    return ClusterAssignment(
        labels=labels,
        components=components,
        log_likelihood=final,
        history=tuple(history),
        weights=weights,
        means=means,
        variances=variances,
        converged=converged,
    )


# -- consistency subgraph and prior ---------------------------------------------


@dataclass(frozen=True, eq=False)
class ConsistencySubgraph:
    kept: np.ndarray
    labels: np.ndarray
    n_nodes: int

    @property
    def kept_fraction(self) -> float:
        return self.kept.size / self.n_nodes if self.n_nodes else 0.0


def consistency_subgraph(P_clu, P_cls) -> ConsistencySubgraph:
    """Nodes that share an edge in both prediction graphs.

    Two nodes are joined in a prediction graph when they carry the same label,
    so a node keeps an edge in both graphs exactly when its (cluster, class)
    pair occurs at least twice.
    """
    P_clu = np.asarray(P_clu)
    P_cls = np.asarray(P_cls)
    if P_clu.shape != P_cls.shape or P_clu.ndim != 1:
        raise ValueError(f"length mismatch: {P_clu.shape} vs {P_cls.shape}")
    if P_clu.size == 0:
        return ConsistencySubgraph(np.empty(0, dtype=np.int64), P_cls[:0].astype(np.int64), 0)
    _, inverse, counts = np.unique(np.stack([P_clu, P_cls]), axis=1, return_inverse=True, return_counts=True)
    kept = np.flatnonzero(counts[inverse.ravel()] >= 2)
    return ConsistencySubgraph(kept=kept, labels=P_cls[kept].astype(np.int64), n_nodes=P_clu.size)


@dataclass(frozen=True, eq=False)
class EstimatedPrior:
    prior: np.ndarray
    classes: np.ndarray
    counts: np.ndarray
    n_sub: int
    flags: tuple = ()
    stats: dict = field(default_factory=dict)

    @property
    def floor(self) -> float:
        return 1.0 / (2 * self.n_sub + self.classes.size)

    def to_dict(self) -> dict:
        return {
            "classes": self.classes.tolist(),
            "prior": self.prior.tolist(),
            "counts": self.counts.tolist(),
            "n_sub": self.n_sub,
            "flags": list(self.flags),
            **self.stats,
        }


CONCENTRATION_LIMIT = 0.9


def estimate_prior(P_sub, classes) -> EstimatedPrior:
    """Add-one smoothed histogram of ``P_sub`` over ``classes``.

    ``classes`` is a sequence of class ids or an int ``C`` meaning ``range(C)``.
    """
    if isinstance(classes, (int, np.integer)):
        classes = np.arange(int(classes))
    classes = np.asarray(classes, dtype=np.int64)
    P_sub = np.asarray(P_sub, dtype=np.int64)
    counts = np.array([np.count_nonzero(P_sub == c) for c in classes], dtype=np.int64)
    n = int(counts.sum())
    prior = (counts + 1.0) / (n + classes.size)
    flags = []
    if P_sub.size == 0:
        flags.append("empty_subgraph_uniform_prior")
        log.warning("consistency subgraph is empty; using a uniform prior")
    if prior.max() > CONCENTRATION_LIMIT:
        flags.append("concentrated_prior")
        log.warning("estimated prior concentrates %.3f on one class", prior.max())
    return EstimatedPrior(prior=prior, classes=classes, counts=counts, n_sub=n, flags=tuple(flags))


def estimate_prior_3c(
    pool_features,
    P_cls,
    classes,
    d: int = 3,
    components: Optional[int] = None,
    seed: Optional[int] = None,
) -> EstimatedPrior:
    """PCA, GMM clustering, consistency subgraph and smoothed histogram.

    ``components`` defaults to the number of classes. ``d`` and ``components``
    are clipped to what the pool size allows; clipping is recorded in ``flags``.
    """
    X = np.asarray(pool_features, dtype=np.float64)
    P_cls = np.asarray(P_cls, dtype=np.int64)
    classes = np.asarray(classes, dtype=np.int64)
    M = X.shape[0]
    if P_cls.shape != (M,):
        raise ValueError("one prediction per pool sample is required")
    k = classes.size if components is None else int(components)
    if k < 1 or d < 1:
        raise ValueError("d and components must be >= 1")
    extra = []
    if M < 2:
        sub = ConsistencySubgraph(np.empty(0, dtype=np.int64), P_cls[:0], M)
        ll = None
    else:
        d_eff = min(d, M, X.shape[1])
        k_eff = min(k, M)
        if d_eff != d:
            extra.append("d_clipped")
        if k_eff != k:
            extra.append("components_clipped")
        Z = reduce_dims(X, d_eff, seed)
        clu = cluster_gmm(Z, k_eff, seed)
        sub = consistency_subgraph(clu.labels, P_cls)
        ll = clu.log_likelihood
    est = estimate_prior(sub.labels, classes)
    stats = {
        "kept_fraction": sub.kept_fraction,
        "n_pool": M,
        "cluster_log_likelihood": ll,
    }
    return EstimatedPrior(
        prior=est.prior,
        classes=est.classes,
        counts=est.counts,
        n_sub=est.n_sub,
        flags=tuple(extra) + est.flags,
        stats=stats,
    )
