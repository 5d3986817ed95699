"""Hardness sampling of pseudo-labeled pool samples.

Classes the model rarely predicts are treated as hard. CFBS ranks classes by
their prediction frequency, PN-CFBS by the frequency divided by a class prior,
and both draw the step budget from the Top-K hardest classes with replacement.
RS draws uniformly from the pool and is kept as the baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

POLICIES = ("rs", "cfbs", "pn-cfbs")
PRIOR_SOURCES = ("none", "true", "3c")
DEFAULT_PRIOR_FLOOR = 1e-9


class EmptySelection(RuntimeError):
    """No pool member is predicted as any eligible hard class."""


def class_frequency(P, C: int) -> np.ndarray:
    """Normalized histogram of class indices ``P`` over ``C`` bins."""
    if C < 1:
        raise ValueError("class count must be >= 1")
    P = np.asarray(P)
    if P.size == 0:
        raise ValueError("cannot compute class frequency of an empty prediction vector")
    if not np.issubdtype(P.dtype, np.integer):
        raise ValueError("predictions must be integer class indices")
    if P.min() < 0 or P.max() >= C:
        raise ValueError(f"prediction outside [0, {C})")
    return np.bincount(P, minlength=C) / P.size


@dataclass(frozen=True, eq=False)
class HardnessRanking:
    """``order[0]`` is the hardest class index; ``values`` follow ``order``."""

    order: np.ndarray
    values: np.ndarray

    def top(self, k: int) -> np.ndarray:
        return self.order[:k]


def hardness_order(metric) -> HardnessRanking:
    """Ascending stable argsort; ties go to the smaller index."""
    metric = np.asarray(metric, dtype=np.float64)
    if np.isnan(metric).any():
        raise ValueError("hardness metric contains NaN")
    order = np.argsort(metric, kind="stable")
    return HardnessRanking(order=order, values=metric[order])


def prior_normalize(f, p, floor: float = DEFAULT_PRIOR_FLOOR) -> np.ndarray:
    """``f / max(p, floor)`` elementwise.

    ``p`` is expected to sum to one; only negativity is rejected, so a
    rescaled prior gives a rescaled metric with the same ordering.
    """
    f = np.asarray(f, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if f.shape != p.shape:
        raise ValueError("frequency and prior must have the same length")
    if np.any(p < 0):
        raise ValueError("prior entries must be non-negative")
    return f / np.maximum(p, floor)


def schedule_budget(M: int, T: int, t: int) -> int:
    """Pseudo-label budget at step ``t``: ``floor(M / T) * t``."""
    if not 1 <= T <= M:
        raise ValueError(f"need 1 <= T <= M, got T={T}, M={M}")
    if not 1 <= t <= T:
        raise ValueError(f"step {t} outside [1, {T}]")
    return (M // T) * t


def prior_floor_3c(n_sub: int, C: int) -> float:
    """Smoothing floor used when the prior comes from the consistency estimator."""
    return 1.0 / (2 * n_sub + C)


@dataclass(frozen=True)
class SamplingPolicy:
    kind: str = "cfbs"
    K: int = 1
    prior: str = "none"
    seed: int = 0

    def __post_init__(self):
        kind = self.kind.lower()
        object.__setattr__(self, "kind", kind)
        if kind not in POLICIES:
            raise ValueError(f"unknown sampling policy {self.kind!r}")
        if self.prior not in PRIOR_SOURCES:
            raise ValueError(f"unknown prior source {self.prior!r}")
        if kind == "pn-cfbs" and self.prior == "none":
            raise ValueError("pn-cfbs needs a prior source ('true' or '3c')")
        if kind != "rs" and self.K < 1:
            raise ValueError("K must be >= 1")

    def check(self, C: int) -> None:
        if self.kind != "rs" and not 1 <= self.K <= C:
            raise ValueError(f"K={self.K} outside [1, {C}]")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "K": self.K, "prior": self.prior, "seed": self.seed}


@dataclass(frozen=True, eq=False)
class HardnessReport:
    classes: np.ndarray
    frequency: np.ndarray
    metric: np.ndarray
    ranking: HardnessRanking
    hard_classes: np.ndarray
    prior: Optional[np.ndarray] = None
    n_eligible: int = 0

    def to_dict(self) -> dict:
        return {
            "classes": self.classes.tolist(),
            "frequency": self.frequency.tolist(),
            "prior": None if self.prior is None else self.prior.tolist(),
            "metric": self.metric.tolist(),
            "order": self.classes[self.ranking.order].tolist(),
            "hard_classes": self.hard_classes.tolist(),
            "n_eligible": self.n_eligible,
        }


@dataclass(frozen=True, eq=False)
class PseudoLabeledSet:
    """Pool indices drawn at one step, with their predicted labels."""

    indices: np.ndarray
    labels: np.ndarray
    iteration: int
    policy: dict
    quotas: dict = field(default_factory=dict)
    report: Optional[HardnessReport] = None
    fallback: Optional[str] = None

    def __len__(self) -> int:
        return self.indices.size

    def class_counts(self) -> dict:
        ids, counts = np.unique(self.labels, return_counts=True)
        return {int(c): int(n) for c, n in zip(ids, counts)}

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "policy": self.policy,
            "size": int(self.indices.size),
            "quotas": {str(k): v for k, v in self.quotas.items()},
            "class_counts": {str(k): v for k, v in self.class_counts().items()},
            "indices": self.indices.tolist(),
            "hardness": None if self.report is None else self.report.to_dict(),
            "fallback": self.fallback,
        }


def hardness_report(P, classes, policy: SamplingPolicy, prior=None, prior_floor=DEFAULT_PRIOR_FLOOR) -> HardnessReport:
    """Frequency, optional prior normalization and Top-K hard classes.

    Only predictions that fall in ``classes`` are counted; the frequency is
    renormalized over them.
    """
    classes = np.asarray(classes, dtype=np.int64)
    P = np.asarray(P, dtype=np.int64)
    inside = np.isin(P, classes)
    if not inside.any():
        raise EmptySelection("no prediction falls in the eligible classes")
    idx = np.searchsorted(classes, P[inside])
    f = class_frequency(idx, classes.size)
    metric = f
    if policy.kind == "pn-cfbs":
        if prior is None:
            raise ValueError("pn-cfbs needs a prior vector")
        metric = prior_normalize(f, prior, prior_floor)
    ranking = hardness_order(metric)
    K = min(policy.K, classes.size) if policy.kind != "rs" else classes.size
    return HardnessReport(
        classes=classes,
        frequency=f,
        metric=metric,
        ranking=ranking,
        hard_classes=classes[ranking.top(K)],
        prior=None if prior is None else np.asarray(prior, dtype=np.float64),
        n_eligible=int(inside.sum()),
    )


def allot_quotas(order: Sequence[int], populated, K: int, budget: int) -> dict:
    """Quota per class index for a hardest-first ``order``.

    The Top-K positions share ``budget`` evenly with the remainder going to the
    hardest ones. A position whose class has no members passes its quota to the
    next class in ``order`` that has members; whatever is still unplaced at the
    end goes to the hardest class that received any.
    """
    n, rem = divmod(budget, K)
    quotas, carry = {}, 0
    for pos, c in enumerate(order):
        q = (n + (pos < rem) if pos < K else 0) + carry
        if q == 0 and pos >= K:
            break
        if populated[c]:
            if q:
                quotas[int(c)] = q
            carry = 0
        else:
            carry = q
    if not quotas:
        raise EmptySelection("no hard class has predicted members")
    if carry:
        first = next(iter(quotas))
        quotas[first] += carry
    return quotas


def select_subset(
    P,
    classes,
    policy: SamplingPolicy,
    budget: int,
    prior=None,
    prior_floor: float = DEFAULT_PRIOR_FLOOR,
    seed=None,
    iteration: int = 0,
) -> PseudoLabeledSet:
    """Draw ``budget`` pool indices with their predicted labels.

    ``P`` holds the predicted class id of every pool member and ``classes`` the
    eligible (unseen) class ids; members predicted outside ``classes`` are never
    drawn. ``seed`` may be any value accepted by ``numpy.random.default_rng``.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    classes = np.unique(np.asarray(classes, dtype=np.int64))
    P = np.asarray(P, dtype=np.int64)
    policy.check(classes.size)
    rng = np.random.default_rng(seed)
    eligible = np.flatnonzero(np.isin(P, classes))
    if eligible.size == 0:
        raise EmptySelection("no pool member is predicted as an eligible class")

    if policy.kind == "rs":
        replace = budget > eligible.size
        picked = np.sort(rng.choice(eligible, size=budget, replace=replace))
        return PseudoLabeledSet(
            indices=picked,
            labels=P[picked],
            iteration=iteration,
            policy=policy.to_dict(),
        )

    report = hardness_report(P, classes, policy, prior, prior_floor)
    idx = np.searchsorted(classes, P[eligible])
    members = [eligible[idx == i] for i in range(classes.size)]
    populated = np.array([m.size > 0 for m in members])
    K = min(policy.K, classes.size)
    quotas = allot_quotas(report.ranking.order, populated, K, budget)

    chosen = []
    for i, q in quotas.items():
        chosen.append(rng.choice(members[i], size=q, replace=True))
    picked = np.concatenate(chosen)
    return PseudoLabeledSet(
        indices=picked,
        labels=P[picked],
        iteration=iteration,
        policy=policy.to_dict(),
        quotas={int(classes[i]): q for i, q in quotas.items()},
        report=report,
    )
