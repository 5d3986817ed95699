"""Oracle-label diagnostics of the uneven prediction phenomenon.

These experiments deliberately use ground-truth labels of the unseen pool to
isolate the effect of sample hardness from label noise. They take an
:class:`~sths.dataset.Oracle` and never run inside the training loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from sths.dataset import Oracle
from sths.metrics import acc, confusion, group_precision, per_class_accuracy
from sths.models.base import TrainingSet
from sths.sampling import HardnessRanking

FB_WITH_REPLACEMENT = "sampled_with_replacement"


def default_group_size(n_unseen: int) -> int:
    return min(6, n_unseen // 2)


def default_budget(M: int) -> int:
    return max(1, M // 10)


@dataclass(frozen=True, eq=False)
class UnevenReport:
    classes: np.ndarray
    accuracy: np.ndarray
    acc: float
    spread: float
    easy: np.ndarray
    hard: np.ndarray

    def to_dict(self) -> dict:
        return {
            "classes": self.classes.tolist(),
            "per_class_accuracy": self.accuracy.tolist(),
            "acc": self.acc,
            "spread": self.spread,
            "easy": self.easy.tolist(),
            "hard": self.hard.tolist(),
        }


@dataclass(frozen=True)
class DiagResult:
    acc: float
    baseline_acc: float
    budget: int
    detail: dict = field(default_factory=dict)
    flags: tuple = ()

    def to_dict(self) -> dict:
        return {
            "acc": self.acc,
            "baseline_acc": self.baseline_acc,
            "budget": self.budget,
            **self.detail,
            "flags": list(self.flags),
        }


def fit_inductive(oracle: Oracle, base, seed: Optional[int] = None):
    ds = oracle.dataset
    return base.fit(TrainingSet.from_seen(ds.train_seen), ds.attributes, seed=seed)


def _unseen_accuracy(oracle: Oracle, model) -> tuple:
    ds = oracle.dataset
    pred = model.predict(ds.test_unseen.features, ds.unseen)
    cm = confusion(oracle.labels("test_unseen"), pred, ds.n_classes)
    return cm, per_class_accuracy(cm)[ds.unseen]


def rank_by_accuracy(classes, accuracy) -> tuple:
    """(easiest-first, hardest-first) class ids; ties go to the smaller id."""
    classes = np.asarray(classes)
    a = np.nan_to_num(np.asarray(accuracy, dtype=float), nan=0.0)
    hardest = classes[np.argsort(a, kind="stable")]
    easiest = classes[np.argsort(-a, kind="stable")]
    return easiest, hardest


def diag_uneven_prediction(model, oracle: Oracle, group_size: Optional[int] = None) -> UnevenReport:
    """Per-class accuracy of ``model``, its max-min spread and the easy/hard
    groups (halves split at the median unless ``group_size`` is given)."""
    ds = oracle.dataset
    cm, pca = _unseen_accuracy(oracle, model)
    ok = ~np.isnan(pca)
    spread = float(pca[ok].max() - pca[ok].min()) if ok.any() else 0.0
    g = ds.unseen.size // 2 if group_size is None else group_size
    easiest, hardest = rank_by_accuracy(ds.unseen, pca)
    return UnevenReport(
        classes=ds.unseen,
        accuracy=pca,
        acc=acc(cm, ds.unseen),
        spread=spread,
        easy=np.sort(easiest[:g]),
        hard=np.sort(hardest[:g]),
    )


def _groups(oracle: Oracle, base, seed, group_size):
    ds = oracle.dataset
    g = default_group_size(ds.unseen.size) if group_size is None else group_size
    if g < 1:
        raise ValueError("need at least 2 unseen classes to form easy and hard groups")
    model = fit_inductive(oracle, base, seed)
    report = diag_uneven_prediction(model, oracle, g)
    return model, report


def _draw(members: np.ndarray, n: int, rng) -> tuple:
    if n <= members.size:
        return rng.choice(members, size=n, replace=False), False
    return rng.choice(members, size=n, replace=True), True


def _refit_with(oracle: Oracle, base, indices, seed) -> float:
    ds = oracle.dataset
    labels = oracle.labels("test_unseen")
    train = TrainingSet.combine(ds.train_seen, ds.test_unseen.features[indices], labels[indices])
    model = base.fit(train, ds.attributes, seed=seed)
    cm, _ = _unseen_accuracy(oracle, model)
    return acc(cm, ds.unseen)


def diag_retrain_contrast(
    oracle: Oracle,
    base,
    mode: str,
    budget: Optional[int] = None,
    seed: int = 0,
    group_size: Optional[int] = None,
) -> DiagResult:
    """ACC after refitting with ``budget`` truly labeled pool samples drawn
    uniformly from the easy group, the hard group or all unseen classes."""
    if mode not in ("easy", "hard", "all"):
        raise ValueError(f"unknown mode {mode!r}")
    ds = oracle.dataset
    M = len(ds.test_unseen)
    budget = default_budget(M) if budget is None else int(budget)
    model, report = _groups(oracle, base, seed, group_size)
    if budget == 0:
        return DiagResult(report.acc, report.acc, 0, {"mode": mode})
    labels = oracle.labels("test_unseen")
    group = {"easy": report.easy, "hard": report.hard, "all": ds.unseen}[mode]
    members = np.flatnonzero(np.isin(labels, group))
    rng = np.random.default_rng([seed, 7])
    picked, repl = _draw(members, budget, rng)
    score = _refit_with(oracle, base, np.sort(picked), seed)
    detail = {"mode": mode, "group": group.tolist()}
    return DiagResult(score, report.acc, budget, detail, (FB_WITH_REPLACEMENT,) if repl else ())


def diag_precision_contrast(oracle: Oracle, base, seed: int = 0, group_size: Optional[int] = None, model=None) -> dict:
    """Mean per-class precision of the inductive predictions for the easy
    group, the hard group and all unseen classes. NaN marks a group whose
    classes were never predicted."""
    ds = oracle.dataset
    if model is None:
        model = fit_inductive(oracle, base, seed)
    g = default_group_size(ds.unseen.size) if group_size is None else group_size
    report = diag_uneven_prediction(model, oracle, g)
    cm, _ = _unseen_accuracy(oracle, model)
    return {
        "easy": group_precision(cm, report.easy),
        "hard": group_precision(cm, report.hard),
        "all": group_precision(cm, ds.unseen),
        "easy_classes": report.easy.tolist(),
        "hard_classes": report.hard.tolist(),
    }


def diag_diversity(
    oracle: Oracle,
    base,
    top_counts: Sequence[int] = (1, 2, 4),
    budget: Optional[int] = None,
    seed: int = 0,
) -> dict:
    """ACC after refitting with ``budget`` truly labeled samples spread evenly
    over the Top-k hardest classes, for each k in ``top_counts``."""
    ds = oracle.dataset
    M = len(ds.test_unseen)
    budget = default_budget(M) if budget is None else int(budget)
    model = fit_inductive(oracle, base, seed)
    report = diag_uneven_prediction(model, oracle)
    _, hardest = rank_by_accuracy(ds.unseen, report.accuracy)
    labels = oracle.labels("test_unseen")
    out = {"baseline_acc": report.acc, "budget": budget, "groups": []}
    for k in top_counts:
        if not 1 <= k <= ds.unseen.size:
            raise ValueError(f"top count {k} outside [1, {ds.unseen.size}]")
        if budget == 0:
            out["groups"].append({"top": k, "classes": hardest[:k].tolist(), "acc": report.acc, "flags": []})
            continue
        rng = np.random.default_rng([seed, 11])
        n, rem = divmod(budget, k)
        picked, flags = [], []
        for pos, c in enumerate(hardest[:k]):
            members = np.flatnonzero(labels == c)
            q = n + (pos < rem)
            if q == 0 or members.size == 0:
                continue
            idx, repl = _draw(members, q, rng)
            if repl and FB_WITH_REPLACEMENT not in flags:
                flags.append(FB_WITH_REPLACEMENT)
            picked.append(idx)
        picked = np.sort(np.concatenate(picked))
        out["groups"].append(
            {"top": k, "classes": hardest[:k].tolist(), "acc": _refit_with(oracle, base, picked, seed), "flags": flags}
        )
    return out


def hard_class_identification_ratio(ranking, per_class_acc, fraction: float) -> float:
    """Share of the accuracy-defined hard classes that the ranking puts in its
    hardest ``fraction``.

    ``ranking`` is a :class:`HardnessRanking` or a hardest-first sequence of
    positions into ``per_class_acc``. The ground-truth hard set is the
    ``ceil(fraction * C)`` lowest accuracies, ties broken by position.
    """
    if not 0 < fraction <= 1:
        raise ValueError("fraction must be in (0, 1]")
    order = ranking.order if isinstance(ranking, HardnessRanking) else np.asarray(ranking)
    a = np.nan_to_num(np.asarray(per_class_acc, dtype=float), nan=0.0)
    C = a.size
    if sorted(order.tolist()) != list(range(C)):
        raise ValueError("ranking must be a permutation of the class positions")
    n = max(1, math.ceil(fraction * C - 1e-12))
    truth = set(np.argsort(a, kind="stable")[:n].tolist())
    found = set(order[:n].tolist())
    return len(truth & found) / len(truth)


def fig1_report(
    oracle: Oracle,
    base,
    seed: int = 0,
    budget: Optional[int] = None,
    group_size: Optional[int] = None,
    top_counts: Sequence[int] = (1, 2, 4),
) -> dict:
    """The four uneven-prediction experiments as one JSON-ready dict."""
    ds = oracle.dataset
    model = fit_inductive(oracle, base, seed)
    g = default_group_size(ds.unseen.size) if group_size is None else group_size
    out = {"seed": seed, "uneven": diag_uneven_prediction(model, oracle).to_dict()}
    if g < 1:
        reason = "fewer than 2 unseen classes; easy and hard groups are undefined"
        out["retrain"] = {"skipped": reason}
        out["precision"] = {"skipped": reason}
    else:
        out["retrain"] = {
            m: diag_retrain_contrast(oracle, base, m, budget, seed, g).to_dict() for m in ("easy", "hard", "all")
        }
        prec = diag_precision_contrast(oracle, base, seed, g, model=model)
        out["precision"] = {k: (None if isinstance(v, float) and np.isnan(v) else v) for k, v in prec.items()}
    counts = [k for k in top_counts if k <= ds.unseen.size]
    if ds.unseen.size < 2:
        out["diversity"] = {"skipped": "a single unseen class leaves nothing to diversify"}
    else:
        out["diversity"] = diag_diversity(oracle, base, counts, budget, seed)
        if len(counts) < len(top_counts):
            out["diversity"]["dropped_top_counts"] = [k for k in top_counts if k > ds.unseen.size]
    return out
