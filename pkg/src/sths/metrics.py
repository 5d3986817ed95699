"""Confusion-based metrics: per-class accuracy, ACC, precision and H."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)

UNDEFINED = float("nan")


class MetricError(ValueError):
    pass


def confusion(true_labels, predicted_labels, C: int) -> np.ndarray:
    """C x C counts; rows are true classes, columns predicted classes."""
    t = np.asarray(true_labels, dtype=np.int64).ravel()
    p = np.asarray(predicted_labels, dtype=np.int64).ravel()
    if t.size != p.size:
        raise MetricError(f"length mismatch: {t.size} true vs {p.size} predicted labels")
    if t.size and (min(t.min(), p.min()) < 0 or max(t.max(), p.max()) >= C):
        raise MetricError(f"label outside [0, {C})")
    return np.bincount(t * C + p, minlength=C * C).reshape(C, C)


def per_class_accuracy(cm) -> np.ndarray:
    """Diagonal over row sum; NaN for classes without samples."""
    cm = np.asarray(cm)
    rows = cm.sum(axis=1)
    out = np.full(cm.shape[0], UNDEFINED)
    ok = rows > 0
    out[ok] = np.diag(cm)[ok] / rows[ok]
    return out


def acc(cm, classes: Optional[Sequence[int]] = None) -> float:
    """Mean per-class accuracy over populated classes (optionally a subset)."""
    pca = per_class_accuracy(cm)
    if classes is not None:
        pca = pca[np.asarray(classes, dtype=np.int64)]
    ok = ~np.isnan(pca)
    if not ok.any():
        raise MetricError("no class has any samples")
    if not ok.all():
        log.warning("%d empty class(es) excluded from ACC", int((~ok).sum()))
    return float(pca[ok].mean())


def per_class_precision(cm) -> np.ndarray:
    """Diagonal over column sum; NaN marks a class that is never predicted."""
    cm = np.asarray(cm)
    cols = cm.sum(axis=0)
    out = np.full(cm.shape[0], UNDEFINED)
    ok = cols > 0
    out[ok] = np.diag(cm)[ok] / cols[ok]
    return out


def group_precision(cm, classes) -> float:
    """Mean precision over ``classes``, skipping undefined entries.

    NaN when no class in the group was ever predicted.
    """
    prec = per_class_precision(cm)[np.asarray(classes, dtype=np.int64)]
    prec = prec[~np.isnan(prec)]
    return float(prec.mean()) if prec.size else UNDEFINED


def harmonic_mean(U: float, S: float) -> float:
    """``2US / (U + S)``, 0 when both are 0. Works in fraction or percent units."""
    if U < 0 or S < 0:
        raise MetricError("harmonic mean needs non-negative inputs")
    if U + S == 0:
        return 0.0
    return 2.0 * U * S / (U + S)


def _nan_to_none(values) -> list:
    return [None if np.isnan(v) else float(v) for v in values]


@dataclass(frozen=True, eq=False)
class MetricsSnapshot:
    """Metrics of one prediction vector against hidden labels.

    ``classes`` lists the class ids the vectors refer to. ``U``, ``S`` and
    ``H`` are set only in the generalized setting.
    """

    classes: np.ndarray
    accuracy: np.ndarray
    precision: np.ndarray
    acc: float
    groups: dict = field(default_factory=dict)
    U: Optional[float] = None
    S: Optional[float] = None
    H: Optional[float] = None
    flags: tuple = ()

    def to_dict(self) -> dict:
        d = {
            "classes": self.classes.tolist(),
            "per_class_accuracy": _nan_to_none(self.accuracy),
            "per_class_precision": _nan_to_none(self.precision),
            "acc": self.acc,
            "group_precision": {k: (None if np.isnan(v) else v) for k, v in self.groups.items()},
            "flags": list(self.flags),
        }
        if self.H is not None:
            d.update(U=self.U, S=self.S, H=self.H)
        return d

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "accuracy", "precision"])
        for c, a, p in zip(self.classes, self.accuracy, self.precision):
            w.writerow([int(c), "" if np.isnan(a) else repr(float(a)), "" if np.isnan(p) else repr(float(p))])
        return buf.getvalue()


def snapshot(true_labels, predicted, C: int, classes, groups: Optional[dict] = None) -> MetricsSnapshot:
    """Conventional snapshot over ``classes`` (e.g. the unseen classes)."""
    classes = np.asarray(classes, dtype=np.int64)
    cm = confusion(true_labels, predicted, C)
    pca = per_class_accuracy(cm)[classes]
    prec = per_class_precision(cm)[classes]
    flags = []
    if np.isnan(pca).any():
        flags.append("empty_class_excluded")
    if np.isnan(prec).any():
        flags.append("never_predicted_class")
    g = {name: group_precision(cm, members) for name, members in (groups or {}).items()}
    return MetricsSnapshot(
        classes=classes,
        accuracy=pca,
        precision=prec,
        acc=acc(cm, classes),
        groups=g,
        flags=tuple(flags),
    )


def gzsl_snapshot(
    unseen_true, unseen_pred, seen_true, seen_pred, C: int, seen, unseen
) -> MetricsSnapshot:
    """U is ACC on the unseen test pool, S on the seen test pool, over all candidates."""
    seen = np.asarray(seen, dtype=np.int64)
    unseen = np.asarray(unseen, dtype=np.int64)
    cm_u = confusion(unseen_true, unseen_pred, C)
    cm_s = confusion(seen_true, seen_pred, C)
    U = acc(cm_u, unseen)
    S = acc(cm_s, seen)
    cm = cm_u + cm_s
    classes = np.concatenate([seen, unseen])
    order = np.argsort(classes)
    classes = classes[order]
    return MetricsSnapshot(
        classes=classes,
        accuracy=per_class_accuracy(cm)[classes],
        precision=per_class_precision(cm)[classes],
        acc=acc(cm_u, unseen),
        U=U,
        S=S,
        H=harmonic_mean(U, S),
    )


class Evaluator:
    """Scores a fitted model against hidden labels through an oracle.

    ``mode="zsl"`` scores the pool predictions over the unseen classes;
    ``mode="gzsl"`` predicts both test pools over all classes and adds U, S, H.
    ``groups`` maps a name to class ids for group precision.
    """

    def __init__(self, oracle, mode: str = "zsl", groups: Optional[dict] = None):
        if mode not in ("zsl", "gzsl"):
            raise ValueError(f"unknown evaluation mode {mode!r}")
        self.oracle = oracle
        self.mode = mode
        self.groups = groups

    def __call__(self, model, predictions=None) -> MetricsSnapshot:
        ds = self.oracle.dataset
        C = ds.n_classes
        if self.mode == "zsl":
            if predictions is None:
                predictions = model.predict(ds.test_unseen.features, ds.unseen)
            return snapshot(self.oracle.labels("test_unseen"), predictions, C, ds.unseen, self.groups)
        every = np.arange(C)
        pu = model.predict(ds.test_unseen.features, every)
        ps = model.predict(ds.test_seen.features, every)
        return gzsl_snapshot(
            self.oracle.labels("test_unseen"), pu, self.oracle.labels("test_seen"), ps, C, ds.seen, ds.unseen
        )
