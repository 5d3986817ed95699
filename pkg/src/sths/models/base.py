"""Shared pieces of the base-classifier contract."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Protocol

import numpy as np

from sths.dataset import SampleSet

SEEN, PSEUDO = 0, 1


class ModelError(RuntimeError):
    """A base model could not be fitted or applied."""


class SingularSystemError(ModelError):
    pass


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """Labeled training rows with an origin tag per row.

    ``origin`` is ``SEEN`` (ground truth from the seen-class training set) or
    ``PSEUDO`` (a pool sample carrying a predicted label).
    """

    features: np.ndarray
    labels: np.ndarray
    origin: np.ndarray

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        origin = np.asarray(self.origin, dtype=np.int8)
        if feats.ndim != 2 or labels.shape != (feats.shape[0],) or origin.shape != labels.shape:
            raise ValueError("features, labels and origin must agree in length")
        if np.any((origin != SEEN) & (origin != PSEUDO)):
            raise ValueError("origin tags must be SEEN or PSEUDO")
        for name, arr in (("features", feats), ("labels", labels), ("origin", origin)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @classmethod
    def from_seen(cls, seen: SampleSet) -> "TrainingSet":
        n = len(seen)
        return cls(seen.features, seen.labels, np.full(n, SEEN))

    @classmethod
    def combine(cls, seen: SampleSet, pseudo_features=None, pseudo_labels=None) -> "TrainingSet":
        if pseudo_features is None or len(pseudo_labels) == 0:
            return cls.from_seen(seen)
        pseudo_features = np.asarray(pseudo_features, dtype=np.float64)
        return cls(
            np.concatenate([seen.features, pseudo_features]),
            np.concatenate([seen.labels, np.asarray(pseudo_labels, dtype=np.int64)]),
            np.concatenate([np.full(len(seen), SEEN), np.full(len(pseudo_labels), PSEUDO)]),
        )

    def __len__(self) -> int:
        return self.labels.shape[0]

    def check_pseudo(self, unseen) -> None:
        bad = ~np.isin(self.labels[self.origin == PSEUDO], np.asarray(unseen))
        if bad.any():
            raise ValueError("pseudo-labeled rows must carry unseen-class labels")


def sorted_candidates(candidates) -> np.ndarray:
    cand = np.unique(np.asarray(candidates, dtype=np.int64))
    if cand.size == 0:
        raise ValueError("candidate label set is empty")
    return cand


def argmax_labels(scores: np.ndarray, candidates) -> np.ndarray:
    """Per-row argmax over columns ordered like ascending ``candidates``.

    ``np.argmax`` returns the first maximal column, which is the smallest class id.
    """
    cand = np.asarray(candidates, dtype=np.int64)
    if scores.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    return cand[np.argmax(scores, axis=1)]


def ridge_map(A: np.ndarray, M: np.ndarray, lam: float) -> np.ndarray:
    """W minimizing sum_i ||W a_i - m_i||^2 + lam ||W||^2; rows of A and M pair up.

    Returns W with shape (M.shape[1], A.shape[1]).
    """
    if lam < 0:
        raise ValueError("ridge penalty must be >= 0")
    G = A.T @ A + lam * np.eye(A.shape[1])
    if lam == 0 and np.linalg.matrix_rank(G) < G.shape[0]:
        raise SingularSystemError(
            f"normal equations are singular ({A.shape[0]} classes for {A.shape[1]} attribute dims); use lam > 0"
        )
    try:
        return np.linalg.solve(G, A.T @ M).T
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"normal equations are singular ({exc}); use lam > 0") from None


def class_means(features: np.ndarray, labels: np.ndarray):
    classes, inverse, counts = np.unique(labels, return_inverse=True, return_counts=True)
    sums = np.zeros((classes.size, features.shape[1]))
    np.add.at(sums, inverse, features)
    return classes, sums / counts[:, None], counts


class FittedModel(Protocol):
    def scores(self, features, candidates) -> np.ndarray: ...

    def predict(self, features, candidates) -> np.ndarray: ...


class BaseModel(Protocol):
    """Anything the self-training driver can refit every iteration."""

    name: str

    def fit(self, train: TrainingSet, attributes: np.ndarray, seed: Optional[int] = None) -> FittedModel: ...
