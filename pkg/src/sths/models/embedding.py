"""Semantic-to-visual embedding classifier.

A ridge map from class attributes to class-mean visual features supplies a
prototype for every class. Classes with ground-truth rows use their empirical
mean; classes known only through pseudo-labeled rows use a posterior mean that
shrinks the empirical mean toward the mapped prototype, with strength
``pseudo_shrinkage`` counted in samples. Prediction is the nearest prototype.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from sths.models.base import (
    PSEUDO,
    ModelError,
    TrainingSet,
    argmax_labels,
    class_means,
    ridge_map,
    sorted_candidates,
)


@dataclass(frozen=True)
class EmbeddingParams:
    lam: float = 1.0
    pseudo_shrinkage: float = 100.0
    hidden_width: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.pseudo_shrinkage < 0:
            raise ValueError("pseudo_shrinkage must be >= 0")
        if self.hidden_width < 0:
            raise ValueError("hidden_width must be >= 0")


def _expand(attributes: np.ndarray, hidden: Optional[np.ndarray]) -> np.ndarray:
    if hidden is None:
        return attributes
    return np.hstack([attributes, np.tanh(attributes @ hidden)])


@dataclass(frozen=True, eq=False)
class FittedEmbedding:
    W: np.ndarray
    prototypes: np.ndarray
    classes: np.ndarray
    hidden: Optional[np.ndarray] = None

    def mapped(self, attributes) -> np.ndarray:
        return _expand(np.asarray(attributes, dtype=float), self.hidden) @ self.W.T

    def scores(self, features, candidates) -> np.ndarray:
        """Negative squared distance to each candidate prototype.

        Columns follow ascending class id.
        """
        X = np.asarray(features, dtype=np.float64)
        cand = sorted_candidates(candidates)
        if X.ndim != 2 or (X.shape[0] and X.shape[1] != self.prototypes.shape[1]):
            raise ModelError(f"expected features of width {self.prototypes.shape[1]}, got shape {X.shape}")
        P = self.prototypes[cand]
        out = np.empty((X.shape[0], cand.size))
        for start in range(0, X.shape[0], 2048):
            diff = X[start : start + 2048, None, :] - P[None, :, :]
            out[start : start + 2048] = -np.einsum("ncv,ncv->nc", diff, diff)
        return out

    def predict(self, features, candidates) -> np.ndarray:
        return argmax_labels(self.scores(features, candidates), sorted_candidates(candidates))

    def state(self):
        arrays = {"W": self.W, "prototypes": self.prototypes, "classes": self.classes.astype(np.float64)}
        if self.hidden is not None:
            arrays["hidden"] = self.hidden
        return {"kind": "embedding"}, arrays

    @classmethod
    def from_state(cls, header, arrays):
        return cls(
            W=arrays["W"],
            prototypes=arrays["prototypes"],
            classes=arrays["classes"].astype(np.int64),
            hidden=arrays.get("hidden"),
        )


class EmbeddingModel:
    name = "embedding"

    def __init__(self, params: Optional[EmbeddingParams] = None, **kwargs):
        self.params = params or EmbeddingParams(**kwargs)

    def config(self) -> dict:
        return {"kind": self.name, **asdict(self.params)}

    def fit(self, train: TrainingSet, attributes, seed: Optional[int] = None) -> FittedEmbedding:
        if len(train) == 0:
            raise ModelError("training set is empty")
        attributes = np.asarray(attributes, dtype=np.float64)
        p = self.params
        hidden = None
        if p.hidden_width:
            rng = np.random.default_rng(seed)
            hidden = rng.normal(0.0, 1.0 / np.sqrt(attributes.shape[1]), size=(attributes.shape[1], p.hidden_width))
        classes, means, counts = class_means(train.features, train.labels)
        if classes.max() >= attributes.shape[0] or classes.min() < 0:
            raise ModelError("training label without an attribute row")
        A = _expand(attributes[classes], hidden)
        W = ridge_map(A, means, p.lam)
        protos = _expand(attributes, hidden) @ W.T

        # shrink pseudo-only classes toward their mapped prototype
        has_truth = np.zeros(attributes.shape[0], dtype=bool)
        has_truth[np.unique(train.labels[train.origin != PSEUDO])] = True
        kappa = np.where(has_truth[classes], 0.0, p.pseudo_shrinkage)
        weight = (counts / (counts + kappa))[:, None]
        protos[classes] = weight * means + (1.0 - weight) * protos[classes]
        return FittedEmbedding(W=W, prototypes=protos, classes=classes, hidden=hidden)


def fit_embedding(train: TrainingSet, attributes, params: Optional[EmbeddingParams] = None, seed=None):
    return EmbeddingModel(params).fit(train, attributes, seed)


def predict_embedding(model: FittedEmbedding, features, candidates) -> np.ndarray:
    return model.predict(features, candidates)
