"""Feature-synthesis classifier.

Class means are regressed from attributes, a shared diagonal covariance is
pooled from within-class residuals, and ``fakes_per_class`` Gaussian samples
are drawn for every class. A multinomial logistic classifier is then trained
on the real rows plus the fakes.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from sths.models.base import (
    ModelError,
    TrainingSet,
    argmax_labels,
    class_means,
    ridge_map,
    sorted_candidates,
)

VAR_FLOOR = 1e-6


@dataclass(frozen=True)
class GenerativeParams:
    lam: float = 1.0
    fakes_per_class: int = 50
    var_floor: float = VAR_FLOOR
    lr: float = 0.05
    epochs: int = 150
    weight_decay: float = 1e-4

    def __post_init__(self):
        if self.fakes_per_class < 1:
            raise ValueError("fakes_per_class must be >= 1")
        if not self.var_floor > 0:
            raise ValueError("var_floor must be > 0")
        if self.lam < 0 or self.lr <= 0 or self.epochs < 1 or self.weight_decay < 0:
            raise ValueError("invalid classifier hyperparameters")


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def train_softmax(X, y, n_classes, lr, epochs, weight_decay):
    """Full-batch Adam on the mean cross-entropy; zero init, so deterministic."""
    N, D = X.shape
    Y = np.zeros((N, n_classes))
    Y[np.arange(N), y] = 1.0
    Wt = np.zeros((D, n_classes))
    b = np.zeros(n_classes)
    mW, vW = np.zeros_like(Wt), np.zeros_like(Wt)
    mb, vb = np.zeros_like(b), np.zeros_like(b)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    for step in range(1, epochs + 1):
        G = (_softmax_rows(X @ Wt + b) - Y) / N
        gW = X.T @ G + weight_decay * Wt
        gb = G.sum(axis=0)
        mW = beta1 * mW + (1 - beta1) * gW
        vW = beta2 * vW + (1 - beta2) * gW**2
        mb = beta1 * mb + (1 - beta1) * gb
        vb = beta2 * vb + (1 - beta2) * gb**2
        c1, c2 = 1 - beta1**step, 1 - beta2**step
        Wt -= lr * (mW / c1) / (np.sqrt(vW / c2) + eps)
        b -= lr * (mb / c1) / (np.sqrt(vb / c2) + eps)
    return Wt, b


@dataclass(frozen=True, eq=False)
class FittedGenerative:
    W: np.ndarray
    variance: np.ndarray
    coef: np.ndarray
    intercept: np.ndarray
    center: np.ndarray
    scale: np.ndarray

    def regressed_means(self, attributes) -> np.ndarray:
        return np.asarray(attributes, dtype=float) @ self.W.T

    def scores(self, features, candidates) -> np.ndarray:
        """Classifier logits restricted to ``candidates`` (ascending class id)."""
        X = np.asarray(features, dtype=np.float64)
        cand = sorted_candidates(candidates)
        if X.ndim != 2 or (X.shape[0] and X.shape[1] != self.center.shape[0]):
            raise ModelError(f"expected features of width {self.center.shape[0]}, got shape {X.shape}")
        if cand.max() >= self.coef.shape[1]:
            raise ModelError("candidate class outside the classifier's label space")
        logits = ((X - self.center) / self.scale) @ self.coef + self.intercept
        return logits[:, cand]

    def predict(self, features, candidates) -> np.ndarray:
        return argmax_labels(self.scores(features, candidates), sorted_candidates(candidates))

    def state(self):
        arrays = {k: getattr(self, k) for k in ("W", "variance", "coef", "intercept", "center", "scale")}
        return {"kind": "generative"}, arrays

    @classmethod
    def from_state(cls, header, arrays):
        return cls(**arrays)


class GenerativeModel:
    name = "generative"

    def __init__(self, params: Optional[GenerativeParams] = None, **kwargs):
        self.params = params or GenerativeParams(**kwargs)

    def config(self) -> dict:
        return {"kind": self.name, **asdict(self.params)}

    def fit(self, train: TrainingSet, attributes, seed: Optional[int] = None) -> FittedGenerative:
        if len(train) == 0:
            raise ModelError("training set is empty")
        p = self.params
        attributes = np.asarray(attributes, dtype=np.float64)
        rng = np.random.default_rng(seed)
        X, y = train.features, train.labels
        classes, means, counts = class_means(X, y)
        W = ridge_map(attributes[classes], means, p.lam)
        mu = attributes @ W.T

        if classes.size < 2:
            warnings.warn("fewer than 2 classes to pool a covariance from; using identity", RuntimeWarning)
            var = np.ones(X.shape[1])
        else:
            resid = X - means[np.searchsorted(classes, y)]
            var = (resid**2).sum(axis=0) / max(len(y) - classes.size, 1)
        var = np.maximum(var, p.var_floor)

        n_classes = attributes.shape[0]
        fake_y = np.repeat(np.arange(n_classes), p.fakes_per_class)
        fakes = mu[fake_y] + np.sqrt(var) * rng.standard_normal((fake_y.size, X.shape[1]))

        Xall = np.vstack([X, fakes])
        yall = np.concatenate([y, fake_y])
        center = Xall.mean(axis=0)
        scale = np.maximum(Xall.std(axis=0), 1e-8)
        coef, intercept = train_softmax((Xall - center) / scale, yall, n_classes, p.lr, p.epochs, p.weight_decay)
        return FittedGenerative(W=W, variance=var, coef=coef, intercept=intercept, center=center, scale=scale)


def fit_generative(train: TrainingSet, attributes, params: Optional[GenerativeParams] = None, seed=None):
    return GenerativeModel(params).fit(train, attributes, seed)


def predict_generative(model: FittedGenerative, features, candidates) -> np.ndarray:
    return model.predict(features, candidates)
