"""Seeded synthetic ZSL benchmarks.

Class prototypes are a random linear image of the class attributes plus a
small attribute-unexplained residual. A fraction of the unseen classes is
made hard by pulling its prototype toward a neighbouring anchor prototype,
so that samples of the hard class land in another class's territory.
Samples are isotropic Gaussians around the prototypes.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from sths.dataset import ClassSplit, ZslDataset

IMBALANCE_LAWS = ("uniform", "zipf", "explicit")
ATTRIBUTE_SCHEMES = ("uniform", "binary", "gaussian")
ANCHORS = ("unseen", "seen")


class ConfigError(ValueError):
    """Invalid configuration; ``fields`` lists the offending keys."""

    def __init__(self, message: str, fields=()):
        super().__init__(message)
        self.fields = list(fields)


@dataclass(frozen=True)
class SyntheticConfig:
    seed: int
    n_seen: int = 20
    n_unseen: int = 10
    V: int = 32
    S: int = 12
    train_per_class: int = 40
    test_seen_per_class: int = 0
    unseen_per_class: int = 100
    imbalance: str = "uniform"
    zipf_exponent: float = 1.0
    proportions: tuple = ()
    unseen_total: Optional[int] = None
    attribute_scheme: str = "uniform"
    sigma: float = 1.0
    separation: float = 3.0
    residual: float = 0.3
    hardness_fraction: float = 0.5
    hardness_strength: float = 0.6
    hardness_anchor: str = "unseen"
    name: str = "synthetic"

    def __post_init__(self):
        object.__setattr__(self, "proportions", tuple(float(p) for p in self.proportions))
        self.validate()

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown synthetic config keys: {unknown}", unknown)
        if "seed" not in d:
            raise ConfigError("synthetic config is missing required field(s): ['seed']", ["seed"])
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["proportions"] = list(self.proportions)
        return d

    @property
    def total_unseen(self) -> int:
        return self.unseen_total if self.unseen_total is not None else self.unseen_per_class * self.n_unseen

    def validate(self) -> None:
        bad = []
        for name in ("n_seen", "n_unseen", "V", "S", "train_per_class", "unseen_per_class"):
            if int(getattr(self, name)) < 1:
                bad.append(name)
        if self.test_seen_per_class < 0:
            bad.append("test_seen_per_class")
        if not self.sigma > 0:
            bad.append("sigma")
        if self.separation <= 0:
            bad.append("separation")
        if self.residual < 0:
            bad.append("residual")
        if self.imbalance not in IMBALANCE_LAWS:
            bad.append("imbalance")
        if self.attribute_scheme not in ATTRIBUTE_SCHEMES:
            bad.append("attribute_scheme")
        if self.hardness_anchor not in ANCHORS:
            bad.append("hardness_anchor")
        if not 0 <= self.hardness_fraction <= 1:
            bad.append("hardness_fraction")
        elif self.hardness_anchor == "unseen" and self._n_hard() >= self.n_unseen and self._n_hard() > 0:
            bad.append("hardness_fraction")
        if not 0 <= self.hardness_strength <= 1:
            bad.append("hardness_strength")
        if self.unseen_total is not None and self.unseen_total < self.n_unseen:
            bad.append("unseen_total")
        if self.imbalance == "zipf" and self.zipf_exponent < 0:
            bad.append("zipf_exponent")
        if self.imbalance == "explicit":
            p = np.asarray(self.proportions, dtype=float)
            if p.shape != (self.n_unseen,) or np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-9:
                bad.append("proportions")
        if bad:
            raise ConfigError(f"invalid synthetic config field(s): {bad}", bad)

    def _n_hard(self) -> int:
        return int(round(self.hardness_fraction * self.n_unseen))


def zipf_weights(n: int, exponent: float) -> np.ndarray:
    """Normalized weights proportional to ``1 / rank**exponent``."""
    w = 1.0 / np.arange(1, n + 1, dtype=float) ** exponent
    return w / w.sum()


def apportion(weights, total: int) -> np.ndarray:
    """Integer counts summing to ``total`` by largest remainder, each >= 1."""
    weights = np.asarray(weights, dtype=float)
    n = weights.size
    if total < n:
        raise ValueError("total smaller than class count")
    exact = weights * total
    counts = np.floor(exact).astype(np.int64)
    short = total - int(counts.sum())
    order = np.argsort(-(exact - counts), kind="stable")
    counts[order[:short]] += 1
    while np.any(counts == 0):
        counts[np.argmax(counts)] -= 1
        counts[np.flatnonzero(counts == 0)[0]] += 1
    return counts


def unseen_class_sizes(cfg: SyntheticConfig) -> np.ndarray:
    """Per-unseen-class pool sizes implied by the imbalance law."""
    if cfg.imbalance == "uniform":
        if cfg.unseen_total is None:
            return np.full(cfg.n_unseen, cfg.unseen_per_class, dtype=np.int64)
        weights = np.full(cfg.n_unseen, 1.0 / cfg.n_unseen)
    elif cfg.imbalance == "zipf":
        weights = zipf_weights(cfg.n_unseen, cfg.zipf_exponent)
    else:
        weights = np.asarray(cfg.proportions, dtype=float)
    return apportion(weights, cfg.total_unseen)


@dataclass(frozen=True)
class SyntheticInfo:
    """Generator-side tally: per-class sizes, hard classes and anchors."""

    unseen_sizes: np.ndarray
    hard_classes: tuple
    anchors: dict = field(default_factory=dict)
    prototypes: Optional[np.ndarray] = None


def _attributes(rng: np.random.Generator, scheme: str, n: int, S: int) -> np.ndarray:
    if scheme == "uniform":
        a = rng.uniform(0.0, 1.0, size=(n, S))
    elif scheme == "binary":
        a = (rng.uniform(size=(n, S)) < 0.5).astype(float)
    else:
        a = rng.normal(size=(n, S))
    # degenerate rows are rejected downstream; give them one active attribute
    for i in np.flatnonzero(~a.any(axis=1)):
        a[i, rng.integers(S)] = 1.0
    return a


def generate_synthetic_with_info(cfg: SyntheticConfig):
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    C = cfg.n_seen + cfg.n_unseen
    seen = np.arange(cfg.n_seen)
    unseen = np.arange(cfg.n_seen, C)

    attrs = _attributes(rng, cfg.attribute_scheme, C, cfg.S)
    W = rng.normal(0.0, cfg.separation / np.sqrt(cfg.S), size=(cfg.V, cfg.S))
    protos = attrs @ W.T + rng.normal(0.0, cfg.residual, size=(C, cfg.V))

    n_hard = cfg._n_hard()
    order = rng.permutation(unseen)
    hard, easy = np.sort(order[:n_hard]), np.sort(order[n_hard:])
    anchors = {}
    base = protos.copy()
    pool = easy if cfg.hardness_anchor == "unseen" else seen
    for c in hard:
        d2 = ((base[pool] - base[c]) ** 2).sum(axis=1)
        a = int(pool[np.argmin(d2)])
        anchors[int(c)] = a
        protos[c] = base[c] + cfg.hardness_strength * (base[a] - base[c])

    sizes = unseen_class_sizes(cfg)

    def draw(classes, counts):
        labels = np.repeat(classes, counts)
        feats = protos[labels] + cfg.sigma * rng.normal(size=(labels.size, cfg.V))
        return feats, labels

    Xtr, ytr = draw(seen, np.full(cfg.n_seen, cfg.train_per_class))
    Xu, yu = draw(unseen, sizes)
    Xs = ys = None
    if cfg.test_seen_per_class > 0:
        Xs, ys = draw(seen, np.full(cfg.n_seen, cfg.test_seen_per_class))

    # pools are shuffled so that row order carries no class information
    pu = rng.permutation(yu.size)
    Xu, yu = Xu[pu], yu[pu]
    if Xs is not None:
        ps = rng.permutation(ys.size)
        Xs, ys = Xs[ps], ys[ps]

    names = [f"seen_{c}" for c in seen] + [f"unseen_{c}" for c in unseen]
    ds = ZslDataset.from_arrays(
        ClassSplit(seen, unseen),
        attrs,
        Xtr,
        ytr,
        Xu,
        yu,
        Xs,
        ys,
        name=cfg.name,
        class_names=names,
    )
    info = SyntheticInfo(
        unseen_sizes=sizes,
        hard_classes=tuple(int(c) for c in hard),
        anchors=anchors,
        prototypes=protos,
    )
    return ds, info


def generate_synthetic(cfg: SyntheticConfig) -> ZslDataset:
    """Build the dataset described by ``cfg``; a pure function of ``cfg``."""
    return generate_synthetic_with_info(cfg)[0]
