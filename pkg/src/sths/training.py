"""Iterative self-training driver.

Step 0 fits the base model on the labeled seen-class data and predicts the
unlabeled pool. Each later step refits from scratch on the seen data plus a
freshly selected pseudo-labeled subset whose size grows as ``floor(M/T) * t``.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from sths import __version__
from sths.dataset import ZslDataset, class_counts, dataset_fingerprint
from sths.models import make_model
from sths.models.base import TrainingSet
from sths.models.checkpoint import save_model
from sths.prior import estimate_prior_3c
from sths.sampling import (
    DEFAULT_PRIOR_FLOOR,
    EmptySelection,
    SamplingPolicy,
    prior_floor_3c,
    schedule_budget,
    select_subset,
)

TRACE_SCHEMA = 1

# fallback flags recorded per iteration
FB_EMPTY_SELECTION = "empty_selection_rs"
FB_NO_UNSEEN = "no_unseen_predictions_seen_only"
FB_FEW_UNSEEN = "fewer_than_k_unseen_classes_predicted"


class TrainingError(RuntimeError):
    """Base-model failure inside the loop; ``iteration`` is the failing step."""

    def __init__(self, iteration: int, cause: Exception):
        super().__init__(f"base model failed at iteration {iteration}: {cause}")
        self.iteration = iteration
        self.cause = cause


@dataclass(frozen=True)
class SthsConfig:
    """Self-training run settings.

    ``model`` holds the base-model kind and its hyperparameters. For PN-CFBS
    with ``policy.prior == "true"`` the prior vector is passed to the driver
    separately, since it comes from hidden labels.
    """

    T: int = 4
    policy: SamplingPolicy = field(default_factory=lambda: SamplingPolicy("cfbs", K=1))
    model: dict = field(default_factory=lambda: {"kind": "embedding"})
    seed: int = 0
    prior_d: int = 3
    prior_components: Optional[int] = None

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.prior_d < 1:
            raise ValueError("prior_d must be >= 1")
        if "kind" not in self.model:
            raise ValueError("model section needs a 'kind'")

    def build_model(self):
        params = {k: v for k, v in self.model.items() if k != "kind"}
        return make_model(self.model["kind"], **params)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["policy"] = self.policy.to_dict()
        d["model"] = dict(self.model)
        return d


@dataclass(frozen=True)
class GzslStrictConfig(SthsConfig):
    """Strict generalized setting: candidates span all classes and the pool
    mixes the seen and unseen test samples without marks."""


@dataclass
class RunTrace:
    config: dict
    setting: str
    dataset: str
    initial: dict
    iterations: list
    final_predictions: dict
    timing: dict = field(default_factory=dict)
    version: str = __version__

    @property
    def final_metrics(self) -> Optional[dict]:
        return self.iterations[-1]["metrics"] if self.iterations else self.initial.get("metrics")

    def to_dict(self) -> dict:
        """Deterministic content; wall times are kept out."""
        return {
            "schema_version": TRACE_SCHEMA,
            "version": self.version,
            "setting": self.setting,
            "dataset": self.dataset,
            "config": self.config,
            "initial": self.initial,
            "iterations": self.iterations,
            "final_predictions": self.final_predictions,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1, allow_nan=False)

    def save(self, directory) -> Path:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        (out / "trace.json").write_text(self.to_json() + "\n", encoding="utf-8")
        (out / "timing.json").write_text(json.dumps(self.timing, indent=1) + "\n", encoding="utf-8")
        with open(out / "predictions_final.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["pool", "index", "prediction"])
            for pool in sorted(self.final_predictions):
                for i, p in enumerate(self.final_predictions[pool]):
                    w.writerow([pool, i, p])
        return out

    @classmethod
    def load(cls, directory) -> "RunTrace":
        d = Path(directory)
        data = json.loads((d / "trace.json").read_text(encoding="utf-8"))
        timing = {}
        if (d / "timing.json").exists():
            timing = json.loads((d / "timing.json").read_text(encoding="utf-8"))
        return cls(
            config=data["config"],
            setting=data["setting"],
            dataset=data["dataset"],
            initial=data["initial"],
            iterations=data["iterations"],
            final_predictions=data["final_predictions"],
            timing=timing,
            version=data.get("version", __version__),
        )


def step_seed(seed: int, t: int, stream: int) -> int:
    """Independent integer seed for step ``t`` and purpose ``stream``."""
    return int(np.random.SeedSequence([seed, t, stream]).generate_state(1)[0])


def _select(P, classes, cfg, budget, pool_features, t, true_prior):
    """One selection with the declared fallback chain.

    Returns (PseudoLabeledSet or None, prior dict or None, flags).
    """
    policy = cfg.policy
    flags = []
    prior = prior_dict = None
    floor = DEFAULT_PRIOR_FLOOR
    inside = np.isin(P, classes)
    if not inside.any():
        return None, None, [FB_NO_UNSEEN]
    if policy.kind != "rs" and np.unique(P[inside]).size < min(policy.K, classes.size):
        flags.append(FB_FEW_UNSEEN)
    if policy.kind == "pn-cfbs":
        if policy.prior == "true":
            if true_prior is None:
                raise ValueError("prior source 'true' needs a true_prior vector")
            prior = np.asarray(true_prior, dtype=np.float64)
            prior_dict = {"source": "true", "prior": prior.tolist()}
        else:
            est = estimate_prior_3c(
                pool_features[inside],
                P[inside],
                classes,
                d=cfg.prior_d,
                components=cfg.prior_components,
                seed=step_seed(cfg.seed, t, 2),
            )
            prior = est.prior
            floor = prior_floor_3c(est.n_sub, classes.size)
            prior_dict = {"source": "3c", **est.to_dict()}
    rng_seed = [cfg.seed, t, 1]
    try:
        sel = select_subset(P, classes, policy, budget, prior, floor, seed=rng_seed, iteration=t)
    except EmptySelection:
        rs = SamplingPolicy("rs", policy.K, "none", policy.seed)
        sel = select_subset(P, classes, rs, budget, seed=rng_seed, iteration=t)
        sel = replace(sel, fallback=FB_EMPTY_SELECTION)
        flags.append(FB_EMPTY_SELECTION)
    return sel, prior_dict, flags


def _fit(model, train, attributes, seed, t):
    try:
        return model.fit(train, attributes, seed=seed)
    except Exception as exc:
        raise TrainingError(t, exc) from exc


def _loop(ds: ZslDataset, cfg: SthsConfig, pool_features, candidates, classes, evaluator, true_prior, checkpoint_dir):
    """Shared loop. ``candidates`` is the prediction label set and ``classes``
    the unseen classes eligible for selection."""
    model = cfg.build_model()
    M = pool_features.shape[0]
    C = classes.size
    cfg.policy.check(C)
    timing = {"iterations": []}
    start = time.perf_counter()

    def predict(fitted):
        return fitted.predict(pool_features, candidates)

    def checkpoint(fitted, t):
        if checkpoint_dir is not None:
            save_model(fitted, Path(checkpoint_dir) / f"model_{t:03d}.bin")

    train = TrainingSet.from_seen(ds.train_seen)
    fitted = _fit(model, train, ds.attributes, step_seed(cfg.seed, 0, 0), 0)
    checkpoint(fitted, 0)
    P = predict(fitted)
    initial = {
        "n_seen_train": len(ds.train_seen),
        "prediction_counts": class_counts(P, candidates).tolist(),
        "metrics": None if evaluator is None else evaluator(fitted, P).to_dict(),
    }
    timing["initial"] = time.perf_counter() - start

    iterations = []
    for t in range(1, cfg.T + 1):
        t0 = time.perf_counter()
        budget = schedule_budget(M, cfg.T, t)
        sel, prior_dict, flags = _select(P, classes, cfg, budget, pool_features, t, true_prior)
        if sel is None:
            train = TrainingSet.from_seen(ds.train_seen)
        else:
            train = TrainingSet.combine(ds.train_seen, pool_features[sel.indices], sel.labels)
        fitted = _fit(model, train, ds.attributes, step_seed(cfg.seed, t, 0), t)
        checkpoint(fitted, t)
        P = predict(fitted)
        iterations.append(
            {
                "t": t,
                "budget": budget,
                "fallback": flags,
                "n_seen_train": len(ds.train_seen),
                "n_pseudo": 0 if sel is None else len(sel),
                "pseudo_class_counts": class_counts(
                    np.empty(0) if sel is None else sel.labels, classes
                ).tolist(),
                "selection": None if sel is None else sel.to_dict(),
                "prior": prior_dict,
                "prediction_counts": class_counts(P, candidates).tolist(),
                "metrics": None if evaluator is None else evaluator(fitted, P).to_dict(),
            }
        )
        timing["iterations"].append(time.perf_counter() - t0)
    timing["total"] = time.perf_counter() - start
    return fitted, P, initial, iterations, timing


def run_sths(
    ds: ZslDataset,
    cfg: SthsConfig,
    evaluator: Optional[Callable] = None,
    true_prior=None,
    checkpoint_dir=None,
) -> RunTrace:
    """Conventional transductive run over the unseen test pool.

    ``evaluator(model, predictions)`` returns a metrics snapshot; it is the
    only place hidden labels may enter, and only for reporting.
    ``true_prior`` is the unseen-class prior for PN-CFBS with the true-prior
    source, ordered by ascending unseen class id.
    """
    unseen = ds.unseen
    pool = ds.test_unseen.features
    _, P, initial, iterations, timing = _loop(
        ds, cfg, pool, unseen, unseen, evaluator, true_prior, checkpoint_dir
    )
    return RunTrace(
        config=cfg.to_dict(),
        setting="zsl",
        dataset=dataset_fingerprint(ds),
        initial=initial,
        iterations=iterations,
        final_predictions={"test_unseen": P.tolist()},
        timing=timing,
    )


def run_baseline_rs(ds: ZslDataset, cfg: SthsConfig, evaluator=None, checkpoint_dir=None) -> RunTrace:
    """The same schedule with uniform pool sampling."""
    rs = SamplingPolicy("rs", cfg.policy.K, "none", cfg.policy.seed)
    return run_sths(ds, replace(cfg, policy=rs), evaluator, checkpoint_dir=checkpoint_dir)


def run_sths_gzsl_strict(
    ds: ZslDataset,
    cfg: SthsConfig,
    evaluator: Optional[Callable] = None,
    true_prior=None,
    checkpoint_dir=None,
) -> RunTrace:
    """Strict generalized run: one shuffled pool of seen and unseen test
    samples, predictions over all classes, selection among unseen-predicted
    members only."""
    if ds.test_seen is None:
        raise ValueError("the strict generalized setting needs a seen-class test pool")
    n_u, n_s = len(ds.test_unseen), len(ds.test_seen)
    mixed = np.vstack([ds.test_unseen.features, ds.test_seen.features])
    perm = np.random.default_rng([cfg.seed, 0, 3]).permutation(n_u + n_s)
    pool = mixed[perm]
    candidates = np.arange(ds.n_classes)
    _, P, initial, iterations, timing = _loop(
        ds, cfg, pool, candidates, ds.unseen, evaluator, true_prior, checkpoint_dir
    )
    back = np.empty_like(P)
    back[perm] = P
    return RunTrace(
        config=cfg.to_dict(),
        setting="gzsl-strict",
        dataset=dataset_fingerprint(ds),
        initial=initial,
        iterations=iterations,
        final_predictions={"test_unseen": back[:n_u].tolist(), "test_seen": back[n_u:].tolist()},
        timing=timing,
    )
