import json

import numpy as np
import pytest

from sths.dataset import Oracle, with_hidden_labels
from sths.metrics import Evaluator
from sths.models.base import PSEUDO
from sths.sampling import SamplingPolicy
from sths.synthetic import SyntheticConfig, generate_synthetic
from sths.training import (
    FB_NO_UNSEEN,
    RunTrace,
    SthsConfig,
    TrainingError,
    run_baseline_rs,
    run_sths,
    run_sths_gzsl_strict,
)


@pytest.fixture(scope="module")
def ds():
    return generate_synthetic(SyntheticConfig(seed=11, n_seen=10, n_unseen=6, unseen_per_class=30, test_seen_per_class=10))


def cfbs(T=3, K=3, seed=0, **kw):
    return SthsConfig(T=T, policy=SamplingPolicy("cfbs", K=K), seed=seed, **kw)


def test_single_step_uses_whole_budget(ds):
    trace = run_sths(ds, cfbs(T=1))
    assert len(trace.iterations) == 1
    assert trace.iterations[0]["n_pseudo"] == len(ds.test_unseen)


def test_exactly_t_records_and_budget_law(ds):
    M = len(ds.test_unseen)
    for T in (1, 2, 5, 7):
        trace = run_sths(ds, cfbs(T=T))
        assert [it["t"] for it in trace.iterations] == list(range(1, T + 1))
        for it in trace.iterations:
            assert not it["fallback"]
            assert it["n_pseudo"] == (M // T) * it["t"] == it["budget"]


def test_same_seed_gives_identical_trace(ds):
    a = run_sths(ds, cfbs(seed=4), Evaluator(Oracle(ds)))
    b = run_sths(ds, cfbs(seed=4), Evaluator(Oracle(ds)))
    assert a.to_json() == b.to_json()
    assert a.to_json() != run_sths(ds, cfbs(seed=5)).to_json()


def test_rs_and_cfbs_share_the_schedule(ds):
    a = run_sths(ds, cfbs())
    b = run_baseline_rs(ds, cfbs())
    assert [it["budget"] for it in a.iterations] == [it["budget"] for it in b.iterations]
    assert b.config["policy"]["kind"] == "rs"
    assert b.iterations[0]["selection"]["hardness"] is None


def test_selection_is_redrawn_each_step(ds):
    trace = run_sths(ds, cfbs(T=3))
    sels = [it["selection"] for it in trace.iterations]
    assert [s["iteration"] for s in sels] == [1, 2, 3]
    assert all(s["size"] == len(s["indices"]) for s in sels)


def test_hidden_labels_never_reach_training(ds):
    """Replace the hidden labels with sentinels: predictions must not change."""
    sentinel = with_hidden_labels(
        ds, test_unseen=np.full(len(ds.test_unseen), ds.unseen[0]), test_seen=np.full(len(ds.test_seen), ds.seen[0])
    )
    for policy in (SamplingPolicy("cfbs", K=3), SamplingPolicy("pn-cfbs", K=3, prior="3c"), SamplingPolicy("rs")):
        cfg = SthsConfig(T=3, policy=policy, seed=2)
        assert run_sths(ds, cfg).final_predictions == run_sths(sentinel, cfg).final_predictions
        assert run_sths_gzsl_strict(ds, cfg).final_predictions == run_sths_gzsl_strict(sentinel, cfg).final_predictions


def test_pn_cfbs_records_prior(ds):
    trace = run_sths(ds, SthsConfig(T=2, policy=SamplingPolicy("pn-cfbs", K=2, prior="3c"), prior_d=2))
    for it in trace.iterations:
        assert it["prior"]["source"] == "3c"
        assert abs(sum(it["prior"]["prior"]) - 1) < 1e-12
    with pytest.raises(ValueError):
        run_sths(ds, SthsConfig(T=2, policy=SamplingPolicy("pn-cfbs", K=2, prior="true")))
    true = np.full(6, 1 / 6)
    trace = run_sths(ds, SthsConfig(T=2, policy=SamplingPolicy("pn-cfbs", K=2, prior="true")), true_prior=true)
    assert trace.iterations[0]["prior"]["prior"] == true.tolist()


def test_strict_gzsl_selects_unseen_predictions_only(ds):
    trace = run_sths_gzsl_strict(ds, cfbs(), Evaluator(Oracle(ds), "gzsl"))
    for it in trace.iterations:
        labels = set(int(c) for c in it["selection"]["class_counts"])
        assert labels <= set(ds.unseen.tolist())
    m = trace.final_metrics
    assert {"U", "S", "H"} <= set(m)
    assert len(trace.final_predictions["test_unseen"]) == len(ds.test_unseen)
    assert len(trace.final_predictions["test_seen"]) == len(ds.test_seen)


def test_strict_gzsl_needs_seen_pool():
    ds = generate_synthetic(SyntheticConfig(seed=0, n_unseen=4, unseen_per_class=10))
    with pytest.raises(ValueError):
        run_sths_gzsl_strict(ds, cfbs(K=2))


class SeenOnly:
    """Base model whose predictions never name an unseen class."""

    class Fitted:
        def __init__(self, seen):
            self.seen = seen

        def predict(self, X, candidates):
            return np.full(len(X), self.seen)

    def fit(self, train, attributes, seed=None):
        return self.Fitted(int(train.labels[train.origin != PSEUDO].min()))


def test_no_unseen_predictions_trains_on_seen_alone(ds, monkeypatch):
    monkeypatch.setattr(SthsConfig, "build_model", lambda self: SeenOnly())
    trace = run_sths_gzsl_strict(ds, cfbs())
    for it in trace.iterations:
        assert it["fallback"] == [FB_NO_UNSEEN]
        assert it["n_pseudo"] == 0


class Exploding:
    def fit(self, train, attributes, seed=None):
        if (train.origin == PSEUDO).any():
            raise np.linalg.LinAlgError("boom")
        from sths.models import EmbeddingModel

        return EmbeddingModel().fit(train, attributes)


def test_fit_failure_names_iteration(ds, monkeypatch):
    monkeypatch.setattr(SthsConfig, "build_model", lambda self: Exploding())
    with pytest.raises(TrainingError) as err:
        run_sths(ds, cfbs())
    assert err.value.iteration == 1


def test_trace_round_trip(tmp_path, ds):
    trace = run_sths(ds, cfbs(), Evaluator(Oracle(ds)), checkpoint_dir=tmp_path / "ck")
    out = trace.save(tmp_path / "run")
    assert (out / "predictions_final.csv").read_text().splitlines()[0] == "pool,index,prediction"
    assert sorted(p.name for p in (tmp_path / "ck").iterdir()) == [f"model_{t:03d}.bin" for t in range(4)]
    back = RunTrace.load(out)
    assert back.to_json() == trace.to_json()
    data = json.loads((out / "trace.json").read_text())
    assert data["schema_version"] == 1 and "timing" not in data


def test_config_validation():
    with pytest.raises(ValueError):
        SthsConfig(T=0)
    with pytest.raises(ValueError):
        SthsConfig(model={})
