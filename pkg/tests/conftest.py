import numpy as np
import pytest

from sths.dataset import ClassSplit, ZslDataset
from sths.synthetic import SyntheticConfig, generate_synthetic


@pytest.fixture
def tiny():
    """Hand-built dataset: 2 seen, 2 unseen classes in 2-D, well separated."""
    attrs = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, 0.5]])
    rng = np.random.default_rng(0)
    W = np.array([[3.0, 0.0], [0.0, 3.0]])
    protos = attrs @ W.T
    ytr = np.repeat([0, 1], 10)
    Xtr = protos[ytr] + 0.05 * rng.normal(size=(20, 2))
    yu = np.repeat([2, 3], 15)
    Xu = protos[yu] + 0.05 * rng.normal(size=(30, 2))
    ys = np.repeat([0, 1], 5)
    Xs = protos[ys] + 0.05 * rng.normal(size=(10, 2))
    return ZslDataset.from_arrays(ClassSplit([0, 1], [2, 3]), attrs, Xtr, ytr, Xu, yu, Xs, ys, name="tiny")


@pytest.fixture
def small_synth():
    return generate_synthetic(
        SyntheticConfig(seed=3, n_seen=8, n_unseen=6, V=10, S=6, train_per_class=15, unseen_per_class=20, test_seen_per_class=5)
    )


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record and print one acceptance line; returns whether it passed."""

    def record(number, ok, detail, informational=False):
        tag = "INFO" if informational else ("PASS" if ok else "FAIL")
        line = f"{tag} criterion {number}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
