import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=30, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=100, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """A 24-sample BRSR dataset (16 train / 4 val / 4 test)."""
    from brsr.dataset import DatasetConfig, generate_dataset, open_dataset

    root = tmp_path_factory.mktemp("ds_small")
    generate_dataset(DatasetConfig(n_train=16, n_val=4, n_test=4, seed=11), root)
    return open_dataset(root)


_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance():
    """``acceptance(n, passed, detail)`` records one criterion verdict for the summary."""

    def record(n: int, passed: bool, detail: str) -> bool:
        _ACCEPTANCE[n] = (bool(passed), detail)
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
