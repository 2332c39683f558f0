import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lowrank_recovery.experiments import SyntheticSpec, make_instance
from lowrank_recovery.operators import MeasurementOp, ProblemInstance, apply_op

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def matrices(min_side=1, max_side=8, bound=10.0):
    """Finite float matrices of random shape."""
    return st.tuples(st.integers(min_side, max_side), st.integers(min_side, max_side)).flatmap(
        lambda s: arrays(np.float64, s, elements=st.floats(-bound, bound, allow_nan=False,
                                                           width=64)))


seeds = st.integers(0, 2**32 - 1)


def gaussian_instance(n1=12, n2=12, r=2, m=200, seed=0, noiseless=True):
    """Dense Gaussian ensemble with entries N(0, 1) and a rank-r truth."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n1, n2))
    X = rng.standard_normal((n1, r)) @ rng.standard_normal((r, n2))
    op = MeasurementOp.dense_ensemble(A)
    return ProblemInstance(op, apply_op(op, X), r, X, noiseless)


@pytest.fixture
def dense_inst():
    return gaussian_instance()


@pytest.fixture
def completion_inst():
    return make_instance(SyntheticSpec(20, 20, 2, 0.6, 0.0, 7))


# acceptance verdicts, filled by test_acceptance and echoed after the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
