import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from conftest import gaussian_instance, seeds
from lowrank_recovery.errors import ConfigurationError, DegenerateStepError, DivergenceError
from lowrank_recovery.experiments import SyntheticSpec, make_instance, matched_config
from lowrank_recovery.linalg import hard_threshold_rank, numerical_rank, span_of
from lowrank_recovery.operators import (MeasurementOp, ProblemInstance, apply_op,
                                        estimate_subspace_rip, full_gradient, objective)
from lowrank_recovery.solvers import (ALIASES, SOLVERS, BarzilaiBorwein, FixedStep, SolverConfig,
                                      Termination, TheoryGuided, bb_step, canonical_name, niht,
                                      niht_step, solve, stoiht, svp, svrg_arm, svt, svt_defaults)

ALL = sorted(SOLVERS)


def completion(n=20, r=2, rho=0.6, seed=7, sigma=0.0):
    return make_instance(SyntheticSpec(n, n, r, rho, sigma, seed))


def zero_data(inst):
    return ProblemInstance(inst.op, np.zeros(inst.m), inst.rank)


# --- configuration ---------------------------------------------------------

@pytest.mark.parametrize("kwargs", [dict(outer_iterations=0), dict(inner_iterations=0),
                                    dict(tolerance=0.0), dict(batch_size=0),
                                    dict(init="random"), dict(step=0.1)])
def test_config_validation(kwargs):
    with pytest.raises(ConfigurationError):
        SolverConfig(**kwargs)


def test_step_rule_validation():
    with pytest.raises(ConfigurationError):
        FixedStep(0.0)
    with pytest.raises(ConfigurationError):
        BarzilaiBorwein(clamp_min=1.0, clamp_max=0.5)
    with pytest.raises(ConfigurationError):
        BarzilaiBorwein(eta0=-1.0)
    with pytest.raises(ConfigurationError):
        TheoryGuided(0.5)
    assert TheoryGuided(0.0).eta == pytest.approx(0.5)
    assert TheoryGuided(0.0, 0.0).eta == pytest.approx(5 / 12)


def test_batch_larger_than_m_rejected():
    inst = completion(6, 1, 0.5, 0)
    with pytest.raises(ConfigurationError):
        svrg_arm(inst, SolverConfig(batch_size=inst.m + 1))


def test_inner_count_default():
    assert SolverConfig().inner_count(240) == 240
    assert SolverConfig(batch_size=25).inner_count(1250) == 50
    assert SolverConfig(inner_iterations=3).inner_count(240) == 3


def test_registry_and_aliases():
    assert canonical_name("SVRG-ARM") == "svrg"
    assert canonical_name("iht") == "svp"
    assert set(ALIASES.values()) <= set(SOLVERS)
    with pytest.raises(ConfigurationError):
        canonical_name("cgiht")


# --- bb step -----------------------------------------------------------------

def test_bb_unit_curvature():
    s = np.array([[1.0, 2.0], [0.5, -1.0]])
    assert bb_step(np.zeros((2, 2)), s, np.zeros((2, 2)), s, 1, 0.1) == pytest.approx(1.0)


def test_bb_curvature_two():
    s = np.array([[1.0, 2.0], [0.5, -1.0]])
    assert bb_step(np.zeros((2, 2)), s, np.zeros((2, 2)), 2 * s, 1, 0.1) == pytest.approx(0.5)


def test_bb_divides_by_inner_count():
    s = np.ones((2, 2))
    assert bb_step(np.zeros((2, 2)), s, np.zeros((2, 2)), 2 * s, 10, 0.1) == pytest.approx(0.05)


def test_bb_nonpositive_curvature_falls_back():
    s = np.ones((2, 2))
    assert bb_step(np.zeros((2, 2)), s, np.zeros((2, 2)), -s, 1, 0.3) == 0.3
    assert bb_step(np.zeros((2, 2)), s, np.zeros((2, 2)), np.zeros((2, 2)), 1, 0.3) == 0.3


def test_bb_clamps_fallback_and_quotient():
    s = np.ones((2, 2))
    # quotient 1e3 is outside [1e-6, 1e2]: fallback, itself clamped
    assert bb_step(np.zeros((2, 2)), s, np.zeros((2, 2)), 1e-3 * s, 1, 500.0) == 1e2
    assert bb_step(np.zeros((2, 2)), s, np.zeros((2, 2)), -s, 1, 1e-9) == 1e-6


def test_bb_identical_snapshots():
    with pytest.raises(DegenerateStepError):
        bb_step(np.ones((2, 2)), np.ones((2, 2)), np.zeros((2, 2)), np.ones((2, 2)), 1, 0.1)


@given(seeds, st.floats(0.1, 10))
def test_bb_recovers_quadratic_curvature(seed, c):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((3, 3)), rng.standard_normal((3, 3))
    # gradient of c/2 ||X||^2 is c X
    assert bb_step(a, b, c * a, c * b, 1, 1.0, 1e-6, 1e2) == pytest.approx(1 / c, rel=1e-10)


# --- trivial fixed points ----------------------------------------------------

@pytest.mark.parametrize("name", ALL)
def test_zero_data_returns_zero(name):
    inst = zero_data(completion())
    res = solve(name, inst, SolverConfig())
    assert res.terminated is Termination.RESIDUAL_TOL
    assert len(res.trace) == 1 and res.final.iteration == 0
    assert np.array_equal(res.estimate, np.zeros(inst.shape))
    assert res.final.residual == 0.0


# --- svrg-arm --------------------------------------------------------------

def test_svrg_recovers_completion():
    inst = completion(seed=7)
    res = svrg_arm(inst, SolverConfig(seed=7))
    assert res.final.rel_error <= 1e-3
    assert numerical_rank(res.estimate) <= 2


def test_svrg_full_rank_square_system_matches_direct_solve():
    rng = np.random.default_rng(0)
    # well-conditioned square ensemble: orthogonal rows scaled into [1, 2]
    Q, _ = np.linalg.qr(rng.standard_normal((9, 9)))
    flat = Q * np.linspace(1.0, 2.0, 9)
    op = MeasurementOp.dense_ensemble(flat.reshape(9, 3, 3))
    T = rng.standard_normal((3, 3))
    inst = ProblemInstance(op, apply_op(op, T), 3)
    res = svrg_arm(inst, SolverConfig(outer_iterations=300, tolerance=1e-24, seed=1))
    direct = np.linalg.solve(flat, inst.y).reshape(3, 3)
    assert objective(inst, res.estimate) < 1e-20
    np.testing.assert_allclose(res.estimate, direct, atol=1e-9)


def test_svrg_full_batch_is_svp_bit_for_bit():
    inst = completion(seed=3)
    cfg = SolverConfig(outer_iterations=25, tolerance=1e-300, step=FixedStep(0.3),
                       batch_size=inst.m)
    a, b = svrg_arm(inst, cfg), svp(inst, cfg)
    assert np.array_equal(a.estimate, b.estimate)
    assert np.array_equal(a.trace.column("residual"), b.trace.column("residual"))


def test_svrg_full_batch_with_inner_loop_is_svp_subsampled():
    inst = completion(seed=4)
    n = 3
    a = svrg_arm(inst, SolverConfig(outer_iterations=8, inner_iterations=n, tolerance=1e-300,
                                    step=FixedStep(0.3), batch_size=inst.m))
    b = svp(inst, SolverConfig(outer_iterations=8 * n, tolerance=1e-300, step=FixedStep(0.3)))
    assert np.array_equal(a.estimate, b.estimate)
    assert np.array_equal(a.trace.column("residual"), b.trace.column("residual")[::n])


def test_svrg_gradient_accounting():
    inst = completion(10, 1, 0.5, 0)
    m = inst.m
    res = svrg_arm(inst, SolverConfig(outer_iterations=2, tolerance=1e-300, batch_size=5))
    n = m // 5
    assert res.trace.column("grad_evals").tolist() == [0, m + 2 * 5 * n, 2 * (m + 2 * 5 * n)]


def test_svrg_divergence_names_iteration():
    inst = completion(seed=1)
    with pytest.raises(DivergenceError) as exc:
        svrg_arm(inst, SolverConfig(step=FixedStep(50.0), outer_iterations=50))
    assert exc.value.solver == "svrg" and exc.value.iteration >= 0


def test_spectral_init_is_one_projected_step():
    inst = completion(seed=5)
    res = svp(inst, SolverConfig(outer_iterations=1, init="spectral", step=FixedStep(0.25),
                                 tolerance=1e-300))
    X0 = hard_threshold_rank(-0.25 * full_gradient(inst, np.zeros(inst.shape)), 2)
    assert res.trace[0].residual == pytest.approx(np.sum((inst.y - apply_op(inst.op, X0)) ** 2),
                                                  rel=1e-10)


# --- svp -------------------------------------------------------------------

def test_svp_recovers_with_fixed_step():
    inst = completion(seed=7)
    res = svp(inst, SolverConfig(outer_iterations=500, step=FixedStep(0.3)))
    assert res.final.rel_error <= 1e-3


def test_svp_first_iterate_unrolled():
    inst = completion(seed=8)
    eta = 0.4
    res = svp(inst, SolverConfig(outer_iterations=1, step=FixedStep(eta), tolerance=1e-300))
    X1 = hard_threshold_rank(-eta * full_gradient(inst, np.zeros(inst.shape)), 2)
    np.testing.assert_allclose(res.estimate, X1, atol=1e-12)


@given(seeds)
@settings(max_examples=15)
def test_svp_monotone_below_inverse_lipschitz(seed):
    inst = make_instance(SyntheticSpec(12, 12, 2, 0.6, 0.0, seed))
    rng = np.random.default_rng(seed)
    n1, n2 = inst.shape
    # upper isometry estimate on the span of the full ambient space bounds the curvature
    basis = span_of([np.eye(1, n1 * n2, k).reshape(n1, n2) for k in range(n1 * n2)])
    _, hi = estimate_subspace_rip(inst.op, basis)
    eta = 0.99 / (2 * hi)
    res = svp(inst, SolverConfig(outer_iterations=30, tolerance=1e-300, step=FixedStep(eta),
                                 seed=int(rng.integers(100))))
    F = res.trace.column("objective")
    assert np.all(np.diff(F) <= 1e-10)


# --- niht ------------------------------------------------------------------

def test_niht_zero_gradient_takes_no_step():
    # sensing matrices whose adjoint annihilates y: A^*(y) = 0, y != 0
    rng = np.random.default_rng(0)
    B = rng.standard_normal((4, 2, 2))
    A = np.concatenate([B, B])
    y = np.concatenate([np.ones(4), -np.ones(4)])
    inst = ProblemInstance(MeasurementOp.dense_ensemble(A), y, 1)
    assert np.allclose(full_gradient(inst, np.zeros((2, 2))), 0)
    res = niht(inst, SolverConfig())
    assert res.terminated is Termination.ITERATE_TOL
    assert np.array_equal(res.estimate, np.zeros((2, 2)))


def test_niht_beats_fixed_step_svp():
    inst = completion(seed=7)
    a = niht(inst, SolverConfig(outer_iterations=500))
    b = svp(inst, SolverConfig(outer_iterations=500, step=FixedStep(0.3)))
    assert a.final.rel_error <= 1e-3 and b.final.rel_error <= 1e-3
    assert a.final.grad_evals < b.final.grad_evals


def test_niht_step_is_exact_line_search():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((7, 1, 5))
    inst = ProblemInstance(MeasurementOp.dense_ensemble(A), rng.standard_normal(7), 1)
    X = rng.standard_normal((1, 5))
    g = full_gradient(inst, X)
    eta = niht_step(inst, X, g, np.ones((1, 1)), 1.0)
    oracle = minimize_scalar(lambda t: objective(inst, X - t * g), bounds=(0, 10),
                             method="bounded", options={"xatol": 1e-12}).x
    assert eta == pytest.approx(oracle, rel=1e-6)


# --- stoiht ----------------------------------------------------------------

def test_stoiht_full_batch_is_svp():
    inst = completion(seed=2)
    cfg = SolverConfig(outer_iterations=20, tolerance=1e-300, step=FixedStep(0.3),
                       batch_size=inst.m, seed=11)
    a, b = stoiht(inst, cfg), svp(inst, cfg)
    assert np.array_equal(a.estimate, b.estimate)
    assert np.array_equal(a.trace.column("residual"), b.trace.column("residual"))


@pytest.mark.slow
def test_stoiht_terminal_residual_spread_exceeds_svrg():
    fin = {"svrg": [], "stoiht": []}
    for s in range(10):
        inst = completion(seed=s)
        cfg = SolverConfig(seed=s)
        fin["svrg"].append(svrg_arm(inst, cfg).final.residual)
        mc = matched_config("stoiht", cfg, "svrg", cfg, inst.m)
        res = stoiht(inst, mc)
        assert res.final.rel_error <= 1e-3
        fin["stoiht"].append(res.final.residual)
    assert np.var(fin["stoiht"]) > np.var(fin["svrg"])


# --- svt -------------------------------------------------------------------

def test_svt_full_observation_tau_zero():
    inst = completion(10, 2, 1.0, 1)
    res = svt(inst, SolverConfig(outer_iterations=200, tolerance=1e-20), tau=0.0)
    assert res.final.rel_error < 1e-10


def test_svt_huge_tau_gives_zero():
    inst = completion(seed=3)
    res = svt(inst, SolverConfig(outer_iterations=5), tau=1e12)
    assert res.terminated is Termination.BUDGET
    assert np.array_equal(res.estimate, np.zeros(inst.shape))
    assert set(res.trace.column("rank")) == {0}


def test_svt_defaults():
    inst = completion(20, 2, 0.5, 0)
    tau, delta = svt_defaults(inst)
    assert tau == pytest.approx(100.0) and delta == pytest.approx(2.4)


def test_svt_recovers_with_defaults():
    inst = completion(seed=7)
    res = svt(inst, SolverConfig(outer_iterations=600, tolerance=1e-6))
    assert res.final.rel_error < 1e-2


def test_svt_rejects_bad_parameters():
    with pytest.raises(ConfigurationError):
        svt(completion(), SolverConfig(), tau=-1.0)
    with pytest.raises(ConfigurationError):
        svt(completion(), SolverConfig(), step_delta=0.0)


# --- invariants over all solvers ---------------------------------------------

@pytest.mark.parametrize("name", ALL)
def test_determinism(name):
    inst = completion(12, 2, 0.6, 4)
    cfg = SolverConfig(outer_iterations=6, batch_size=8, seed=9)
    a, b = solve(name, inst, cfg), solve(name, inst, cfg)
    assert np.array_equal(a.estimate, b.estimate)
    assert a.trace.records() == b.trace.records()


@pytest.mark.parametrize("name", ["svrg", "svp", "niht", "stoiht"])
@given(seed=seeds, r=st.integers(1, 3), b=st.sampled_from([1, 4, 16]))
@settings(max_examples=8)
def test_rank_feasibility_and_trace_invariants(name, seed, r, b):
    inst = make_instance(SyntheticSpec(10, 9, r, 0.7, 0.05, seed))
    res = solve(name, inst, SolverConfig(outer_iterations=4, batch_size=b, seed=seed))
    assert numerical_rank(res.estimate) <= r
    assert all(row.rank <= r for row in res.trace.rows)
    assert np.all(res.trace.column("residual") >= 0)
    assert np.all(np.diff(res.trace.column("grad_evals")) >= 0)


@pytest.mark.parametrize("name", ALL)
@given(seed=seeds, tol=st.sampled_from([1e-2, 1e-6, 1e-10]))
@settings(max_examples=6)
def test_stopping_soundness(name, seed, tol):
    inst = make_instance(SyntheticSpec(10, 10, 1, 0.7, 0.0, seed))
    res = solve(name, inst, SolverConfig(outer_iterations=15, batch_size=7, tolerance=tol,
                                         seed=seed))
    if res.terminated is Termination.RESIDUAL_TOL:
        assert res.final.residual <= tol
    elif res.terminated is Termination.ITERATE_TOL:
        # rerun one outer iteration short to recover the previous snapshot
        prev = solve(name, inst, SolverConfig(outer_iterations=res.final.iteration - 1,
                                              batch_size=7, tolerance=tol, seed=seed)).estimate \
            if res.final.iteration > 1 else np.zeros(inst.shape)
        assert np.sum((res.estimate - prev) ** 2) <= tol
    else:
        assert res.final.iteration == 15


def test_trace_records_exclude_wall_clock_by_default():
    res = svp(completion(), SolverConfig(outer_iterations=2))
    assert "wall_clock" not in res.trace.records()[0]
    assert "wall_clock" in res.trace.records(wall_clock=True)[0]
    assert math.isnan(res.trace[0].step)
