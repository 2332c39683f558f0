"""Iterative low-rank recovery solvers.

* ``svrg_arm``: stochastic variance-reduced gradient steps followed by rank-r
  hard thresholding after every inner step;
* ``svp``: projected full-gradient descent (iterative hard thresholding);
* ``niht``: hard thresholding with the exact line-search step restricted to the
  column space of the current iterate;
* ``stoiht``: projected stochastic gradient descent;
* ``svt``: singular value thresholding (soft shrinkage of a dual sequence).

Every solver is deterministic given ``(instance, config)``: all randomness is
drawn from ``numpy.random.default_rng(config.seed)``.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Callable, Union

import numpy as np

from .errors import ConfigurationError, DegenerateStepError, DivergenceError, InvalidInputError
from .linalg import SvdFactors, numerical_rank, soft_threshold_singular, span_of, truncated_svd
from .operators import (ProblemInstance, batch_lipschitz, draw_batches, estimate_subspace_rip, full_gradient,
                        gradient_difference, residual_sq, stochastic_gradient, variance_reduced_direction)
from .theory import theorem1_interval


@dataclass(frozen=True)
class FixedStep:
    eta: float

    def __post_init__(self):
        if not self.eta > 0:
            raise ConfigurationError(f"fixed step must be positive, got {self.eta}")


@dataclass(frozen=True)
class BarzilaiBorwein:
    """Barzilai-Borwein steps between successive snapshots.

    ``eta0`` is the full-gradient-scale step used before two snapshots exist;
    ``None`` means ``1 / (2 L)`` with ``L`` the upper isometry estimate on a
    random rank-r probe subspace. Solvers with ``n`` inner steps per snapshot
    divide it by ``n``, matching the ``1/n`` normalisation of the BB quotient.
    """

    eta0: float | None = None
    clamp_min: float = 1e-6
    clamp_max: float = 1e2

    def __post_init__(self):
        if self.eta0 is not None and not self.eta0 > 0:
            raise ConfigurationError(f"BB fallback step must be positive, got {self.eta0}")
        if not 0 < self.clamp_min <= self.clamp_max:
            raise ConfigurationError("BB clamp bounds must satisfy 0 < min <= max")


@dataclass(frozen=True)
class TheoryGuided:
    """Step placed inside the admissible interval for an assumed ``delta``."""

    delta: float
    placement: float = 0.5

    def __post_init__(self):
        if not 0 <= self.placement <= 1:
            raise ConfigurationError("placement must lie in [0, 1]")
        if not 0 <= self.delta < 1 or not theorem1_interval(self.delta).nonempty:
            raise ConfigurationError(f"no admissible step interval for delta={self.delta}")

    @property
    def eta(self) -> float:
        iv = theorem1_interval(self.delta)
        return iv.lower + self.placement * (iv.upper - iv.lower)


StepRule = Union[FixedStep, BarzilaiBorwein, TheoryGuided]


class Termination(str, Enum):
    RESIDUAL_TOL = "ResidualTol"
    ITERATE_TOL = "IterateTol"
    BUDGET = "Budget"


INITS = ("zero", "spectral")


@dataclass(frozen=True)
class SolverConfig:
    outer_iterations: int = 100
    inner_iterations: int | None = None  # None: one pass, n = m // batch_size
    tolerance: float = 1e-8
    step: StepRule = field(default_factory=BarzilaiBorwein)
    batch_size: int = 1
    seed: int = 0
    init: str = "zero"

    def __post_init__(self):
        if self.outer_iterations < 1:
            raise ConfigurationError("outer_iterations must be >= 1")
        if self.inner_iterations is not None and self.inner_iterations < 1:
            raise ConfigurationError("inner_iterations must be >= 1")
        if not self.tolerance > 0:
            raise ConfigurationError("tolerance must be positive")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.init not in INITS:
            raise ConfigurationError(f"init must be one of {INITS}")
        if not isinstance(self.step, (FixedStep, BarzilaiBorwein, TheoryGuided)):
            raise ConfigurationError(f"unknown step rule {self.step!r}")

    def inner_count(self, m: int) -> int:
        if self.inner_iterations is not None:
            return self.inner_iterations
        return max(1, m // self.batch_size)

    def validate_for(self, inst: ProblemInstance) -> None:
        if self.batch_size > inst.m:
            raise ConfigurationError(f"batch_size {self.batch_size} exceeds m={inst.m}")


@dataclass
class TraceRow:
    iteration: int
    residual: float
    objective: float
    rel_error: float
    step: float
    grad_evals: int
    rank: int
    wall_clock: float


@dataclass
class SolveTrace:
    rows: list[TraceRow] = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def __getitem__(self, i):
        return self.rows[i]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def records(self, wall_clock: bool = False) -> list[dict]:
        out = []
        for r in self.rows:
            d = asdict(r)
            if not wall_clock:
                d.pop("wall_clock")
            out.append(d)
        return out


@dataclass
class RecoveryResult:
    solver: str
    estimate: np.ndarray
    trace: SolveTrace
    terminated: Termination

    @property
    def final(self) -> TraceRow:
        return self.trace.rows[-1]


# ---------------------------------------------------------------------------
# step sizes


def bb_step(prev_snapshot, snapshot, prev_grad, grad, n: int, fallback: float,
            clamp_min: float = 1e-6, clamp_max: float = 1e2) -> float:
    """``||s||^2 / (n <s, g - g_prev>)`` with ``s = snapshot - prev_snapshot``.

    Returns ``fallback`` clipped to ``[clamp_min, clamp_max]`` when the
    curvature ``<s, g - g_prev>`` is not positive or the quotient falls outside
    the clamp range. Raises ``DegenerateStepError`` for identical snapshots.
    """
    s = np.asarray(snapshot) - np.asarray(prev_snapshot)
    ss = float(np.vdot(s, s))
    if ss == 0.0:
        raise DegenerateStepError("identical snapshots")
    curv = float(np.vdot(s, np.asarray(grad) - np.asarray(prev_grad)))
    safe = min(max(fallback, clamp_min), clamp_max)
    if not curv > 0.0:
        return safe
    eta = ss / (n * curv)
    if not clamp_min <= eta <= clamp_max:
        return safe
    return eta


def default_eta0(inst: ProblemInstance, seed: int, probes: int = 3) -> float:
    """``1 / (2 L)`` with ``L`` the upper isometry estimate on the span of
    ``probes`` random rank-r matrices (a stand-in for the curvature of ``F``)."""
    rng = np.random.default_rng([seed, 0x5EED])
    n1, n2 = inst.shape
    r = inst.rank
    mats = [rng.standard_normal((n1, r)) @ rng.standard_normal((r, n2)) for _ in range(probes)]
    _, upper = estimate_subspace_rip(inst.op, span_of(mats))
    return 1.0 / (2.0 * upper)


class _Stepper:
    """Per-run step-size state for a given rule and inner-loop length."""

    def __init__(self, rule: StepRule, inst: ProblemInstance, seed: int, inner: int):
        self.rule = rule
        self.inner = inner
        if isinstance(rule, FixedStep):
            self.eta = rule.eta
        elif isinstance(rule, TheoryGuided):
            self.eta = rule.eta
        else:
            eta0 = rule.eta0 if rule.eta0 is not None else default_eta0(inst, seed)
            self.eta0 = eta0
            self.eta = min(max(eta0 / inner, rule.clamp_min), rule.clamp_max)
        self.prev: tuple[np.ndarray, np.ndarray] | None = None

    def full_scale(self) -> float:
        """Full-gradient-scale step (used by the spectral initialisation)."""
        if isinstance(self.rule, BarzilaiBorwein):
            return self.eta0
        return self.eta

    def update(self, snapshot: np.ndarray, grad: np.ndarray) -> float:
        if isinstance(self.rule, BarzilaiBorwein):
            if self.prev is not None:
                try:
                    self.eta = bb_step(self.prev[0], snapshot, self.prev[1], grad, self.inner,
                                       self.eta, self.rule.clamp_min, self.rule.clamp_max)
                except DegenerateStepError:
                    pass
            self.prev = (snapshot, grad)
        return self.eta


# ---------------------------------------------------------------------------
# shared machinery


class _Run:
    def __init__(self, name: str, inst: ProblemInstance, cfg: SolverConfig):
        cfg.validate_for(inst)
        self.name = name
        self.inst = inst
        self.cfg = cfg
        self.trace = SolveTrace()
        self.evals = 0
        self.t0 = time.perf_counter()
        T = inst.truth
        self.tnorm = None if T is None else float(np.linalg.norm(T))

    def rel_error(self, X: np.ndarray) -> float:
        if self.inst.truth is None:
            return math.nan
        err = float(np.linalg.norm(X - self.inst.truth))
        return err / self.tnorm if self.tnorm > 0 else err

    def record(self, k: int, X: np.ndarray, step: float, rank: int | None = None) -> float:
        res = residual_sq(self.inst, X)
        self.trace.rows.append(TraceRow(
            iteration=k, residual=res, objective=res / self.inst.m,
            rel_error=self.rel_error(X), step=step, grad_evals=self.evals,
            rank=numerical_rank(X) if rank is None else rank,
            wall_clock=time.perf_counter() - self.t0))
        return res

    def check(self, X: np.ndarray, k: int) -> None:
        if not np.all(np.isfinite(X)):
            raise DivergenceError(self.name, k)

    def stop(self, res: float, X_new: np.ndarray, X_old: np.ndarray | None) -> Termination | None:
        eps = self.cfg.tolerance
        if res <= eps:
            return Termination.RESIDUAL_TOL
        if X_old is not None:
            d = X_new - X_old
            if float(np.vdot(d, d)) <= eps:
                return Termination.ITERATE_TOL
        return None

    def result(self, X: np.ndarray, why: Termination) -> RecoveryResult:
        return RecoveryResult(self.name, X, self.trace, why)


def _project(W: np.ndarray, r: int, fac: SvdFactors | None, name: str, k: int):
    """Rank-r hard threshold of ``W`` warm-started from ``fac``; returns ``(X, factors)``."""
    if not np.all(np.isfinite(W)):
        raise DivergenceError(name, k)
    if r == min(W.shape):
        return W, None
    f = truncated_svd(W, r, None if fac is None else fac.right)
    return (f.left * f.singular) @ f.right.T, f


def _initial(run: _Run, stepper: _Stepper):
    inst = run.inst
    X = np.zeros(inst.shape)
    if run.cfg.init == "spectral":
        g = full_gradient(inst, X)
        run.evals += inst.m
        X, fac = _project(-stepper.full_scale() * g, inst.rank, None, run.name, 0)
        return X, fac
    return X, None


# ---------------------------------------------------------------------------
# solvers


def svrg_arm(inst: ProblemInstance, cfg: SolverConfig) -> RecoveryResult:
    """Stochastic variance-reduced gradient with rank-r hard thresholding.

    Outer loop ``k``: full gradient ``g_k`` at the snapshot; inner loop of
    ``n`` steps ``W_t = X_t - eta (grad f_b(X_t) - grad f_b(snapshot) + g_k)``,
    ``X_{t+1} = H_r(W_t)``; the last inner iterate becomes the next snapshot.
    Stops when ``||y - A(snapshot)||^2 <= eps``, when two snapshots are within
    ``eps`` in squared Frobenius norm, or after ``K`` outer iterations.
    """
    run = _Run("svrg", inst, cfg)
    m, r = inst.m, inst.rank
    n = cfg.inner_count(m)
    b = cfg.batch_size
    rng = np.random.default_rng(cfg.seed)
    stepper = _Stepper(cfg.step, inst, cfg.seed, n)
    Xs, fac_s = _initial(run, stepper)
    res = run.record(0, Xs, math.nan)
    if res <= cfg.tolerance:
        return run.result(Xs, Termination.RESIDUAL_TOL)

    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(cfg.outer_iterations):
            g = full_gradient(inst, Xs)
            run.evals += m
            run.check(g, k)
            eta = stepper.update(Xs, g)
            X, fac = Xs, fac_s
            for batch in draw_batches(rng, m, b, n):
                if batch.size >= m:
                    V = variance_reduced_direction(inst, X, Xs, g, batch)
                    run.evals += m
                else:
                    V = g + gradient_difference(inst, X, Xs, batch)
                    run.evals += 2 * batch.size
                X, fac = _project(X - eta * V, r, fac, run.name, k)
            run.check(X, k)
            res = run.record(k + 1, X, eta)
            why = run.stop(res, X, Xs)
            Xs, fac_s = X, fac
            if why is not None:
                return run.result(Xs, why)
    return run.result(Xs, Termination.BUDGET)


def svp(inst: ProblemInstance, cfg: SolverConfig) -> RecoveryResult:
    """Projected gradient descent ``X <- H_r(X - eta grad F(X))``."""
    run = _Run("svp", inst, cfg)
    m, r = inst.m, inst.rank
    stepper = _Stepper(cfg.step, inst, cfg.seed, 1)
    X, fac = _initial(run, stepper)
    res = run.record(0, X, math.nan)
    if res <= cfg.tolerance:
        return run.result(X, Termination.RESIDUAL_TOL)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(cfg.outer_iterations):
            g = full_gradient(inst, X)
            run.evals += m
            run.check(g, k)
            eta = stepper.update(X, g)
            X_new, fac = _project(X - eta * g, r, fac, run.name, k)
            res = run.record(k + 1, X_new, eta)
            why = run.stop(res, X_new, X)
            X = X_new
            if why is not None:
                return run.result(X, why)
    return run.result(X, Termination.BUDGET)


def niht_step(inst: ProblemInstance, X, grad, U: np.ndarray, fallback: float) -> float:
    """Exact line-search step along the gradient projected on ``span(U)``:
    ``||P_U g||^2 / ((2/m) ||A(P_U g)||^2)``; ``fallback`` when the
    denominator underflows."""
    Pg = U @ (U.T @ grad)
    num = float(np.vdot(Pg, Pg))
    APg = inst.op.apply_flat(Pg.ravel())
    den = 2.0 / inst.m * float(APg @ APg)
    if not den > 1e-300 or num == 0.0:
        return fallback
    return num / den


def niht(inst: ProblemInstance, cfg: SolverConfig) -> RecoveryResult:
    """Normalised iterative hard thresholding.

    The step is recomputed every iteration from the column space ``U`` of the
    current iterate (for the zero matrix: the leading ``r`` left singular
    vectors of the gradient). A fixed step in ``cfg`` serves as the fallback.
    """
    run = _Run("niht", inst, cfg)
    m, r = inst.m, inst.rank
    stepper = _Stepper(cfg.step, inst, cfg.seed, 1)
    fallback = stepper.full_scale()
    X, fac = _initial(run, stepper)
    res = run.record(0, X, math.nan)
    if res <= cfg.tolerance:
        return run.result(X, Termination.RESIDUAL_TOL)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(cfg.outer_iterations):
            g = full_gradient(inst, X)
            run.evals += m
            run.check(g, k)
            if fac is not None and np.any(fac.singular > 0):
                U = fac.left[:, fac.singular > 0]
            elif r == min(inst.shape) and np.any(X):
                U = np.linalg.svd(X, full_matrices=False)[0]
            else:
                U = truncated_svd(g, r).left
            eta = niht_step(inst, X, g, U, fallback)
            X_new, fac = _project(X - eta * g, r, fac, run.name, k)
            res = run.record(k + 1, X_new, eta)
            why = run.stop(res, X_new, X)
            X = X_new
            if why is not None:
                return run.result(X, why)
    return run.result(X, Termination.BUDGET)


def stoiht(inst: ProblemInstance, cfg: SolverConfig) -> RecoveryResult:
    """Projected stochastic gradient ``X <- H_r(X - eta grad f_b(X))``.

    Stopping rules are checked every ``n`` inner steps (one epoch). The step
    is constant. The BB quotient needs full gradients, which this method never
    evaluates, so a BB rule selects the method's standard step ``1 / L_b``
    with ``L_b`` from ``batch_lipschitz``.
    """
    run = _Run("stoiht", inst, cfg)
    m, r = inst.m, inst.rank
    n = cfg.inner_count(m)
    b = cfg.batch_size
    rng = np.random.default_rng(cfg.seed)
    if isinstance(cfg.step, BarzilaiBorwein):
        lb = batch_lipschitz(inst.op, b)
        stepper = _Stepper(FixedStep(min(max(1.0 / lb, cfg.step.clamp_min), cfg.step.clamp_max)),
                           inst, cfg.seed, n)
    else:
        stepper = _Stepper(cfg.step, inst, cfg.seed, n)
    X, fac = _initial(run, stepper)
    res = run.record(0, X, math.nan)
    if res <= cfg.tolerance:
        return run.result(X, Termination.RESIDUAL_TOL)
    eta = stepper.eta
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(cfg.outer_iterations):
            X_old = X
            for batch in draw_batches(rng, m, b, n):
                G = stochastic_gradient(inst, X, batch)
                X, fac = _project(X - eta * G, r, fac, run.name, k)
                run.evals += batch.size
            run.check(X, k)
            res = run.record(k + 1, X, eta)
            why = run.stop(res, X, X_old)
            if why is not None:
                return run.result(X, why)
    return run.result(X, Termination.BUDGET)


def svt_defaults(inst: ProblemInstance) -> tuple[float, float]:
    """``tau = 5 sqrt(n1 n2)`` and ``delta = 1.2 / rho`` with ``rho = m / (n1 n2)``."""
    n1, n2 = inst.shape
    return 5.0 * math.sqrt(n1 * n2), 1.2 * n1 * n2 / inst.m


def svt(inst: ProblemInstance, cfg: SolverConfig, tau: float | None = None,
        step_delta: float | None = None) -> RecoveryResult:
    """Singular value thresholding.

    ``X_k = S_tau(Y_{k-1})`` and ``Y_k = Y_{k-1} + delta (1/(n1 n2)) A^*(y - A(X_k))``.
    For entry sampling with the default scale the dual update is exactly
    ``delta P_Omega(M - X_k)``. Stops on the residual tolerance or the
    iteration budget ``cfg.outer_iterations``; the estimate may exceed rank r.
    """
    run = _Run("svt", inst, cfg)
    d_tau, d_delta = svt_defaults(inst)
    tau = d_tau if tau is None else tau
    step_delta = d_delta if step_delta is None else step_delta
    if not tau >= 0 or not step_delta > 0:
        raise ConfigurationError("svt needs tau >= 0 and step_delta > 0")
    n1, n2 = inst.shape
    scale = step_delta * inst.m / (2.0 * n1 * n2)
    Y = np.zeros(inst.shape)
    X = np.zeros(inst.shape)
    res = run.record(0, X, math.nan, rank=0)
    if res <= cfg.tolerance:
        return run.result(X, Termination.RESIDUAL_TOL)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(cfg.outer_iterations):
            g = full_gradient(inst, X)
            run.evals += inst.m
            Y = Y - scale * g
            run.check(Y, k)
            X = soft_threshold_singular(Y, tau)
            res = run.record(k + 1, X, step_delta)
            if res <= cfg.tolerance:
                return run.result(X, Termination.RESIDUAL_TOL)
    return run.result(X, Termination.BUDGET)


SOLVERS: dict[str, Callable[..., RecoveryResult]] = {
    "svrg": svrg_arm,
    "svp": svp,
    "niht": niht,
    "stoiht": stoiht,
    "svt": svt,
}
ALIASES = {"svrg-arm": "svrg", "svrg_arm": "svrg", "iht": "svp"}


def solver_by_name(name: str) -> Callable[..., RecoveryResult]:
    key = ALIASES.get(name.lower(), name.lower())
    if key not in SOLVERS:
        raise ConfigurationError(f"unknown solver '{name}', expected one of {sorted(SOLVERS)}")
    return SOLVERS[key]


def canonical_name(name: str) -> str:
    key = ALIASES.get(name.lower(), name.lower())
    if key not in SOLVERS:
        raise ConfigurationError(f"unknown solver '{name}', expected one of {sorted(SOLVERS)}")
    return key


def solve(name: str, inst: ProblemInstance, cfg: SolverConfig, **kwargs) -> RecoveryResult:
    return solver_by_name(name)(inst, cfg, **kwargs)
