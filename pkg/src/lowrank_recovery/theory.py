"""Convergence constants and admissible step intervals for SVRG with hard
thresholding, the outer-loop complexity estimate, and a numerical checker for
the supporting inequalities.

All constants are written in terms of an assumed restricted isometry constant
``delta`` (of order ``3r``), the step ``eta`` and the inner-loop length ``n``:

* per-inner-step distance contraction
  ``rho = 2 sqrt(1 - 2(1-delta)(2 eta - 2 eta^2 (1+delta)))``;
* per-outer-loop distance contraction
  ``kappa = (-3 rho^(n+1) + rho^n + 2 rho) / (1 - rho)``;
* objective-gap recursion ``mu = (1+delta)/(1-delta) - 2 eta (1+delta)(1 - 4 eta (1+delta))``,
  ``nu = 32 delta eta^2`` and ``beta = mu^n + nu (1 - mu^n) / (1 - mu)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InvalidInputError
from .linalg import project_span, span_of
from .operators import (ProblemInstance, apply_op, draw_batch, full_gradient,
                        objective, singleton_upper, stochastic_gradient,
                        subspace_gram)


@dataclass(frozen=True)
class StepInterval:
    lower: float
    upper: float
    nonempty: bool
    closed: bool

    def contains(self, eta: float) -> bool:
        if not self.nonempty:
            return False
        if self.closed:
            return self.lower <= eta <= self.upper
        return self.lower < eta < self.upper

    def interior(self, count: int) -> np.ndarray:
        """``count`` equally spaced points strictly inside the interval."""
        t = np.arange(1, count + 1) / (count + 1)
        return self.lower + t * (self.upper - self.lower)

    def midpoint(self) -> float:
        return 0.5 * (self.lower + self.upper)


def _check_delta(delta: float) -> float:
    if not 0.0 <= delta < 1.0:
        raise DomainError(f"delta must lie in [0, 1), got {delta}")
    return float(delta)


def theorem1_interval(delta: float) -> StepInterval:
    """Open step interval guaranteeing ``kappa < 1`` for every ``n``.

    Endpoints ``(6 - 6d -+ sqrt(71 d^2 - 72 d + 1)) / (12 - 12 d^2)``. The
    discriminant is evaluated as ``(71 d - 1)(d - 1)``; the interval is empty
    for ``d >= 1/71`` (at ``d = 1/71`` both endpoints equal ``71/144``).
    """
    d = _check_delta(delta)
    disc = (71.0 * d - 1.0) * (d - 1.0)
    denom = 12.0 - 12.0 * d * d
    centre = (6.0 - 6.0 * d) / denom
    if disc <= 0.0:
        return StepInterval(centre, centre, False, closed=False)
    half = math.sqrt(disc) / denom
    return StepInterval(centre - half, centre + half, True, closed=False)


def theorem2_interval(delta: float) -> StepInterval:
    """Closed step interval on which ``beta <= 1`` (strictly inside: ``beta < 1``).

    Endpoints ``(2(1+d) sqrt(1-d) -+ sqrt(-68 d^3 - 388 d^2 - 60 d + 4))
    / ((16 d^2 + 96 d + 16) sqrt(1-d))``.
    """
    d = _check_delta(delta)
    disc = ((-68.0 * d - 388.0) * d - 60.0) * d + 4.0
    sq = math.sqrt(1.0 - d)
    denom = (16.0 * d * d + 96.0 * d + 16.0) * sq
    centre = 2.0 * (1.0 + d) * sq / denom
    if disc < 0.0:
        return StepInterval(centre, centre, False, closed=True)
    half = math.sqrt(disc) / denom
    return StepInterval(centre - half, centre + half, True, closed=True)


@dataclass(frozen=True)
class TheoryConstants:
    delta: float
    eta: float
    inner_n: int
    rho: float
    kappa: float | None
    mu: float
    nu: float
    beta: float | None
    kappa_defined: bool
    kappa_below_one: bool
    beta_below_one: bool


def rho_radicand(delta: float, eta: float) -> float:
    return 1.0 - 2.0 * (1.0 - delta) * (2.0 * eta - 2.0 * eta * eta * (1.0 + delta))


def convergence_constants(delta: float, eta: float, inner_n: int) -> TheoryConstants:
    """Evaluate ``rho, kappa, mu, nu, beta``.

    Raises ``DomainError`` when the radicand of ``rho`` is negative. ``kappa``
    is reported as ``None`` (``kappa_defined=False``) when ``rho >= 1``; the
    geometric sum in ``beta`` takes its limit ``n`` when ``mu == 1``.
    """
    d = _check_delta(delta)
    eta = float(eta)  # python floats raise on overflow instead of yielding inf
    if not eta > 0:
        raise DomainError(f"step must be positive, got {eta}")
    n = int(inner_n)
    if n < 1:
        raise DomainError(f"inner loop length must be >= 1, got {inner_n}")
    rad = rho_radicand(d, eta)
    if rad < 0.0:
        raise DomainError(f"rho radicand {rad:.3e} < 0 at delta={d}, eta={eta}")
    rho = 2.0 * math.sqrt(rad)

    kappa = None
    if rho < 1.0:
        # rho^n underflows harmlessly to 0 for large n
        rn = rho ** n
        kappa = (rn * (1.0 - 3.0 * rho) + 2.0 * rho) / (1.0 - rho)

    a = 1.0 + d
    mu = a / (1.0 - d) - 2.0 * eta * a * (1.0 - 4.0 * eta * a)
    nu = 32.0 * d * eta * eta
    beta: float | None
    try:
        mun = mu ** n
        if mu == 1.0:
            geo = float(n)
        else:
            geo = (1.0 - mun) / (1.0 - mu)
        beta = mun + nu * geo
        if not math.isfinite(beta):
            beta = None
    except OverflowError:
        beta = None
    return TheoryConstants(
        delta=d, eta=float(eta), inner_n=n, rho=rho, kappa=kappa, mu=mu, nu=nu, beta=beta,
        kappa_defined=kappa is not None,
        kappa_below_one=kappa is not None and kappa < 1.0,
        beta_below_one=beta is not None and beta < 1.0,
    )


@dataclass(frozen=True)
class ComplexityEstimate:
    outer_loops: int | None
    gradient_cost: int
    svd_cost: int
    per_outer_cost: int
    total_cost: int | None
    guaranteed: bool


def complexity_estimate(m: int, inner_n: int, max_batch: int, r: int, epsilon: float,
                        beta: float, initial_gap: float = 1.0) -> ComplexityEstimate:
    """Outer-loop count ``ceil(log(gap/eps) / log(1/beta))`` and per-outer cost
    ``m + n*b`` (gradient units) ``+ r^3`` (SVD units)."""
    for name, v in (("m", m), ("inner_n", inner_n), ("max_batch", max_batch), ("r", r),
                    ("epsilon", epsilon), ("initial_gap", initial_gap)):
        if not v > 0:
            raise InvalidInputError(f"{name} must be positive, got {v}")
    grad = int(m) + int(inner_n) * int(max_batch)
    svd_units = int(r) ** 3
    per_outer = grad + svd_units
    if not 0.0 <= beta < 1.0:
        return ComplexityEstimate(None, grad, svd_units, per_outer, None, False)
    if initial_gap <= epsilon:
        k = 0
    elif beta == 0.0:
        k = 1
    else:
        x = math.log(initial_gap / epsilon) / math.log(1.0 / beta)
        # absorb rounding in the ratio of logs (e.g. log(2^10)/log(2))
        k = max(0, math.ceil(x - 1e-9))
    return ComplexityEstimate(k, grad, svd_units, per_outer, k * per_outer, True)


# ---------------------------------------------------------------------------
# inequality checker

LEMMAS = ("lemma1", "lemma1_descent", "lemma2", "lemma3", "lemma4", "lemma5",
          "lemma6_statement", "lemma6_proof", "lemma7")
REQUIRED = ("lemma1", "lemma1_descent", "lemma2", "lemma3", "lemma4", "lemma5", "lemma7")


@dataclass
class LemmaReport:
    trials: int
    passes: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)
    worst_margin: dict = field(default_factory=dict)
    identity_max_rel_err: float = 0.0

    def record(self, name: str, lhs: float, rhs: float, tol: float):
        """Record ``lhs <= rhs`` up to ``tol`` (absolute, already scaled)."""
        margin = rhs - lhs
        ok = margin >= -tol
        self.passes[name] = self.passes.get(name, 0) + int(ok)
        self.failures[name] = self.failures.get(name, 0) + int(not ok)
        self.worst_margin[name] = min(self.worst_margin.get(name, math.inf), margin)

    @property
    def violations(self) -> int:
        return sum(self.failures.get(k, 0) for k in REQUIRED)

    def lines(self) -> list[str]:
        out = []
        for k in LEMMAS:
            if k in self.passes:
                out.append(f"{k}: {self.passes[k]}/{self.passes[k] + self.failures[k]} pass, "
                           f"worst margin {self.worst_margin[k]:.3e}")
        out.append(f"lemma1 identity max relative error {self.identity_max_rel_err:.3e}")
        return out


def _rand_rank(rng, shape, r, scale=1.0):
    return scale * (rng.standard_normal((shape[0], r)) @ rng.standard_normal((r, shape[1])))


def _tol(*vals) -> float:
    return 1e-9 * max(1.0, *(abs(v) for v in vals))


def check_pair(inst: ProblemInstance, X, Y, Xs, rng, report: LemmaReport,
               eta_fraction: float | None = None) -> None:
    """Check every inequality once for the matrices ``X``, ``Y`` (playing the roles
    of two iterates), with ``Xs`` the true solution and ``Y`` doubling as the
    snapshot in the variance-reduction bound."""
    op = inst.op
    m = inst.m
    D = X - Y

    # lemma1: exact identity and strong-convexity lower bound on span{X, Y}
    gX, gY = full_gradient(inst, X), full_gradient(inst, Y)
    inner = float(np.vdot(D, gX - gY))
    AD = apply_op(op, D)
    ident = 2.0 / m * float(AD @ AD)
    rel = abs(inner - ident) / max(abs(ident), 1e-300) if ident != 0 else abs(inner)
    report.identity_max_rel_err = max(report.identity_max_rel_err, rel)
    nD2 = float(np.vdot(D, D))
    gam = span_of([X, Y])
    if gam.dim == 0:
        lo = up = 1.0
        gram = None
    else:
        gram = subspace_gram(op, gam)
        ev = np.linalg.eigvalsh(gram)
        lo, up = float(ev[0]), float(ev[-1])
    report.record("lemma1", 2.0 * lo * nD2, inner, _tol(inner, 2 * lo * nD2))
    lhs = objective(inst, X) + float(np.vdot(gX, Y - X)) + lo * nD2
    fy = objective(inst, Y)
    report.record("lemma1_descent", lhs, fy, _tol(lhs, fy))

    # lemma2: co-coercivity of a random batch gradient on span{X, Y}
    bsize = int(rng.integers(1, m + 1)) if rng.random() < 0.5 else 1
    batch = draw_batch(rng, m, bsize)
    dg = stochastic_gradient(inst, X, batch) - stochastic_gradient(inst, Y, batch)
    up_b = 1.0 if gam.dim == 0 else float(np.linalg.eigvalsh(subspace_gram(op, gam, batch))[-1])
    Pdg = project_span(dg, gam) if gam.dim else np.zeros_like(dg)
    lhs = float(np.vdot(Pdg, Pdg))
    rhs = 2.0 * up_b * float(np.vdot(D, dg))
    report.record("lemma2", lhs, rhs, _tol(lhs, rhs))

    # lemma3 (full gradient) and lemma4 (expectation over singletons)
    if gam.dim:
        frac = rng.uniform(0.05, 1.0) if eta_fraction is None else eta_fraction
        eta = frac / up
        rad = 1.0 - 2.0 * lo * (2.0 * eta - 2.0 * eta * eta * up)
        if rad >= 0:
            lhs = float(np.linalg.norm(D - eta * project_span(gX - gY, gam)))
            rhs = math.sqrt(rad) * math.sqrt(nD2)
            report.record("lemma3", lhs, rhs, _tol(lhs, rhs))
        up_s = singleton_upper(op, gam)
        eta = frac / up_s
        rad = 1.0 - 2.0 * lo * (2.0 * eta - 2.0 * eta * eta * up_s)
        if rad >= 0:
            # singleton l: P(grad f_l(X) - grad f_l(Y)) = 2 <A_l, D> P(A_l)
            AB = op.apply_flat(gam.flat_basis())
            dl = apply_op(op, D)
            c = gam.coordinates(D)
            lhs = float(np.mean(np.linalg.norm(c - 2.0 * eta * dl[:, None] * AB, axis=1)))
            rhs = math.sqrt(rad) * math.sqrt(nD2)
            report.record("lemma4", lhs, rhs, _tol(lhs, rhs))
    else:
        report.record("lemma3", 0.0, 0.0, 0.0)
        report.record("lemma4", 0.0, 0.0, 0.0)

    # lemma5 on span{X, X*}
    Fs = objective(inst, Xs)
    lam = span_of([X, Xs])
    gap_x = objective(inst, X) - Fs
    if lam.dim:
        up_s = singleton_upper(op, lam)
        AB = op.apply_flat(lam.flat_basis())
        dl = apply_op(op, X - Xs)
        lhs = float(np.mean(4.0 * dl ** 2 * np.sum(AB * AB, axis=1)))
        rhs = 4.0 * up_s * gap_x
        report.record("lemma5", lhs, rhs, _tol(lhs, rhs))

        # lemma6: gradient domination, statement and proof constants
        ev = np.linalg.eigvalsh(subspace_gram(op, lam))
        lo6, up6 = float(ev[0]), float(ev[-1])
        pg = _sq(project_span(gX, lam))
        rhs = 2.0 * lo6 / up6 * gap_x
        report.record("lemma6_statement", rhs, pg, _tol(pg, rhs))
        rhs = 4.0 * lo6 ** 2 / up6 * gap_x
        report.record("lemma6_proof", rhs, pg, _tol(pg, rhs))
    else:
        report.record("lemma5", 0.0, 0.0, 0.0)

    # lemma7: second moment of the variance-reduced direction on span{Y, X, X*}
    omega = span_of([Y, X, Xs])
    if omega.dim:
        AB = op.apply_flat(omega.flat_basis())
        dl = apply_op(op, D)
        pv = 2.0 * dl[:, None] * AB + omega.coordinates(gY)
        lhs = float(np.mean(np.sum(pv * pv, axis=1)))
        up_s = singleton_upper(op, omega)
        ev = np.linalg.eigvalsh(subspace_gram(op, omega))
        lo7, up7 = float(ev[0]), float(ev[-1])
        gap_y = objective(inst, Y) - Fs
        coef_snap = 8.0 * up_s - 8.0 * lo7 ** 2 / up7
        rhs = 8.0 * up_s * gap_x + coef_snap * gap_y
        report.record("lemma7", lhs, rhs, _tol(lhs, rhs))
    else:
        report.record("lemma7", 0.0, 0.0, 0.0)


def _sq(M) -> float:
    return float(np.vdot(M, M))


def singleton_mean(inst: ProblemInstance, fn) -> float:
    """Mean of ``fn(batch)`` over all singleton batches (reference loop)."""
    return float(np.mean([fn(np.array([l])) for l in range(inst.m)]))


def lemma_checker(inst: ProblemInstance, trials: int, seed: int) -> LemmaReport:
    """Draw random rank-``r`` pairs and check every inequality with exact
    per-subspace isometry constants.

    Each trial draws ``X`` and ``Y`` either independently or as perturbations
    of the truth (so that the near-solution regime is exercised as well).
    """
    if inst.truth is None:
        raise InvalidInputError("lemma checker needs an instance with a known truth")
    if not inst.noiseless:
        raise InvalidInputError("lemma checker needs a noiseless instance")
    rng = np.random.default_rng(seed)
    report = LemmaReport(trials=trials)
    Xs = inst.truth
    shape, r = inst.shape, inst.rank
    for t in range(trials):
        kind = t % 3
        if kind == 0:
            X, Y = _rand_rank(rng, shape, r), _rand_rank(rng, shape, r)
        elif kind == 1:
            X = Xs + _rand_rank(rng, shape, r, 0.1)
            Y = Xs + _rand_rank(rng, shape, r, 0.1)
        else:
            X = _rand_rank(rng, shape, r)
            Y = X + _rand_rank(rng, shape, r, 1e-3)
        check_pair(inst, X, Y, Xs, rng, report)
    return report
