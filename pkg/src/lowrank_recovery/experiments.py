"""Synthetic recovery experiments: data generation and seeded trial runners.

Seeds are derived with ``numpy.random.SeedSequence`` from a master seed and
integer coordinates ``(cell, trial[, solver])``, so every trial can run in any
process and in any order. Records are sorted on ``(cell, trial, solver)``
before they are returned, which makes reports independent of ``jobs``.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DivergenceError, InvalidInputError
from .operators import MeasurementOp, ProblemInstance, apply_op
from .solvers import SolverConfig, canonical_name, solve

SUCCESS_THRESHOLD = 1e-3

# stream tags for the three independent draws of one synthetic instance
_MATRIX, _MASK, _NOISE = 0, 1, 2


def derive_seed(*coords: int) -> int:
    """64-bit seed mixed from integer coordinates (master seed first)."""
    return int(np.random.SeedSequence([int(c) for c in coords]).generate_state(1, np.uint64)[0])


def _stream(seed: int, tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), tag]))


@dataclass(frozen=True)
class SyntheticSpec:
    n1: int = 50
    n2: int = 50
    rank: int = 4
    sample_ratio: float = 0.5
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 1:
            raise InvalidInputError("dimensions must be positive")
        if not 1 <= self.rank <= min(self.n1, self.n2):
            raise InvalidInputError(f"rank {self.rank} out of range for {self.n1}x{self.n2}")
        if not 0 < self.sample_ratio <= 1:
            raise InvalidInputError("sample ratio must lie in (0, 1]")
        if self.sample_count < 1:
            raise InvalidInputError("sample ratio leaves no observed entry")
        if not self.noise_sigma >= 0:
            raise InvalidInputError("noise sigma must be nonnegative")

    @property
    def sample_count(self) -> int:
        # the epsilon guards products such as 0.29 * 100 = 28.999999999999996
        return int(math.floor(self.sample_ratio * self.n1 * self.n2 + 1e-9))

    @property
    def degrees_of_freedom(self) -> int:
        return self.rank * (self.n1 + self.n2 - self.rank)


def gen_low_rank(spec: SyntheticSpec) -> np.ndarray:
    """``L @ R`` with standard normal ``L`` (n1 x r) and ``R`` (r x n2)."""
    rng = _stream(spec.seed, _MATRIX)
    left = rng.standard_normal((spec.n1, spec.rank))
    right = rng.standard_normal((spec.rank, spec.n2))
    return left @ right


def gen_mask(spec: SyntheticSpec) -> np.ndarray:
    """``floor(rho n1 n2)`` distinct ``(row, col)`` pairs, uniform without replacement."""
    rng = _stream(spec.seed, _MASK)
    total = spec.n1 * spec.n2
    lin = np.sort(rng.choice(total, size=spec.sample_count, replace=False))
    return np.column_stack([lin // spec.n2, lin % spec.n2])


def add_noise(y, sigma: float, seed: int) -> np.ndarray:
    """``y + sigma * z`` with ``z`` standard normal from the seeded stream."""
    if not sigma >= 0:
        raise InvalidInputError("noise sigma must be nonnegative")
    y = np.asarray(y, dtype=np.float64)
    if sigma == 0:
        return y.copy()
    return y + sigma * np.random.default_rng(seed).standard_normal(y.shape)


def make_instance(spec: SyntheticSpec) -> ProblemInstance:
    """Entry-sampling instance; noise of standard deviation ``sigma`` is added
    to the observed matrix entries (so ``sigma * scale`` on the measurements)."""
    truth = gen_low_rank(spec)
    op = MeasurementOp.entry_sampling(gen_mask(spec), (spec.n1, spec.n2))
    y = apply_op(op, truth)
    if spec.noise_sigma > 0:
        y = add_noise(y, spec.noise_sigma * op.scale, derive_seed(spec.seed, _NOISE))
    return ProblemInstance(op, y, spec.rank, truth, noiseless=spec.noise_sigma == 0)


@dataclass
class TrialRecord:
    cell: int
    trial: int
    solver: str
    n1: int
    n2: int
    rank: int
    sample_ratio: float
    noise_sigma: float
    seed: int
    success: bool
    relative_error: float
    gradient_evaluations: int
    iterations: int
    terminated: str
    wall_clock: float = 0.0
    psnr: float | None = None
    ssim: float | None = None

    def __post_init__(self):
        self.success = bool(self.relative_error <= SUCCESS_THRESHOLD)

    def row(self, wall_clock: bool = False) -> dict:
        d = dict(self.__dict__)
        if not wall_clock:
            d.pop("wall_clock")
        return d


# ---------------------------------------------------------------------------
# budget matching


def outer_cost(solver: str, cfg: SolverConfig, m: int) -> int:
    """Gradient evaluations (single-measurement units) per outer iteration."""
    name = canonical_name(solver)
    b = min(cfg.batch_size, m)
    n = cfg.inner_count(m)
    if name == "svrg":
        return m + (m if b >= m else 2 * b) * n
    if name == "stoiht":
        return b * n
    return m


def matched_config(solver: str, cfg: SolverConfig, reference: str, ref_cfg: SolverConfig,
                   m: int) -> SolverConfig:
    """``cfg`` with its outer budget set to spend the gradient evaluations of
    ``ref_cfg.outer_iterations`` outer iterations of ``reference``."""
    budget = outer_cost(reference, ref_cfg, m) * ref_cfg.outer_iterations
    return replace(cfg, outer_iterations=max(1, budget // outer_cost(solver, cfg, m)))


# ---------------------------------------------------------------------------
# trial execution


@dataclass(frozen=True)
class _Task:
    cell: int
    trial: int
    solver_index: int
    solver: str
    spec: SyntheticSpec
    cfg: SolverConfig
    solver_kwargs: tuple = ()


def _run_task(task: _Task) -> TrialRecord:
    inst = make_instance(task.spec)
    t0 = time.perf_counter()
    try:
        res = solve(task.solver, inst, task.cfg, **dict(task.solver_kwargs))
        err = res.final.rel_error
        evals, iters, why = res.final.grad_evals, res.final.iteration, res.terminated.value
    except DivergenceError as exc:
        err, evals, iters, why = math.inf, -1, exc.iteration, "Diverged"
    s = task.spec
    return TrialRecord(
        cell=task.cell, trial=task.trial, solver=task.solver, n1=s.n1, n2=s.n2, rank=s.rank,
        sample_ratio=s.sample_ratio, noise_sigma=s.noise_sigma, seed=s.seed, success=False,
        relative_error=err, gradient_evaluations=evals, iterations=iters, terminated=why,
        wall_clock=time.perf_counter() - t0)


def run_tasks(tasks: Sequence[_Task], jobs: int = 1) -> list[TrialRecord]:
    if jobs < 1:
        raise ConfigurationError("jobs must be >= 1")
    if jobs == 1 or len(tasks) <= 1:
        out = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            out = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    order = {id(r): (t.cell, t.trial, t.solver_index) for t, r in zip(tasks, out)}
    return sorted(out, key=lambda r: order[id(r)])


def _solver_list(solvers) -> list[str]:
    names = [canonical_name(s) for s in solvers]
    if not names:
        raise ConfigurationError("at least one solver is required")
    return names


def _configs_for(solvers: list[str], configs) -> list[SolverConfig]:
    if isinstance(configs, SolverConfig):
        return [configs] * len(solvers)
    configs = configs or {}
    return [configs.get(s, SolverConfig()) for s in solvers]


def _cell_tasks(cell: int, spec: SyntheticSpec, solvers: list[str], cfgs: list[SolverConfig],
                trials: int, master_seed: int, solver_kwargs=None) -> list[_Task]:
    solver_kwargs = solver_kwargs or {}
    tasks = []
    for t in range(trials):
        s = replace(spec, seed=derive_seed(master_seed, cell, t))
        for j, (name, cfg) in enumerate(zip(solvers, cfgs)):
            tasks.append(_Task(cell, t, j, name, s,
                               replace(cfg, seed=derive_seed(master_seed, cell, t, j + 1)),
                               tuple(sorted(solver_kwargs.get(name, {}).items()))))
    return tasks


def _check_trials(trials: int):
    if trials < 1:
        raise ConfigurationError("trials must be >= 1")


def run_recovery_frequency(ranks: Sequence[int], base: SyntheticSpec, solvers: Sequence[str],
                           trials: int, configs=None, master_seed: int = 0, jobs: int = 1,
                           solver_kwargs=None) -> list[TrialRecord]:
    """Independent trials for every ``(rank, solver)``; cell index = rank position."""
    _check_trials(trials)
    names = _solver_list(solvers)
    cfgs = _configs_for(names, configs)
    tasks = []
    for c, r in enumerate(ranks):
        tasks += _cell_tasks(c, replace(base, rank=int(r)), names, cfgs, trials, master_seed,
                             solver_kwargs)
    return run_tasks(tasks, jobs)


def success_fractions(records: Sequence[TrialRecord], key: str = "rank") -> dict:
    """``{(key value, solver): fraction}`` over the records."""
    tally: dict = {}
    for r in records:
        k = (getattr(r, key), r.solver)
        hit, tot = tally.get(k, (0, 0))
        tally[k] = (hit + r.success, tot + 1)
    return {k: h / t for k, (h, t) in tally.items()}


@dataclass
class GridReport:
    solver: str
    ranks: list[int]
    ratios: list[float]
    fractions: np.ndarray  # (len(ranks), len(ratios))
    trials: int
    master_seed: int
    records: list[TrialRecord] = field(default_factory=list)

    def rows(self) -> list[dict]:
        return [{"rank": r, "sample_ratio": q, "solver": self.solver, "trials": self.trials,
                 "fraction": float(self.fractions[i, j])}
                for i, r in enumerate(self.ranks) for j, q in enumerate(self.ratios)]


def run_phase_transition(ranks: Sequence[int], ratios: Sequence[float], base: SyntheticSpec,
                         solver: str, trials: int, cfg: SolverConfig | None = None,
                         master_seed: int = 0, jobs: int = 1, solver_kwargs=None) -> GridReport:
    _check_trials(trials)
    name = canonical_name(solver)
    cfg = cfg or SolverConfig()
    ranks, ratios = [int(r) for r in ranks], [float(q) for q in ratios]
    tasks = []
    for i, r in enumerate(ranks):
        for j, q in enumerate(ratios):
            spec = replace(base, rank=r, sample_ratio=q)
            tasks += _cell_tasks(i * len(ratios) + j, spec, [name], [cfg], trials, master_seed,
                                 solver_kwargs)
    records = run_tasks(tasks, jobs)
    hits = np.zeros((len(ranks), len(ratios)))
    for rec in records:
        hits[divmod(rec.cell, len(ratios))] += rec.success
    return GridReport(name, ranks, ratios, hits / trials, trials, master_seed, records)


def run_noise_sweep(sigmas: Sequence[float], base: SyntheticSpec, solvers: Sequence[str],
                    trials: int, configs=None, master_seed: int = 0, jobs: int = 1,
                    solver_kwargs=None) -> list[TrialRecord]:
    """Trials per ``(sigma, solver)``. Instances share truth and mask across
    ``sigma`` (the cell index does not enter the instance seed), so the sweep
    isolates the effect of the noise level."""
    _check_trials(trials)
    names = _solver_list(solvers)
    cfgs = _configs_for(names, configs)
    tasks = []
    for c, s in enumerate(sigmas):
        for t in _cell_tasks(0, replace(base, noise_sigma=float(s)), names, cfgs, trials,
                             master_seed, solver_kwargs):
            tasks.append(replace(t, cell=c))
    return run_tasks(tasks, jobs)


def mean_errors(records: Sequence[TrialRecord], key: str = "noise_sigma") -> dict:
    acc: dict = {}
    for r in records:
        acc.setdefault((getattr(r, key), r.solver), []).append(r.relative_error)
    return {k: float(np.mean(v)) for k, v in acc.items()}


def summary_rows(records: Sequence[TrialRecord], key: str) -> list[dict]:
    """Aggregate per ``(key, solver)``: trials, successes, fraction, mean error, divergences."""
    groups: dict = {}
    for r in records:
        groups.setdefault((getattr(r, key), r.solver), []).append(r)
    rows = []
    for (k, s), rs in groups.items():
        errs = [r.relative_error for r in rs]
        rows.append({key: k, "solver": s, "trials": len(rs),
                     "successes": sum(r.success for r in rs),
                     "fraction": sum(r.success for r in rs) / len(rs),
                     "mean_relative_error": float(np.mean(errs)),
                     "diverged": sum(r.terminated == "Diverged" for r in rs)})
    return rows


def evals_to_reach(trace, threshold: float) -> int | None:
    """Gradient evaluations at the first trace row with residual <= threshold."""
    for row in trace.rows:
        if row.residual <= threshold:
            return row.grad_evals
    return None
