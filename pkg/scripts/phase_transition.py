"""Success fraction over a (rank, sample ratio) grid for one solver."""
from _common import emit, parser

from lowrank_recovery.experiments import SyntheticSpec, run_phase_transition
from lowrank_recovery.solvers import SolverConfig


def main():
    p = parser(__doc__)
    p.add_argument("--solver", default="svrg")
    p.add_argument("--ranks", type=int, nargs="+", default=list(range(1, 13)))
    p.add_argument("--ratios", type=float, nargs="+",
                   default=[0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--size", type=int, default=30)
    a = p.parse_args()
    grid = run_phase_transition(a.ranks, a.ratios, SyntheticSpec(a.size, a.size, 1, 0.9),
                                a.solver, a.trials, SolverConfig(batch_size=10), a.seed, a.jobs)
    note = [f"seed = {a.seed}", f"solver = {a.solver}", f"size = {a.size}"]
    emit(a.out / "phase_trials.csv", [r.row() for r in grid.records], note)
    emit(a.out / "phase_grid.csv", grid.rows(), note)


if __name__ == "__main__":
    main()
