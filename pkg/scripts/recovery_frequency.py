"""Exact-recovery frequency versus rank on 50x50 completion at half sampling."""
from _common import emit, parser

from lowrank_recovery.experiments import (SyntheticSpec, run_recovery_frequency,
                                          summary_rows)
from lowrank_recovery.solvers import FixedStep, SolverConfig


def main():
    p = parser(__doc__)
    p.add_argument("--ranks", type=int, nargs="+", default=list(range(1, 16)))
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--solvers", nargs="+", default=["svrg", "stoiht", "svp", "niht"])
    a = p.parse_args()
    cfgs = {"svrg": SolverConfig(batch_size=25), "stoiht": SolverConfig(batch_size=25,
                                                                        outer_iterations=300),
            "svp": SolverConfig(step=FixedStep(0.4), outer_iterations=300),
            "niht": SolverConfig(outer_iterations=300), "svt": SolverConfig(outer_iterations=300)}
    recs = run_recovery_frequency(a.ranks, SyntheticSpec(50, 50, 1, 0.5), a.solvers, a.trials,
                                  {s: cfgs[s] for s in a.solvers}, a.seed, a.jobs)
    note = [f"seed = {a.seed}", f"trials = {a.trials}"]
    emit(a.out / "frequency_trials.csv", [r.row() for r in recs], note)
    emit(a.out / "frequency_summary.csv", summary_rows(recs, "rank"), note)


if __name__ == "__main__":
    main()
