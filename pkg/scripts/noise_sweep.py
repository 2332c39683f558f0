"""Mean relative error versus additive noise level."""
from _common import emit, parser

from lowrank_recovery.experiments import (SyntheticSpec, matched_config, run_noise_sweep,
                                          summary_rows)
from lowrank_recovery.solvers import FixedStep, SolverConfig


def main():
    p = parser(__doc__)
    p.add_argument("--sigmas", type=float, nargs="+", default=[0.0, 0.1, 0.2, 0.3, 0.4])
    p.add_argument("--trials", type=int, default=10)
    a = p.parse_args()
    base = SyntheticSpec(50, 50, 4, 0.5)
    ref = SolverConfig(batch_size=25, outer_iterations=40)
    cfgs = {"svrg": ref,
            "stoiht": matched_config("stoiht", ref, "svrg", ref, base.sample_count),
            "svp": SolverConfig(step=FixedStep(0.4), outer_iterations=300),
            "niht": SolverConfig(outer_iterations=300),
            "svt": SolverConfig(outer_iterations=300)}
    recs = run_noise_sweep(a.sigmas, base, list(cfgs), a.trials, cfgs, a.seed, a.jobs)
    note = [f"seed = {a.seed}", f"trials = {a.trials}"]
    emit(a.out / "noise_trials.csv", [r.row() for r in recs], note)
    emit(a.out / "noise_summary.csv", summary_rows(recs, "noise_sigma"), note)


if __name__ == "__main__":
    main()
