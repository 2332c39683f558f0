"""Residual against gradient evaluations for each solver on one 50x50, r=4 instance.

SVRG-ARM sets the budget; StoIHT and SVP get the same number of gradient
evaluations.
"""
from dataclasses import replace

from _common import emit, parser

from lowrank_recovery.experiments import SyntheticSpec, make_instance, matched_config
from lowrank_recovery.solvers import FixedStep, SolverConfig, solve


def main():
    p = parser(__doc__)
    p.add_argument("--outer", type=int, default=80)
    a = p.parse_args()
    inst = make_instance(SyntheticSpec(50, 50, 4, 0.5, 0.0, a.seed))
    ref = SolverConfig(batch_size=25, outer_iterations=a.outer, tolerance=1e-12, seed=a.seed)
    cfgs = {"svrg": ref,
            "stoiht": matched_config("stoiht", ref, "svrg", ref, inst.m),
            "svp": matched_config("svp", replace(ref, step=FixedStep(0.4)), "svrg", ref, inst.m),
            "niht": matched_config("niht", ref, "svrg", ref, inst.m),
            "svt": matched_config("svt", ref, "svrg", ref, inst.m)}
    rows = []
    for name, cfg in cfgs.items():
        res = solve(name, inst, cfg)
        rows += [{"solver": name, **r} for r in res.trace.records()]
    emit(a.out / "convergence.csv", rows, [f"seed = {a.seed}"])


if __name__ == "__main__":
    main()
