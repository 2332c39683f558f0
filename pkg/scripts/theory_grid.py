"""Tabulate the contraction constants over a (delta, eta, n) grid."""
from _common import emit, parser

from lowrank_recovery.theory import convergence_constants, theorem1_interval, theorem2_interval


def main():
    p = parser(__doc__)
    p.add_argument("--deltas", type=float, nargs="+", default=[0.0, 0.005, 0.01, 1 / 71 - 1e-6])
    p.add_argument("--points", type=int, default=20)
    p.add_argument("--inner", type=int, nargs="+", default=[10, 100, 1000])
    a = p.parse_args()
    rows = []
    for which, interval in (("theorem1", theorem1_interval), ("theorem2", theorem2_interval)):
        for d in a.deltas:
            iv = interval(d)
            for eta in iv.interior(a.points) if iv.nonempty else []:
                for n in a.inner:
                    c = convergence_constants(d, eta, n)
                    rows.append({"interval": which, "delta": d, "eta": float(eta), "n": n,
                                 "rho": c.rho, "kappa": c.kappa, "mu": c.mu, "nu": c.nu,
                                 "beta": c.beta, "kappa_below_one": c.kappa_below_one,
                                 "beta_below_one": c.beta_below_one})
    emit(a.out / "theory_grid.csv", rows)


if __name__ == "__main__":
    main()
