"""Leading-order ratio and regularization gap over a density grid.

    python scripts/leading_order_sweep.py --rho 1e-3 1e-4 1e-5 --samples 1e6
"""

import argparse

from dilute_fermi import continuum as co
from dilute_fermi.engine import RunBudget
from dilute_fermi.system import FermiSystem


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rho", type=float, nargs="+", default=[1e-3, 1e-4, 1e-5])
    ap.add_argument("--q-over-kF", type=float, nargs="+", default=[0.0, 0.5])
    ap.add_argument("--samples", type=float, default=1e6)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    b = RunBudget(int(args.samples), 0.002)
    print(f"{'rho':>8} {'q/kF':>5} {'ratio':>10} {'err':>8}")
    for qk in args.q_over_kF:
        for i, rho in enumerate(args.rho):
            s = FermiSystem(rho, rho, 1.0)
            r = co.leading_order_check(s, (0, 0, qk * s.kF_up), b, args.seed + i)
            print(f"{rho:8.0e} {qk:5.2f} {r.ratio:10.5f} {r.ratio_error:8.2g}")
    print(f"\n{'rho':>8} {'gap ratio':>10} {'err':>8}")
    for i, rho in enumerate(args.rho):
        s = FermiSystem(rho, rho, 1.0)
        gap = co.regularization_gap(s, s.ball_smearing(), b, args.seed + 100 + i)
        print(f"{rho:8.0e} {gap.ratio:10.5f} {gap.ratio_error:8.2g}")


if __name__ == "__main__":
    main()
