"""Freeze the regression bands used by the acceptance suite.

Runs every banded quantity once with a calibration seed (different from the
seeds in the tests), then writes ``src/dilute_fermi/data/bands.json``.

Band rules
----------
* appendix integrals: per grid point ``value * (1 -/+ POINT_TOL)``, plus a
  family envelope ``[min/2, 2 max]``;
* leading-order and subleading lattice constants: ``[min/2, 2 max]``;
* regularization gap: ``[0, 2 max]`` (only an upper constant is claimed).

Usage::

    python scripts/calibrate_bands.py [--out PATH] [--quick]
"""

import argparse
import json
import math
import time
from pathlib import Path

from dilute_fermi import appendix_bounds as ab
from dilute_fermi import continuum as co
from dilute_fermi import lattice as la
from dilute_fermi import scattering as sc
from dilute_fermi.engine import RunBudget
from dilute_fermi.system import FermiSystem

SEED = 20261014
POINT_TOL = 0.05
RHOS = (1e-3, 1e-4, 1e-5)
L_LIST = (20, 28, 40, 56, 80)


def envelope(vals, lo_zero=False):
    vals = [v for v in vals if math.isfinite(v)]
    return {"lo": 0.0 if lo_zero else min(vals) / 2.0, "hi": 2.0 * max(vals),
            "calibration_min": min(vals), "calibration_max": max(vals)}


def appendix(budget, out):
    spec = ab.SweepSpec(budget=budget, seed=SEED)
    rep = ab.bound_sweep(spec, bands={})
    for fam in ("I2", "I3x3", "I2q_ratio"):
        rows = rep.family(fam)
        band = envelope([r.ratio for r in rows])
        band["points"] = {}
        for r in rows:
            key = ab.point_key(r.q, r.x) if fam == "I2q_ratio" else ab.point_key(r.x)
            band["points"][key] = {"lo": r.ratio * (1 - POINT_TOL), "hi": r.ratio * (1 + POINT_TOL),
                                   "calibration": r.ratio,
                                   "rel_error": r.estimate.rel_error}
        out[fam] = band
        print(f"{fam}: {band['calibration_min']:.4g} .. {band['calibration_max']:.4g}")


def leading_order(budget, out):
    vals = []
    for qk in (0.0, 0.5):
        for i, rho in enumerate(RHOS):
            system = FermiSystem(rho, rho, 1.0)
            res = co.leading_order_check(system, (0.0, 0.0, qk * system.kF("up")), budget,
                                         SEED + 10 * i + int(qk * 2))
            vals.append(res.ratio)
            print(f"leading order q/kF={qk} rho={rho:g}: {res.ratio:.5g} +- {res.ratio_error:.2g}")
    out["leading_order"] = envelope(vals)


def regularization(budget, out):
    vals = []
    for i, rho in enumerate(RHOS):
        system = FermiSystem(rho, rho, 1.0)
        gap = co.regularization_gap(system, system.ball_smearing((0, 0, 0)), budget, SEED + i)
        vals.append(gap.ratio)
        print(f"regularization rho={rho:g}: {gap.ratio:.5g} +- {gap.ratio_error:.2g}")
    out["regularization"] = envelope(vals, lo_zero=True)


def subleading(out):
    pot = sc.square_barrier(1.0, 8.0)
    sol = sc.solve_zero_energy(pot)
    phi = sc.phi_hat_function(sol, pot)
    system = FermiSystem(1e-2, 1e-2, sol.a)
    g = system.ball_smearing((0, 0, 0))
    scale = system.rho ** co.BEL_EXPONENT
    b1, b12 = [], []
    for L in L_LIST:
        lat = la.build_lattice(L, system)
        b1.append(la.discrete_B1_constant(lat, system, g, phi).value / L**3 / scale)
        b12.append(la.discrete_B1B2_constant(lat, system, g, phi).value / L**3 / scale)
        print(f"L={L}: B1 {b1[-1]:.4g}  B1B2 {b12[-1]:.4g}")
    out["B1"] = envelope(b1)
    out["B1B2"] = envelope(b12)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    default = Path(__file__).resolve().parents[1] / "src" / "dilute_fermi" / "data" / "bands.json"
    ap.add_argument("--out", type=Path, default=default)
    ap.add_argument("--quick", action="store_true", help="smaller budgets, for a dry run")
    args = ap.parse_args()

    n = 10**6 if args.quick else 10**7
    t0 = time.perf_counter()
    out = {"_provenance": {"script": "scripts/calibrate_bands.py", "seed": SEED,
                           "max_samples": n, "point_tol": POINT_TOL,
                           "note": "empirical regression data, not derived constants"}}
    appendix(RunBudget(max_samples=n, target_rel_err=0.002), out)
    leading_order(RunBudget(max_samples=n // 2, target_rel_err=0.002), out)
    regularization(RunBudget(max_samples=n // 2, target_rel_err=0.002), out)
    subleading(out)
    out["_provenance"]["wall_time_s"] = round(time.perf_counter() - t0, 1)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(json.dumps(out, indent=1, sort_keys=True) + "\n")
    print(f"wrote {args.out} in {out['_provenance']['wall_time_s']} s")


if __name__ == "__main__":
    main()
