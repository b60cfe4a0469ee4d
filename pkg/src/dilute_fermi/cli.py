"""``dilute-fermi`` command line.

Every subcommand reads a config (see :mod:`dilute_fermi.config`), writes
``<subcommand>.csv`` with one row per computed quantity and, unless
``[io] json = false``, a ``<subcommand>.manifest.json`` that can be fed back
as ``--config`` to reproduce the CSV.  Failures exit nonzero after writing
``error.json`` (and printing the same record on stderr).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import platform
import sys
import time
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from . import appendix_bounds as ab
from . import continuum as co
from . import lattice as la
from . import scattering as sc
from .config import RunConfig, apply_overrides, load_config
from .engine import RunBudget
from .system import ConfigError, SmearingSpec

SUBCOMMANDS = ("scatter", "energy", "belyakov", "regularization", "bounds", "lattice", "sweep")

CSV_SCHEMA = "1"
CSV_COLUMNS = ["schema", "subcommand", "quantity", "value", "std_error", "n_samples", "seed",
               "method", "flags", "rho_up", "rho_down", "a", "delta", "alpha",
               "q_x", "q_y", "q_z", "sigma", "L", "x", "s"]


def fmt(v) -> str:
    """Lossless text for CSV cells: 17 significant digits for floats."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    if isinstance(v, (tuple, list)):
        return ";".join(str(t) for t in v)
    return str(v)


class Emitter:
    def __init__(self, subcommand: str, cfg: RunConfig):
        self.sub = subcommand
        self.cfg = cfg
        self.rows: list[dict] = []

    def base(self) -> dict:
        p = self.cfg.physical
        return {"rho_up": p.get("rho_up"), "rho_down": p.get("rho_down"),
                "delta": p.get("delta"), "alpha": p.get("alpha")}

    def add(self, quantity: str, value, std_error=0.0, n_samples=0, method="exact", flags=(),
            seed=None, **params):
        row = {c: "" for c in CSV_COLUMNS}
        row.update({k: fmt(v) for k, v in self.base().items()})
        row.update({"schema": CSV_SCHEMA, "subcommand": self.sub, "quantity": quantity,
                    "value": fmt(float(value)), "std_error": fmt(float(std_error)),
                    "n_samples": fmt(int(n_samples)),
                    "seed": fmt(self.cfg.seed if seed is None else seed),
                    "method": method, "flags": fmt(tuple(flags))})
        for k, v in params.items():
            if k not in row:
                raise KeyError(f"unknown CSV column {k}")
            row[k] = fmt(v)
        self.rows.append(row)

    def add_estimate(self, quantity, est, **params):
        self.add(quantity, est.value, est.std_error, est.n_samples, est.method,
                 est.flags, est.seed, **params)

    def write(self, path: Path) -> Path:
        with path.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
            w.writeheader()
            w.writerows(self.rows)
        return path


# ---------------------------------------------------------------------------
# helpers


def _budget(cfg: RunConfig) -> RunBudget:
    return RunBudget(max_samples=int(float(cfg.task["max_samples"])),
                     target_rel_err=cfg.tf("target_rel_err"), workers=cfg.workers)


def _potential(cfg: RunConfig):
    kind = cfg.potential_kind
    if kind == "none":
        return None
    table = cfg.physical.get("table") or None
    if kind in ("square", "smooth") and (cfg.pf("R0") is None or cfg.pf("V0") is None):
        raise ConfigError(f"potential = {kind} needs [physical] R0 and V0")
    if kind == "table" and table is None:
        raise ConfigError("potential = table needs [physical] table = <csv path>")
    return sc.potential_from_config(kind, cfg.pf("R0"), cfg.pf("V0"), table)


def _scattering_length(cfg: RunConfig) -> tuple[float, object, object]:
    """``a`` from the config: explicit value wins, else solve the potential."""
    a = cfg.pf("a")
    pot = _potential(cfg)
    sol = sc.solve_zero_energy(pot) if pot is not None else None
    if a is None:
        if sol is None:
            raise ConfigError("need either [physical] a or a potential to derive it")
        a = sol.a
    return a, pot, sol


def _q(cfg: RunConfig) -> tuple[float, float, float]:
    q = cfg.tlist("q")
    if len(q) != 3:
        raise ConfigError("[task] q must have three components")
    return tuple(q)


def _smearing(cfg: RunConfig, system) -> SmearingSpec:
    sigma = cfg.task.get("sigma", "up")
    rad = cfg.task.get("smearing_radius", "")
    if str(rad).strip():
        return SmearingSpec.ball(_q(cfg), float(rad), sigma)
    return system.ball_smearing(_q(cfg), sigma)


def _qparams(g: SmearingSpec) -> dict:
    return {"q_x": g.center[0], "q_y": g.center[1], "q_z": g.center[2], "sigma": g.sigma}


# ---------------------------------------------------------------------------
# subcommands


def cmd_scatter(cfg: RunConfig, out: Emitter):
    pot = _potential(cfg)
    if pot is None:
        raise ConfigError("scatter needs [physical] potential (square, smooth or table)")
    sol = sc.solve_zero_energy(pot)
    out.add("scattering_length", sol.a, method="quadrature", a=sol.a)
    out.add("sum_rule_relative_error", sc.sum_rule_check(sol, pot), method="quadrature", a=sol.a)
    if pot.kind == "square-barrier":
        R0, V0 = pot.params["R0"], pot.params["V0"]
        out.add("scattering_length_closed_form", sc.square_barrier_length(R0, V0), a=sol.a)


def cmd_energy(cfg: RunConfig, out: Emitter):
    a, _, _ = _scattering_length(cfg)
    rho = cfg.pf("rho_up") + cfg.pf("rho_down")
    hy = co.huang_yang_energy(rho, a)
    for name in ("free", "first", "second", "total"):
        out.add(f"huang_yang_{name}", getattr(hy, name), a=a)


def cmd_belyakov(cfg: RunConfig, out: Emitter):
    a, _, _ = _scattering_length(cfg)
    system = cfg.system(a)
    g = _smearing(cfg, system)
    res = co.belyakov_result(system, g, _budget(cfg), cfg.seed)
    p = dict(a=a, **_qparams(g))
    out.add_estimate("n_bel_up", res.up, **p)
    out.add_estimate("n_bel_down", res.down, **p)
    out.add_estimate("n_bel_total", res.total, **p)
    out.add_estimate("four_term_unregularized", res.four_term, **p)


def cmd_regularization(cfg: RunConfig, out: Emitter):
    a, _, _ = _scattering_length(cfg)
    system = cfg.system(a)
    g = _smearing(cfg, system)
    b = _budget(cfg)
    gap = co.regularization_gap(system, g, b, cfg.seed)
    cg = co.regularized_constant(system, g, b, cfg.seed + 1)
    p = dict(a=a, **_qparams(g))
    out.add_estimate("regularized_constant", cg, **p)
    out.add_estimate("regularization_gap", gap.gap, **p)
    out.add("regularization_gap_ratio", gap.ratio, gap.ratio_error, gap.gap.n_samples,
            gap.gap.method, gap.flags, **p)


def cmd_bounds(cfg: RunConfig, out: Emitter):
    spec = ab.SweepSpec(x_values=cfg.tlist("x_values"),
                        s_values=[int(s) for s in cfg.tlist("s_values")],
                        q_values=cfg.tlist("q_values"), xq_values=cfg.tlist("xq_values"),
                        budget=_budget(cfg), seed=cfg.seed, method=cfg.task["method"])
    rep = ab.bound_sweep(spec)
    for r in rep.rows:
        flags = ("in-band",) if r.in_band else ("out-of-band",)
        if r.error:
            flags = ("error", r.error)
        e = r.estimate
        out.add(f"{r.family}_value", e.value if e else math.nan, e.std_error if e else 0.0,
                e.n_samples if e else 0, e.method if e else "", flags, e.seed if e else None,
                x=r.x, s=r.s, q_z=r.q)
        out.add(f"{r.family}_ratio", r.ratio, flags=flags, x=r.x, s=r.s, q_z=r.q,
                method=e.method if e else "")


def cmd_lattice(cfg: RunConfig, out: Emitter):
    a, pot, sol = _scattering_length(cfg)
    system = cfg.system(a)
    g = _smearing(cfg, system)
    table = la.thermodynamic_convergence(system, g, cfg.tlist("L_list"), _budget(cfg), cfg.seed,
                                         threshold=cfg.tf("gap_threshold"),
                                         cap=int(float(cfg.task["point_cap"])))
    p = dict(a=a, **_qparams(g))
    phi = sc.phi_hat_function(sol, pot) if sol is not None else None
    for row in table.rows:
        out.add("B2_constant", row.value, flags=(row.error,) if row.error else (), L=row.L, **p)
        out.add("relative_gap", row.rel_gap, L=row.L, **p)
        if phi is not None and not row.error:
            lat = la.build_lattice(row.L, system)
            out.add("B1_constant", la.discrete_B1_constant(lat, system, g, phi).value, L=row.L, **p)
            b12 = la.discrete_B1B2_constant(lat, system, g, phi)
            out.add("B1B2_constant", b12.value, flags=b12.flags, L=row.L, **p)
    if table.rows:
        r0 = table.rows[0]
        out.add("continuum_C_g", r0.continuum, r0.continuum_err, method="mc-importance", **p)
    x, y, rel = table.identity
    out.add("normalization_identity_rel_diff", rel, a=a)
    out.add("convergence_passed", float(table.passed), a=a)


def cmd_sweep(cfg: RunConfig, out: Emitter):
    a, _, _ = _scattering_length(cfg)
    sigma = cfg.task.get("sigma", "up")
    i = 0
    for qk in cfg.tlist("q_over_kF"):
        for rho in cfg.tlist("rho_list"):
            cfg_i = RunConfig(dict(cfg.physical, rho_up=str(rho), rho_down=str(rho)),
                              cfg.task, cfg.io)
            system = cfg_i.system(a)
            q = (0.0, 0.0, qk * system.kF(sigma))
            res = co.leading_order_check(system, q, _budget(cfg), cfg.seed + i, sigma)
            out.add("leading_order_ratio", res.ratio, res.ratio_error, res.estimate.n_samples,
                    res.estimate.method, res.flags, cfg.seed + i, rho_up=rho, rho_down=rho,
                    a=a, q_z=q[2], sigma=sigma)
            i += 1


COMMANDS = {"scatter": cmd_scatter, "energy": cmd_energy, "belyakov": cmd_belyakov,
            "regularization": cmd_regularization, "bounds": cmd_bounds,
            "lattice": cmd_lattice, "sweep": cmd_sweep}


# ---------------------------------------------------------------------------
# entry points


def versions() -> dict:
    import scipy
    return {"dilute_fermi": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def run(subcommand: str, cfg: RunConfig) -> int:
    """Execute one subcommand; returns the process exit status."""
    outdir = cfg.output_dir
    t0 = time.perf_counter()
    try:
        if subcommand not in COMMANDS:
            raise ConfigError(f"unknown subcommand {subcommand!r}")
        cfg.validate()
        outdir.mkdir(parents=True, exist_ok=True)
        em = Emitter(subcommand, cfg)
        COMMANDS[subcommand](cfg, em)
        csv_path = em.write(outdir / f"{subcommand}.csv")
        if str(cfg.io.get("json", "true")).lower() in ("1", "true", "yes"):
            manifest = {"status": "ok", "subcommand": subcommand, "csv_schema": CSV_SCHEMA,
                        "config": cfg.as_dict(), "resolved": {"seed": cfg.seed,
                                                              "workers": cfg.workers},
                        "versions": versions(), "wall_time_s": time.perf_counter() - t0,
                        "outputs": [csv_path.name], "n_rows": len(em.rows)}
            # seed is pinned so the manifest replays identically without the environment
            manifest["config"]["io"]["seed"] = str(cfg.seed)
            (outdir / f"{subcommand}.manifest.json").write_text(json.dumps(manifest, indent=2))
        return 0
    except Exception as exc:
        record = {"status": "error", "subcommand": subcommand,
                  "error_type": type(exc).__name__, "message": str(exc),
                  "config_error": isinstance(exc, ConfigError)}
        if not isinstance(exc, ConfigError):
            record["traceback"] = traceback.format_exc(limit=5)
        try:
            outdir.mkdir(parents=True, exist_ok=True)
            (outdir / "error.json").write_text(json.dumps(record, indent=2))
        except OSError:
            pass
        print(json.dumps(record), file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dilute-fermi", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("-c", "--config", help="INI config or a JSON manifest from an earlier run")
    ap.add_argument("-o", "--output-dir", help="overrides [io] output_dir")
    ap.add_argument("--seed", type=int, help="overrides [io] seed")
    ap.add_argument("--workers", type=int, help="overrides [io] workers")
    ap.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                    help="override any config entry; repeatable")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        apply_overrides(cfg, args.set)
    except ConfigError as exc:
        record = {"status": "error", "subcommand": args.subcommand,
                  "error_type": "ConfigError", "message": str(exc), "config_error": True}
        print(json.dumps(record), file=sys.stderr)
        return 2
    if args.output_dir:
        cfg.io["output_dir"] = args.output_dir
    if args.seed is not None:
        cfg.io["seed"] = str(args.seed)
    if args.workers is not None:
        cfg.io["workers"] = str(args.workers)
    return run(args.subcommand, cfg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
