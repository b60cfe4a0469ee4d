"""Rescaled Fermi-surface integrals ``I_s(x)`` and ``I_2^(q)(x)`` and their bounds.

Units are rescaled so the first Fermi ball has radius one and the second
radius ``x``.  On the constraint sets the excitation-energy sum
``e_{r+p} + e_r + ẽ_{r'-p} + ẽ_{r'}`` equals
``|r + p|^2 - |r|^2 + |r' - p|^2 - |r'|^2``, which is what the reduced
estimators use.

Primary estimators (``method="mc-importance"``) integrate the second lune in
closed form (:mod:`dilute_fermi.reduction`) and sample the remaining low
dimensional variables; their integrands are bounded or log-singular, so the
variance is finite.  ``method="mc-uniform"`` is the literal constrained
uniform sampler (kept as an independent oracle; its variance is infinite for
``s = 2`` in the strict sense, so it converges slowly) and
``method="quadrature"`` a deterministic Gauss-Legendre evaluation.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from . import reduction as red
from .engine import IntegralEstimate, RunBudget, SamplerSpec, as_budget, estimate_draws

DEFAULT_X = (0.1, 0.2, 0.4, 0.8, 1.0)
DEFAULT_Q = (0.0, 0.5, 1.0, 2.0, 3.0, 5.0)
DEFAULT_XQ = (0.25, 0.5, 1.0, 2.0)


def _check_s(s):
    if s not in (2, 3):
        raise ValueError(f"s must be 2 or 3, got {s!r}")


# ---------------------------------------------------------------------------
# I_s


def integral_Is(x: float, s: int, budget: RunBudget | int | None = None, seed: int = 0,
                method: str = "mc-importance") -> IntegralEstimate:
    """``∫dp ∫_{|r|<1<|r+p|} dr ∫_{|r'|<x<|r'-p|} dr' D^-s``.

    Parameters
    ----------
    x : float
        Ratio of Fermi momenta, ``0 < x <= 1``.
    s : {2, 3}
        Power of the energy denominator.
    method : {"mc-importance", "mc-uniform", "quadrature"}
    """
    _check_s(s)
    if not 0.0 < x <= 1.0:
        raise ValueError(f"x must lie in (0, 1], got {x}")
    if method == "quadrature":
        val = red.lune_pair_quadrature(1.0, x, s)
        return IntegralEstimate(val, 0.0, 0, "quadrature", seed)
    if method == "mc-uniform":
        return _Is_uniform(x, s, budget, seed)
    if method != "mc-importance":
        raise ValueError(f"unknown method {method!r}")
    est = estimate_draws(red.lune_pair_draw(1.0, x, s), budget, seed, "mc-importance", (2, s))
    return est


def _Is_uniform(x, s, budget, seed, p_core=3.0):
    balls = (SamplerSpec("ball", radius=1.0), SamplerSpec("ball", radius=x),
             SamplerSpec("space", radius=p_core))

    def draw(rng, n):
        (r, w1), (rp, w2), (p, w3) = (sp.sample(rng, n) for sp in balls)
        rpp = r + p
        rmp = rp - p
        A = np.einsum("ij,ij->i", rpp, rpp) - np.einsum("ij,ij->i", r, r)
        B = np.einsum("ij,ij->i", rmp, rmp) - np.einsum("ij,ij->i", rp, rp)
        ok = (np.einsum("ij,ij->i", rpp, rpp) > 1.0) & (np.einsum("ij,ij->i", rmp, rmp) > x * x)
        D = np.where(ok, A + B, 1.0)
        return np.where(ok, w1 * w2 * w3 / D**s, 0.0)

    return estimate_draws(draw, budget, seed, "mc-uniform", (9, s))


# ---------------------------------------------------------------------------
# I_2^(q)


def integral_I2_q(q_norm: float, x: float, budget: RunBudget | int | None = None,
                  seed: int = 0, method: str = "mc-importance") -> IntegralEstimate:
    """``I_2^(q)(x)``: the ``I_2`` integrand with ``δ(r - q) + δ(r + p - q)`` inserted.

    Term A (``r = q``) needs ``|q| <= 1`` (closed Fermi ball, matching the
    occupation convention); term B (``r + p = q``) needs ``|q| > 1``.  Only
    one of them is ever non-zero.
    """
    Q = float(q_norm)
    if Q < 0 or not x > 0:
        raise ValueError("need |q| >= 0 and x > 0")
    k, kx = 1.0, float(x)
    if method == "quadrature":
        val = red.hole_quadrature(Q, k, kx) if Q <= 1.0 else red.particle_quadrature(Q, k, kx)
        return IntegralEstimate(val, 0.0, 0, "quadrature", seed)
    if method == "mc-uniform":
        return _I2q_uniform(Q, kx, budget, seed)
    if method != "mc-importance":
        raise ValueError(f"unknown method {method!r}")
    if Q <= 1.0:
        def draw(rng, n):
            return red.hole_values(rng, np.full(n, Q), k, kx)
    else:
        q = np.array([0.0, 0.0, Q])

        def draw(rng, n):
            return red.particle_values(rng, np.broadcast_to(q, (n, 3)), k, kx)
    return estimate_draws(draw, budget, seed, "mc-importance", (22,))


def _I2q_uniform(Q, x, budget, seed, p_core=3.0):
    q = np.array([0.0, 0.0, Q])
    rp_ball = SamplerSpec("ball", radius=x)
    if Q <= 1.0:
        p_space = SamplerSpec("space", radius=p_core)

        def draw(rng, n):
            (rp, w2), (p, w3) = rp_ball.sample(rng, n), p_space.sample(rng, n)
            qp = q + p
            rmp = rp - p
            ok = (np.einsum("ij,ij->i", qp, qp) > 1.0) & (np.einsum("ij,ij->i", rmp, rmp) > x * x)
            D = (np.einsum("ij,ij->i", qp, qp) - Q * Q
                 + np.einsum("ij,ij->i", rmp, rmp) - np.einsum("ij,ij->i", rp, rp))
            return np.where(ok, w2 * w3 / np.where(ok, D, 1.0) ** 2, 0.0)
    else:
        r_ball = SamplerSpec("ball", radius=1.0)

        def draw(rng, n):
            (r, w1), (rp, w2) = r_ball.sample(rng, n), rp_ball.sample(rng, n)
            p = q - r
            rmp = rp - p
            ok = np.einsum("ij,ij->i", rmp, rmp) > x * x
            D = (Q * Q - np.einsum("ij,ij->i", r, r)
                 + np.einsum("ij,ij->i", rmp, rmp) - np.einsum("ij,ij->i", rp, rp))
            return np.where(ok, w1 * w2 / np.where(ok, D, 1.0) ** 2, 0.0)
    return estimate_draws(draw, budget, seed, "mc-uniform", (66,))


def I2q_normalized(value: float, q_norm: float, x: float) -> float:
    """``I_2^(q) (1 + |q|^4) / (x^-2 + x^3)``."""
    return value * (1.0 + q_norm**4) / (x**-2 + x**3)


# ---------------------------------------------------------------------------
# frozen bands


def load_bands(path: str | Path | None = None) -> dict:
    """Frozen regression bands; the bundled file unless ``path`` is given."""
    if path is None:
        text = resources.files("dilute_fermi").joinpath("data/bands.json").read_text()
    else:
        text = Path(path).read_text()
    return json.loads(text)


def point_key(*coords: float) -> str:
    return ",".join(f"{c:g}" for c in coords)


def band_of(bands: dict, key: str, point: tuple[float, ...] | None = None) -> tuple[float, float]:
    """``(lo, hi)`` for a family, or for one grid point when the file has it.

    Per-point bands live under ``bands[key]["points"]["x"]`` (or ``"q,x"``);
    a point without its own entry falls back to the family envelope.
    """
    b = bands[key]
    if point is not None:
        pts = b.get("points", {})
        k = point_key(*point)
        if k in pts:
            b = pts[k]
    return float(b["lo"]), float(b["hi"])


# ---------------------------------------------------------------------------
# sweep


@dataclass
class SweepSpec:
    """Grid for :func:`bound_sweep`.  Empty tuples skip that family."""

    x_values: Sequence[float] = DEFAULT_X
    s_values: Sequence[int] = (2, 3)
    q_values: Sequence[float] = DEFAULT_Q
    xq_values: Sequence[float] = DEFAULT_XQ
    budget: RunBudget = field(default_factory=lambda: RunBudget(max_samples=10_000_000,
                                                                 target_rel_err=0.005))
    seed: int = 0
    method: str = "mc-importance"


@dataclass
class BoundRow:
    family: str            # "I2", "I3x3" or "I2q_ratio"
    x: float
    q: float
    s: int
    estimate: IntegralEstimate | None
    ratio: float
    band: tuple[float, float]
    error: str = ""

    @property
    def in_band(self) -> bool:
        return (self.estimate is not None and not self.error
                and self.band[0] <= self.ratio <= self.band[1])

    def as_csv(self) -> dict:
        e = self.estimate
        return {"family": self.family, "x": repr(self.x), "q": repr(self.q), "s": self.s,
                "value": f"{e.value:.17g}" if e else "", "std_error": f"{e.std_error:.17g}" if e else "",
                "rel_error": f"{e.rel_error:.17g}" if e else "",
                "n_samples": e.n_samples if e else 0, "seed": e.seed if e else "",
                "method": e.method if e else "", "ratio": f"{self.ratio:.17g}",
                "band_lo": f"{self.band[0]:.17g}", "band_hi": f"{self.band[1]:.17g}",
                "in_band": int(self.in_band), "error": self.error}


@dataclass
class BoundCheckReport:
    rows: list[BoundRow] = field(default_factory=list)

    def family(self, name: str) -> list[BoundRow]:
        return [r for r in self.rows if r.family == name]

    def ratio_range(self, name: str) -> tuple[float, float]:
        vals = [r.ratio for r in self.family(name) if r.estimate is not None]
        return (min(vals), max(vals)) if vals else (math.nan, math.nan)

    @property
    def passed(self) -> bool:
        return all(r.in_band for r in self.rows)

    @property
    def max_rel_error(self) -> float:
        errs = [r.estimate.rel_error for r in self.rows if r.estimate and r.estimate.value]
        return max(errs) if errs else 0.0

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        cols = list(BoundRow("I2", 0.0, 0.0, 2, None, 0.0, (0.0, 0.0)).as_csv())
        with path.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols)
            w.writeheader()
            for r in self.rows:
                w.writerow(r.as_csv())
        return path


def bound_sweep(spec: SweepSpec | None = None, bands: dict | None = None) -> BoundCheckReport:
    """Evaluate every grid point and compare the normalized ratios with the bands.

    A failing grid point becomes a flagged row; the sweep continues.
    """
    spec = spec or SweepSpec()
    if bands is None:
        try:
            bands = load_bands()
        except FileNotFoundError:
            bands = {}
    inf_band = (-math.inf, math.inf)
    report = BoundCheckReport()
    budget = as_budget(spec.budget)

    for s in spec.s_values:
        fam = "I2" if s == 2 else "I3x3"
        for i, x in enumerate(spec.x_values):
            band = band_of(bands, fam, (x,)) if fam in bands else inf_band
            try:
                est = integral_Is(x, s, budget, seed=spec.seed + 1000 * s + i, method=spec.method)
                ratio = est.value * (x**3 if s == 3 else 1.0)
                report.rows.append(BoundRow(fam, x, 0.0, s, est, ratio, band))
            except Exception as exc:  # flagged row, not an abort
                report.rows.append(BoundRow(fam, x, 0.0, s, None, math.nan, band, repr(exc)))

    for i, q in enumerate(spec.q_values):
        for j, x in enumerate(spec.xq_values):
            band = band_of(bands, "I2q_ratio", (q, x)) if "I2q_ratio" in bands else inf_band
            try:
                est = integral_I2_q(q, x, budget, seed=spec.seed + 5000 + 100 * i + j,
                                    method=spec.method)
                report.rows.append(BoundRow("I2q_ratio", x, q, 2, est,
                                            I2q_normalized(est.value, q, x), band))
            except Exception as exc:
                report.rows.append(BoundRow("I2q_ratio", x, q, 2, None, math.nan, band, repr(exc)))
    return report
