"""Zero-energy scattering for non-negative, compactly supported radial potentials.

The scattering equation ``2 Δφ + V (1 - φ) = 0`` with ``φ -> 0`` at infinity
becomes, for the radial reduction ``u(r) = r (1 - φ(r))``, the linear ODE

    u'' = V(r) u / 2,      u(0) = 0.

Outside the support ``u`` is affine, ``u(r) ∝ r - a``, which defines the
scattering length ``a``.  With this normalization ``∫ V (1 - φ) dx = 8 π a``.
"""

from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicHermiteSpline

TWO_PI_CUBED = (2.0 * math.pi) ** 3


class PotentialError(ValueError):
    pass


class DegenerateSolutionError(ArithmeticError):
    """Zero-energy resonance: ``u'`` vanishes at the matching radius."""


@dataclass(frozen=True)
class RadialPotential:
    """Non-negative radial potential ``V(r)`` vanishing for ``r > support_radius``.

    ``breakpoints`` lists radii where ``V`` or its derivative jumps; the ODE
    stepper and the Fourier quadrature never step across them.
    """

    profile: Callable[[np.ndarray], np.ndarray]
    support_radius: float
    kind: str = "user-defined"
    breakpoints: tuple[float, ...] = ()
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in ("square-barrier", "tabulated", "user-defined", "smooth-bump", "zero"):
            raise PotentialError(f"unknown potential kind {self.kind!r}")
        if not (self.support_radius > 0 and math.isfinite(self.support_radius)):
            raise PotentialError("support radius must be positive and finite")

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        v = np.asarray(self.profile(r), dtype=float)
        v = np.broadcast_to(v, r.shape)
        return np.where(r > self.support_radius, 0.0, v)

    def nodes(self) -> np.ndarray:
        """Sorted integration nodes ``0 < ... < R0`` bounding smooth pieces."""
        pts = {0.0, float(self.support_radius)}
        pts.update(b for b in self.breakpoints if 0.0 < b < self.support_radius)
        return np.array(sorted(pts))

    def validate(self, n_probe: int = 4097) -> None:
        r = np.linspace(0.0, self.support_radius, n_probe)
        for lo, hi in zip(self.nodes()[:-1], self.nodes()[1:]):
            r = np.concatenate([r, np.linspace(lo, hi, 65)[1:-1]])
        v = self(r)
        if not np.all(np.isfinite(v)):
            raise PotentialError("potential profile has non-finite values")
        if np.any(v < 0):
            raise PotentialError("potential must be non-negative (repulsive)")

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero"


def square_barrier(R0: float, V0: float) -> RadialPotential:
    if V0 < 0:
        raise PotentialError("barrier height must be non-negative")
    return RadialPotential(lambda r: np.full(np.shape(r), float(V0)), R0,
                           kind="square-barrier", breakpoints=(R0,),
                           params={"R0": R0, "V0": V0})


def zero_potential(R0: float = 1.0) -> RadialPotential:
    return RadialPotential(lambda r: np.zeros(np.shape(r)), R0, kind="zero",
                           params={"R0": R0, "V0": 0.0})


def smooth_bump(R0: float, V0: float) -> RadialPotential:
    """``V0 (1 - (r/R0)^2)^2`` on ``r < R0``: continuously differentiable at ``R0``."""
    def prof(r):
        s = np.clip(1.0 - (np.asarray(r) / R0) ** 2, 0.0, None)
        return V0 * s * s
    return RadialPotential(prof, R0, kind="smooth-bump", params={"R0": R0, "V0": V0})


def tabulated(radii, values) -> RadialPotential:
    """Linear interpolation through ``(radii, values)``; zero beyond the last radius."""
    r = np.asarray(radii, dtype=float)
    v = np.asarray(values, dtype=float)
    if r.ndim != 1 or r.shape != v.shape or len(r) < 2:
        raise PotentialError("table needs two equal-length columns with >= 2 rows")
    if not (np.all(np.isfinite(r)) and np.all(np.isfinite(v))):
        raise PotentialError("table contains non-finite entries")
    if np.any(np.diff(r) <= 0) or r[0] < 0:
        raise PotentialError("table radii must be increasing and non-negative")
    if np.any(v < 0):
        raise PotentialError("potential must be non-negative (repulsive)")
    if r[0] > 0:
        # hold the first value down to the origin
        r = np.concatenate([[0.0], r])
        v = np.concatenate([[v[0]], v])
    rr, vv = r.copy(), v.copy()
    return RadialPotential(lambda x: np.interp(x, rr, vv, right=0.0), float(r[-1]),
                           kind="tabulated", breakpoints=tuple(r[1:-1]),
                           params={"n_rows": len(r)})


def load_potential_csv(path) -> RadialPotential:
    """Read a two-column ``radius,value`` table (header row optional)."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].strip().startswith("#"):
                continue
            try:
                rows.append((float(rec[0]), float(rec[1])))
            except ValueError:
                if rows:
                    raise PotentialError(f"malformed row {rec!r} in {path}")
    if not rows:
        raise PotentialError(f"no data rows in {path}")
    r, v = zip(*rows)
    return tabulated(r, v)


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScatteringSolution:
    """Zero-energy solution normalized so that ``u(r) = r - a`` beyond the support."""

    a: float
    r: np.ndarray
    u: np.ndarray
    du: np.ndarray
    match_radius: float
    support_radius: float
    residual: float
    n_steps: int

    def interpolant(self) -> CubicHermiteSpline:
        return CubicHermiteSpline(self.r, self.u, self.du)

    def u_at(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        inside = np.minimum(r, self.support_radius)
        out = self.interpolant()(inside)
        return np.where(r > self.support_radius, r - self.a, out)

    def f_at(self, r) -> np.ndarray:
        """``1 - φ(r) = u(r) / r`` with the ``r -> 0`` limit ``u'(0)``."""
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = self.u_at(r) / r
        return np.where(r == 0.0, self.du[0], val)


def _rk4_piece(vals: np.ndarray, h: float, u: float, du: float):
    """Classical RK4 for (u, u') on a uniform grid; ``vals`` holds V/2 at
    the points ``r0, r0+h/2, r0+h, ...`` (length ``2n+1``)."""
    n = (len(vals) - 1) // 2
    us = np.empty(n + 1)
    dus = np.empty(n + 1)
    us[0], dus[0] = u, du
    scale = 0.0
    for k in range(n):
        w0, wm, w1 = vals[2 * k], vals[2 * k + 1], vals[2 * k + 2]
        k1u, k1v = du, w0 * u
        k2u, k2v = du + 0.5 * h * k1v, wm * (u + 0.5 * h * k1u)
        k3u, k3v = du + 0.5 * h * k2v, wm * (u + 0.5 * h * k2u)
        k4u, k4v = du + h * k3v, w1 * (u + h * k3u)
        u = u + h / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u)
        du = du + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        if abs(u) > 1e200:
            # linear ODE: rescaling preserves every log-derivative
            us[: k + 1] *= 1e-200
            dus[: k + 1] *= 1e-200
            u *= 1e-200
            du *= 1e-200
            scale += 200.0
        us[k + 1], dus[k + 1] = u, du
    return us, dus


def _integrate(potential: RadialPotential, base_h: float):
    nodes = potential.nodes()
    rs, us, dus = [np.array([0.0])], [np.array([0.0])], [np.array([1.0])]
    u, du = 0.0, 1.0
    n_steps = 0
    for lo, hi in zip(nodes[:-1], nodes[1:]):
        n = max(int(math.ceil((hi - lo) / base_h)), 4)
        h = (hi - lo) / n
        grid = lo + 0.5 * h * np.arange(2 * n + 1)
        grid[-1] = hi
        # sample just inside the piece so jumps at its ends are not seen
        eps = 1e-12 * max(hi, 1.0)
        vals = 0.5 * potential(np.clip(grid, lo + eps, hi - eps))
        pu, pdu = _rk4_piece(vals, h, u, du)
        ratio = 1.0
        if abs(pu[-1]) > 1e100:
            ratio = 1.0 / abs(pu[-1])
            for arr in (us, dus):
                for i, seg in enumerate(arr):
                    arr[i] = seg * ratio
            pu, pdu = pu * ratio, pdu * ratio
        rs.append(grid[::2][1:])
        us.append(pu[1:])
        dus.append(pdu[1:])
        u, du = pu[-1], pdu[-1]
        n_steps += n
    return np.concatenate(rs), np.concatenate(us), np.concatenate(dus), n_steps


def solve_zero_energy(potential: RadialPotential, r_max: float | None = None,
                      tol: float = 1e-10, max_refinements: int = 12) -> ScatteringSolution:
    """Shoot ``u'' = V u / 2`` outward from ``u(0)=0, u'(0)=1``.

    The RK4 step is halved until the extracted scattering length changes by
    less than ``tol`` (relative to the support radius).
    """
    R0 = potential.support_radius
    if r_max is None:
        r_max = 2.0 * R0
    if not r_max > R0:
        raise PotentialError("matching radius must exceed the support radius")
    potential.validate()

    h = R0 / 64.0
    prev = None
    for level in range(max_refinements):
        r, u, du, n_steps = _integrate(potential, h)
        if du[-1] == 0.0 or not math.isfinite(du[-1]):
            raise DegenerateSolutionError("u'(R0) vanishes: zero-energy resonance")
        # free region: u is exactly affine, so propagate analytically to r_max
        u_max = u[-1] + du[-1] * (r_max - R0)
        a = r_max - u_max / du[-1]
        a_support = R0 - u[-1] / du[-1]
        if prev is not None and abs(a - prev) <= tol * R0:
            break
        prev = a
        h *= 0.5
    change = abs(a - prev) if prev is not None else math.inf
    c = du[-1]
    r_out = np.append(r, r_max)
    u_out = np.append(u / c, (u_max) / c)
    du_out = np.append(du / c, 1.0)
    residual = max(change, abs(a - a_support)) / R0
    if potential.is_zero:
        a, residual = 0.0, 0.0
    return ScatteringSolution(a=float(a), r=r_out, u=u_out, du=du_out,
                              match_radius=float(r_max), support_radius=R0,
                              residual=float(residual), n_steps=n_steps)


def square_barrier_length(R0: float, V0: float) -> float:
    """Closed form ``a = R0 - tanh(κ R0)/κ`` with ``κ = sqrt(V0/2)``."""
    if V0 == 0:
        return 0.0
    kappa = math.sqrt(V0 / 2.0)
    return R0 - math.tanh(kappa * R0) / kappa


# ---------------------------------------------------------------------------
# Fourier data


@functools.lru_cache(maxsize=64)
def _leggauss(n: int):
    return np.polynomial.legendre.leggauss(n)


def _gl_nodes(potential: RadialPotential, n_per_piece: int):
    x, w = _leggauss(n_per_piece)
    nodes = potential.nodes()
    rs, ws = [], []
    for lo, hi in zip(nodes[:-1], nodes[1:]):
        rs.append(0.5 * (hi - lo) * x + 0.5 * (hi + lo))
        ws.append(0.5 * (hi - lo) * w)
    return np.concatenate(rs), np.concatenate(ws)


def fourier_vf(sol: ScatteringSolution, potential: RadialPotential, p) -> np.ndarray:
    """``F(V f)(p) = (2π)^-3 ∫ V(x) f(x) e^{-ip·x} dx`` for ``p > 0`` (vectorized)."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if np.any(p <= 0):
        raise ValueError("momentum must be positive; use sum_rule_check at p = 0")
    if potential.is_zero:
        return np.zeros_like(p)
    pr_max = float(p.max()) * potential.support_radius
    n = int(min(64 + 2 * math.ceil(pr_max), 4000))
    r, w = _gl_nodes(potential, n)
    vu = potential(r) * sol.u_at(r) * w
    out = np.empty_like(p)
    for i in range(0, len(p), 512):
        blk = p[i:i + 512]
        out[i:i + 512] = np.sin(np.outer(blk, r)) @ vu / blk
    return 4.0 * math.pi * out / TWO_PI_CUBED


def phi_hat(sol: ScatteringSolution, potential: RadialPotential, p):
    """``F(φ_∞)(p) = F(V f)(p) / (2 p^2)``; scalar in, scalar out."""
    scalar = np.ndim(p) == 0
    p_arr = np.atleast_1d(np.asarray(p, dtype=float))
    val = fourier_vf(sol, potential, p_arr) / (2.0 * p_arr**2)
    return float(val[0]) if scalar else val


def sum_rule_integral(sol: ScatteringSolution, potential: RadialPotential,
                      n_per_piece: int = 200) -> float:
    """``∫ V (1 - φ) dx`` by Gauss-Legendre quadrature of ``4π ∫ V u r dr``."""
    if potential.is_zero:
        return 0.0
    r, w = _gl_nodes(potential, n_per_piece)
    return float(4.0 * math.pi * np.sum(potential(r) * sol.u_at(r) * r * w))


def sum_rule_check(sol: ScatteringSolution, potential: RadialPotential) -> float:
    """Relative mismatch ``|∫V f - 8πa| / (8πa)``; absolute when ``a == 0``."""
    lhs = sum_rule_integral(sol, potential)
    rhs = 8.0 * math.pi * sol.a
    if rhs == 0.0:
        return abs(lhs)
    return abs(lhs - rhs) / abs(rhs)


def potential_from_config(kind: str, R0: float | None = None, V0: float | None = None,
                          table: str | None = None) -> RadialPotential:
    kind = kind.strip().lower()
    if kind in ("square", "square-barrier"):
        return square_barrier(float(R0), float(V0))
    if kind in ("smooth", "bump", "smooth-bump"):
        return smooth_bump(float(R0), float(V0))
    if kind == "zero":
        return zero_potential(float(R0 or 1.0))
    if kind in ("table", "tabulated"):
        if table is None:
            raise PotentialError("tabulated potential needs a CSV table path")
        return load_potential_csv(table)
    raise PotentialError(f"unknown potential kind {kind!r}")


def phi_hat_function(sol: ScatteringSolution, potential: RadialPotential):
    """Vectorized ``|p| -> φ̂(p)`` closure for the lattice sums."""
    def f(p):
        p = np.asarray(p, dtype=float)
        flat = p.ravel()
        out = np.zeros(flat.shape)
        pos = flat > 0
        if pos.any():
            out[pos] = phi_hat(sol, potential, flat[pos])
        return out.reshape(p.shape)
    return f
