"""Finite-volume momentum sums on ``(2π/L) Z^3``.

Momenta are integer triples ``n`` with physical value ``(2π/L) n``.  For a
fixed transfer ``p = (2π/L) m`` the energy differences are integers in these
units,

    |n + m|^2 - |n|^2 = 2 n·m + |m|^2,

so the sums over ``r`` and ``r'`` collapse to histograms over those integers
and the pair sum becomes a discrete convolution evaluated exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .continuum import belyakov_prefactor, prefactor_from_coupling, regularized_constant
from .engine import RunBudget
from .system import FermiSystem, SmearingSpec


class LatticeResourceError(RuntimeError):
    """Enumeration or summation would exceed the configured cap."""


DEFAULT_POINT_CAP = 50_000_000
DEFAULT_OP_CAP = 5e11


def _ball_triples(radius: float, cap: int = DEFAULT_POINT_CAP) -> np.ndarray:
    """All integer triples with ``|n| <= radius`` (closed ball)."""
    M = int(math.floor(radius + 1e-12))
    if (2 * M + 1) ** 3 > cap:
        raise LatticeResourceError(
            f"enumerating {(2 * M + 1) ** 3} candidate triples exceeds the cap {cap}")
    ax = np.arange(-M, M + 1)
    g = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1).reshape(-1, 3)
    n2 = np.einsum("ij,ij->i", g, g)
    # integer comparison avoids rounding at the boundary
    return g[n2 <= _int_radius_sq(radius)].astype(np.int64)


def _int_radius_sq(radius: float) -> int:
    """Largest integer ``N`` with ``N <= radius^2`` (robust to rounding)."""
    r2 = radius * radius
    N = int(math.floor(r2))
    if N + 1 <= r2 * (1 + 1e-14):
        N += 1
    return N


@dataclass(frozen=True)
class Lattice:
    """Fermi balls on the dual lattice of a box of side ``L``.

    ``ball_up`` / ``ball_down`` are integer triples; occupation uses the
    closed ball ``|k| <= k_F``.
    """

    L: float
    kF_up: float
    kF_down: float
    ball_up: np.ndarray = field(repr=False)
    ball_down: np.ndarray = field(repr=False)

    @property
    def spacing(self) -> float:
        return 2.0 * math.pi / self.L

    @property
    def N_up(self) -> int:
        return len(self.ball_up)

    @property
    def N_down(self) -> int:
        return len(self.ball_down)

    def ball(self, sigma: str) -> np.ndarray:
        return self.ball_up if sigma == "up" else self.ball_down

    def radius_sq(self, sigma: str) -> int:
        kF = self.kF_up if sigma == "up" else self.kF_down
        return _int_radius_sq(kF / self.spacing)

    def momenta(self, sigma: str) -> np.ndarray:
        return self.ball(sigma) * self.spacing


def build_lattice(L: float, system: FermiSystem, cap: int = DEFAULT_POINT_CAP) -> Lattice:
    """Enumerate both Fermi balls of ``system`` in a box of side ``L``."""
    if not L > 0:
        raise ValueError("box side must be positive")
    h = 2.0 * math.pi / L
    return Lattice(float(L), system.kF_up, system.kF_down,
                   _ball_triples(system.kF_up / h, cap), _ball_triples(system.kF_down / h, cap))


# ---------------------------------------------------------------------------
# symmetry reduction of the transfer momentum


def _is_cubic_invariant(g: SmearingSpec) -> bool:
    return g.is_zero or g.q_norm == 0.0


def _p_orbits(M: int, radius_sq: int, reduce: bool) -> tuple[np.ndarray, np.ndarray]:
    """Nonzero ``m`` with ``|m|^2 <= radius_sq`` and their multiplicities.

    With ``reduce`` only ``m_1 >= m_2 >= m_3 >= 0`` representatives are kept,
    weighted by the orbit size under the cubic group.
    """
    ax = np.arange(-M, M + 1)
    g = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1).reshape(-1, 3)
    n2 = np.einsum("ij,ij->i", g, g)
    g = g[(n2 <= radius_sq) & (n2 > 0)]
    if not reduce:
        return g.astype(np.int64), np.ones(len(g), dtype=np.int64)
    a = np.sort(np.abs(g), axis=1)[:, ::-1]
    keys, counts = np.unique(a, axis=0, return_counts=True)
    return keys.astype(np.int64), counts.astype(np.int64)


# ---------------------------------------------------------------------------
# per-transfer histograms


@dataclass
class _Side:
    """Lens ``{n in ball : |n ± m|^2 > R^2}`` binned by its energy difference."""

    counts: np.ndarray
    weights: tuple[np.ndarray, ...]


def _lens_hist(ball: np.ndarray, m: np.ndarray, R2: int, sign: int, gfuns, h: float) -> _Side:
    shifted = ball + sign * m
    s2 = np.einsum("ij,ij->i", shifted, shifted)
    keep = s2 > R2
    n2 = np.einsum("ij,ij->i", ball, ball)
    E = (s2 - n2)[keep]
    size = int(E.max()) + 1 if E.size else 1
    counts = np.bincount(E, minlength=size).astype(float)
    ws = []
    for fn in gfuns:
        vals = fn(ball[keep] * h, shifted[keep] * h)
        ws.append(np.bincount(E, weights=vals, minlength=size))
    return _Side(counts, tuple(ws))


def _g_terms(g: SmearingSpec):
    """Smearing evaluated for the two numerator terms on one side."""
    return (lambda k, kp: g(kp), lambda k, kp: g(-k))


def _convolve_weighted(a: np.ndarray, b: np.ndarray, f: np.ndarray) -> float:
    c = np.convolve(a, b)
    return float(np.dot(c, f[: c.size]))


@dataclass(frozen=True)
class LatticeSum:
    """Value of a lattice constant with bookkeeping."""

    value: float
    terms: tuple[float, ...] = ()
    n_transfers: int = 0
    flags: tuple[str, ...] = ()

    def normalized(self, scale: float) -> float:
        return self.value / scale


def _estimate_ops(lat: Lattice, M: int, n_p: int) -> float:
    nu = lat.kF_up / lat.spacing
    nd = lat.kF_down / lat.spacing
    la = (nu + M) ** 2
    lb = (nd + M) ** 2
    return n_p * (la * lb + (len(lat.ball_up) + len(lat.ball_down)) * 8)


def discrete_B2_constant(lattice: Lattice, system: FermiSystem, g: SmearingSpec,
                         op_cap: float = DEFAULT_OP_CAP, use_symmetry: bool = True,
                         epsilon: float | None = None, use_cutoff: bool = True) -> LatticeSum:
    """Duhamel-weighted constant of the low-momentum double commutator.

    ``(2π)^3/L^9 Σ_p Σ_r Σ_r' [ĝ(r+p) + ĝ(-r) + ĝ(r'-p) + ĝ(-r')] (η χ_<(p))^2``
    over ``r`` in the up ball with ``r + p`` outside, ``r'`` in the down ball
    with ``r' - p`` outside.  The factor 1/2 from ``∫_0^1 (1 - λ) dλ`` is
    already included, so the result tends to ``C_g``.

    ``use_cutoff=False`` replaces ``χ_<`` by the indicator of ``|p| <= hi``.
    """
    if system.a == 0.0 or g.is_zero:
        return LatticeSum(0.0, (0.0, 0.0, 0.0, 0.0), 0, ("trivially-zero",))
    h = lattice.spacing
    cut = system.cutoffs()
    eps = system.epsilon if epsilon is None else float(epsilon)
    M = int(math.floor(cut.hi / h))
    reduce = use_symmetry and _is_cubic_invariant(g)
    ms, mult = _p_orbits(M, _int_radius_sq(cut.hi / h) if M else 0, reduce)
    if ms.size == 0:
        return LatticeSum(0.0, (0.0, 0.0, 0.0, 0.0), 0, ("no-transfers",))
    ops = _estimate_ops(lattice, M, len(ms))
    if ops > op_cap:
        raise LatticeResourceError(f"B2 sum needs about {ops:.3g} operations (cap {op_cap:.3g})")

    R2u, R2d = lattice.radius_sq("up"), lattice.radius_sq("down")
    coupling = (8.0 * math.pi * system.a) ** 2
    gt = _g_terms(g)
    gt_prime = (lambda k, kp: g(kp), lambda k, kp: g(-k))  # ĝ(r'-p), ĝ(-r')
    per_term = [[], [], [], []]
    for m, w in zip(ms, mult):
        pn = h * math.sqrt(float(m @ m))
        chi = float(cut.less_radial(pn)) if use_cutoff else 1.0
        if chi == 0.0:
            continue
        A = _lens_hist(lattice.ball_up, m, R2u, +1, gt, h)
        B = _lens_hist(lattice.ball_down, m, R2d, -1, gt_prime, h)
        size = A.counts.size + B.counts.size
        C = np.arange(size)
        f = coupling * chi**2 / (h * h * C + 2.0 * eps) ** 2
        if eps == 0.0:
            f[0] = 0.0  # C = 0 never occurs with nonzero weight
        vals = (_convolve_weighted(A.weights[0], B.counts, f),
                _convolve_weighted(A.weights[1], B.counts, f),
                _convolve_weighted(A.counts, B.weights[0], f),
                _convolve_weighted(A.counts, B.weights[1], f))
        for t, v in zip(per_term, vals):
            t.append(w * v)
    norm = (2.0 * math.pi) ** 3 / lattice.L**9
    terms = tuple(norm * math.fsum(t) for t in per_term)
    return LatticeSum(math.fsum(terms), terms, len(ms), ("cubic-reduced",) if reduce else ())


def discrete_B1_constant(lattice: Lattice, system: FermiSystem, g: SmearingSpec, phi_hat,
                         far_momentum: float = 20.0, force_zero_greater: bool = False,
                         include_tail: bool = True, use_symmetry: bool = True) -> LatticeSum:
    """High-momentum constant ``(1/L^6) Σ [ĝ(r+p) + ĝ(-r)] |φ̂(p)|^2 χ_>(p)^2 û v̂ û v̂``.

    The ``r'`` sum is the lens count, so each transfer contributes
    ``S_1(p) S_2(p)``.  Beyond ``|p| > 2 max(k_F)`` both factors are constant
    and the remaining lattice sum of ``|φ̂|^2 χ_>^2`` is taken over integer
    shells ``|m|^2 = N`` with exact representation counts up to
    ``|p| <= far_momentum`` (at least ``8 hi``); the shells beyond are
    replaced by the integral ``(L/2π)^3 ∫ |φ̂|^2 dp`` and flagged.
    With ``include_tail=False`` the sum stops exactly at ``|p| <= far_momentum``.

    ``phi_hat`` is a vectorized callable ``|p| -> φ̂(p)``.
    """
    if system.a == 0.0 or g.is_zero or force_zero_greater:
        return LatticeSum(0.0, (0.0, 0.0), 0, ("trivially-zero",))
    h = lattice.spacing
    cut = system.cutoffs()
    kmax = max(lattice.kF_up, lattice.kF_down)
    # beyond P_near every r + p and r' - p is unoccupied and r + p misses supp ĝ
    P_near = max(2.0 * kmax, kmax + g.q_norm + g.radius, cut.lo) + 2.0 * h
    M_near = int(math.ceil(P_near / h))
    R2u, R2d = lattice.radius_sq("up"), lattice.radius_sq("down")
    reduce = use_symmetry and _is_cubic_invariant(g)
    ms, mult = _p_orbits(M_near, M_near * M_near, reduce)
    ball_u, ball_d = lattice.ball_up, lattice.ball_down
    g_minus_r = g(-ball_u * h)

    phi = _as_vectorized(phi_hat)
    pn = h * np.sqrt(np.einsum("ij,ij->i", ms, ms).astype(float))
    weight = mult * phi(pn) ** 2 * cut.greater_radial(pn) ** 2
    t1, t2 = [], []
    for m, wp in zip(ms, weight):
        if wp == 0.0:
            continue
        su = ball_u + m
        out_u = np.einsum("ij,ij->i", su, su) > R2u
        sd = ball_d - m
        S2 = int(np.count_nonzero(np.einsum("ij,ij->i", sd, sd) > R2d))
        if S2 == 0 or not out_u.any():
            continue
        t1.append(wp * S2 * float(np.sum(g(su[out_u] * h))))
        t2.append(wp * S2 * float(np.sum(g_minus_r[out_u])))

    # far shells |m|^2 = N: exact representation counts up to P_far, then the
    # integral; only the ĝ(-r) term survives there
    N_near = M_near * M_near
    if include_tail:
        M_far = max(int(math.ceil(max(8.0 * cut.hi, far_momentum) / h)), M_near + 1)
    else:
        M_far = max(int(math.floor(far_momentum / h)), M_near)
    shells = np.arange(N_near + 1, M_far * M_far + 1)
    r3 = _shell_counts(M_far)[N_near + 1:]
    shell_p = h * np.sqrt(shells.astype(float))
    shell_w = phi(shell_p) ** 2 * cut.greater_radial(shell_p) ** 2
    far_sum = math.fsum((r3 * shell_w).tolist())
    tail = _phi_tail_integral(phi, h * M_far) / h**3 if include_tail else 0.0
    far = (far_sum + tail) * len(ball_d) * float(np.sum(g_minus_r))
    norm = 1.0 / lattice.L**6
    terms = (norm * math.fsum(t1), norm * (math.fsum(t2) + far))
    flags = ("far-shell-tail-by-integral",) if include_tail else ()
    if reduce:
        flags += ("cubic-reduced",)
    return LatticeSum(math.fsum(terms), terms, len(ms), flags)


def _as_vectorized(phi_hat):
    def f(p):
        p = np.asarray(p, dtype=float)
        out = phi_hat(p)
        return np.asarray(out, dtype=float).reshape(p.shape)
    return f


_SHELL_CACHE: dict[int, np.ndarray] = {}


def _shell_counts(M: int) -> np.ndarray:
    """``r_3(N)`` for ``N <= M^2``: number of integer triples with ``|n|^2 = N``."""
    if M in _SHELL_CACHE:
        return _SHELL_CACHE[M]
    size = M * M + 1
    counts = np.zeros(size, dtype=np.int64)
    ax = np.arange(-M, M + 1)
    sq = ax * ax
    for a in sq:
        bc = (a + sq[:, None] + sq[None, :]).ravel()
        bc = bc[bc < size]
        counts += np.bincount(bc, minlength=size)
    _SHELL_CACHE[M] = counts
    return counts


def _phi_tail_integral(phi, P0: float, span: float = 40.0) -> float:
    """``∫_{P0 < |p| < span P0} |φ̂(p)|^2 dp`` by Gauss-Legendre in ``u = P0/|p|``.

    ``|φ̂|^2`` decays at least like ``|p|^-4``, so the part beyond
    ``span P0`` is below ``1/span`` of the tail and is dropped.
    """
    from .reduction import tail_rule
    P, w = tail_rule(P0, n_sub=16)
    keep = P <= span * P0
    P, w = P[keep], w[keep]
    return float(np.dot(4.0 * math.pi * P * P * phi(P) ** 2, w))


def discrete_B1B2_constant(lattice: Lattice, system: FermiSystem, g: SmearingSpec,
                           phi_hat, use_symmetry: bool = True) -> LatticeSum:
    """Mixed constant with weight ``φ̂(p) η(r, r', p) χ_>(p) χ_<(p)``.

    Only transfers in the ramp ``lo < |p| < hi`` contribute; a lattice with
    no point there gives 0 with the flag ``band-empty``.
    """
    if system.a == 0.0 or g.is_zero:
        return LatticeSum(0.0, (0.0, 0.0), 0, ("trivially-zero",))
    h = lattice.spacing
    cut = system.cutoffs()
    M = int(math.floor(cut.hi / h))
    reduce = use_symmetry and _is_cubic_invariant(g)
    ms, mult = _p_orbits(M, _int_radius_sq(cut.hi / h), reduce)
    pn = h * np.sqrt(np.einsum("ij,ij->i", ms, ms).astype(float)) if len(ms) else np.zeros(0)
    band = (cut.greater_radial(pn) * cut.less_radial(pn)) > 0.0
    if not band.any():
        return LatticeSum(0.0, (0.0, 0.0), 0, ("band-empty",))
    ms, pn, mult = ms[band], pn[band], np.asarray(mult)[band]
    phi = _as_vectorized(phi_hat)
    R2u, R2d = lattice.radius_sq("up"), lattice.radius_sq("down")
    eps = system.epsilon
    coupling = 8.0 * math.pi * system.a
    gt = _g_terms(g)
    t1, t2 = [], []
    for m, p_abs, w in zip(ms, pn, mult):
        wp = w * float(phi(np.array(p_abs))) * float(cut.greater_radial(p_abs) * cut.less_radial(p_abs))
        A = _lens_hist(lattice.ball_up, m, R2u, +1, gt, h)
        B = _lens_hist(lattice.ball_down, m, R2d, -1, (), h)
        C = np.arange(A.counts.size + B.counts.size)
        f = coupling / (h * h * C + 2.0 * eps)
        if eps == 0.0:
            f[0] = 0.0
        t1.append(wp * _convolve_weighted(A.weights[0], B.counts, f))
        t2.append(wp * _convolve_weighted(A.weights[1], B.counts, f))
    norm = 1.0 / lattice.L**6
    terms = (norm * math.fsum(t1), norm * math.fsum(t2))
    return LatticeSum(math.fsum(terms), terms, len(ms), ("cubic-reduced",) if reduce else ())


# ---------------------------------------------------------------------------
# thermodynamic limit


def normalization_identity(a: float) -> tuple[float, float, float]:
    """``(8πa)^2/(2π)^6``, ``a^2/π^4`` and their relative difference."""
    x = prefactor_from_coupling(a)
    y = belyakov_prefactor(a)
    return x, y, (abs(x - y) / abs(y) if y else 0.0)


@dataclass
class ConvergenceRow:
    L: float
    N_up: int
    N_down: int
    value: float
    continuum: float
    continuum_err: float
    error: str = ""

    @property
    def rel_gap(self) -> float:
        return abs(self.value - self.continuum) / abs(self.continuum) if self.continuum else 0.0


@dataclass
class ConvergenceTable:
    rows: list[ConvergenceRow]
    identity: tuple[float, float, float]
    threshold: float

    @property
    def gaps(self) -> list[float]:
        return [r.rel_gap for r in self.rows if not r.error]

    @property
    def decreasing(self) -> bool:
        """Gap decreases along ``L``, allowing one non-monotone step."""
        g = self.gaps
        ups = sum(1 for a, b in zip(g[:-1], g[1:]) if b > a)
        return ups <= 1

    @property
    def strictly_decreasing(self) -> bool:
        g = self.gaps
        return all(b < a for a, b in zip(g[:-1], g[1:]))

    @property
    def final_gap(self) -> float:
        return self.gaps[-1] if self.gaps else math.inf

    @property
    def passed(self) -> bool:
        return self.decreasing and self.final_gap < self.threshold


def thermodynamic_convergence(system: FermiSystem, g: SmearingSpec, L_list,
                              budget: RunBudget | int | None = None, seed: int = 0,
                              threshold: float = 0.10, continuum=None,
                              cap: int = DEFAULT_POINT_CAP) -> ConvergenceTable:
    """Discrete B2 constant along ``L_list`` against the continuum ``C_g``.

    ``continuum`` may supply a precomputed :class:`IntegralEstimate`;
    otherwise ``C_g`` is estimated by Monte Carlo.
    """
    L_list = list(L_list)
    if any(b <= a for a, b in zip(L_list[:-1], L_list[1:])):
        raise ValueError("L_list must be strictly increasing")
    cg = continuum if continuum is not None else regularized_constant(system, g, budget, seed)
    rows = []
    for L in L_list:
        try:
            lat = build_lattice(L, system, cap)
            val = discrete_B2_constant(lat, system, g).value
            rows.append(ConvergenceRow(L, lat.N_up, lat.N_down, val, cg.value, cg.std_error))
        except LatticeResourceError as exc:
            rows.append(ConvergenceRow(L, 0, 0, math.nan, cg.value, cg.std_error, str(exc)))
    return ConvergenceTable(rows, normalization_identity(system.a or 1.0), threshold)
