"""Continuum formulas: Huang-Yang energy, Belyakov's integral, the regularized constant.

Every momentum integral here has the shape

    (a^2/π^4) ∫dp ∫_{lune_k(p)} dr ∫_{lune_k'(-p)} dr' N / (D + 2ε)^2

with a numerator ``N`` made of smearing values.  The ``r'`` integral never
meets the smearing and is done in closed form (:func:`reduction.lune_moment`);
what remains is sampled.  Substituting ``s = r + p`` (particle term) or using
``-r`` in the smearing support (hole term) restricts the sampling to the
support of ``ĝ``, which is where the integrand lives.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import reduction as red
from .engine import IntegralEstimate, RunBudget, SamplerSpec, estimate_draws, exact_estimate
from .system import FermiSystem, SmearingSpec, other_spin

HY_FREE = 3.0 / 5.0 * (3.0 * math.pi**2) ** (2.0 / 3.0)
HY_FIRST = 2.0 * math.pi
HY_SECOND = 4.0 / 35.0 * (11.0 - 2.0 * math.log(2.0)) * (9.0 * math.pi) ** (2.0 / 3.0)

BEL_EXPONENT = 5.0 / 3.0 + 1.0 / 9.0


# ---------------------------------------------------------------------------
# Huang-Yang


@dataclass(frozen=True)
class HuangYang:
    rho: float
    a: float
    free: float
    first: float
    second: float

    @property
    def total(self) -> float:
        return self.free + self.first + self.second


def huang_yang_energy(rho: float, a: float) -> HuangYang:
    """Energy density of the dilute spin-1/2 gas to second order in ``a``."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    return HuangYang(rho, a,
                     HY_FREE * rho ** (5.0 / 3.0),
                     HY_FIRST * a * rho**2,
                     HY_SECOND * a * a * rho ** (7.0 / 3.0))


def belyakov_prefactor(a: float) -> float:
    """``a^2 / π^4``."""
    return a * a / math.pi**4


def prefactor_from_coupling(a: float) -> float:
    """The same constant written as ``(8πa)^2 / (2π)^6``."""
    return (8.0 * math.pi * a) ** 2 / (2.0 * math.pi) ** 6


# ---------------------------------------------------------------------------
# smearing geometry


def shell_measure(g: SmearingSpec, Q) -> np.ndarray:
    """``G(Q) = ∫ dΩ ĝ(Q n)`` over the unit sphere."""
    Q = np.asarray(Q, dtype=float)
    c, R = g.q_norm, g.radius
    if g.is_zero:
        return np.zeros(Q.shape)
    if g.kind == "ball":
        if c == 0.0:
            return np.where(Q <= R, 4.0 * math.pi, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            mu = (Q * Q + c * c - R * R) / (2.0 * Q * c)
        mu = np.where(Q > 0, mu, np.where(c <= R, -np.inf, np.inf))
        return 2.0 * math.pi * (1.0 - np.clip(mu, -1.0, 1.0))
    # radial profile h(|k - q|)
    if c == 0.0:
        return 4.0 * math.pi * np.where(Q <= R, np.asarray(g.profile(np.minimum(Q, R)), float), 0.0)
    out = np.zeros(Q.shape)
    flat_Q, flat_out = Q.ravel(), out.ravel()
    for i, qi in enumerate(flat_Q):
        lo, hi = abs(qi - c), min(qi + c, R)
        if hi <= lo or qi == 0:
            continue
        d, w = red.gl_rule([lo, hi])
        flat_out[i] = 2.0 * math.pi / (qi * c) * float(np.dot(np.asarray(g.profile(d), float) * d, w))
    return flat_out.reshape(Q.shape)


def _radial_nodes(g: SmearingSpec, k: float, inside: bool):
    """Quadrature nodes in ``Q = |s|`` over the support, split at the Fermi sphere."""
    c, R = g.q_norm, g.radius
    lo, hi = max(c - R, 0.0), c + R
    if inside:
        lo, hi = lo, min(hi, k)
    else:
        lo, hi = max(lo, k), hi
    if hi <= lo:
        return np.zeros(0), np.zeros(0)
    brk = [lo, hi] + [b for b in (abs(R - c),) if lo < b < hi]
    return red.gl_rule(brk, n_sub=1)


def _hole_sampler(g: SmearingSpec, k: float) -> SamplerSpec | None:
    """Domain for ``r`` with ``|r| <= k`` and ``-r`` in the support."""
    c, R = g.q_norm, g.radius
    if g.is_zero or c - R >= k:
        return None
    if R <= k:
        return SamplerSpec("ball", tuple(-g.q), R)
    return SamplerSpec("ball", (0.0, 0.0, 0.0), k)


def _particle_sampler(g: SmearingSpec, k: float) -> SamplerSpec | None:
    """Domain for ``s`` in the support with ``|s| > k``."""
    c, R = g.q_norm, g.radius
    if g.is_zero or c + R <= k:
        return None
    return SamplerSpec("ball-minus-ball", tuple(g.q), R, center2=(0.0, 0.0, 0.0), radius2=k)


# ---------------------------------------------------------------------------
# the two-term spin-resolved integral


def _two_term_draw(g: SmearingSpec, k: float, k_other: float, kernel_factory):
    """Draw function for ``∫ [ĝ(r+p) + ĝ(-r)] K`` in reduced form.

    ``kernel_factory()`` returns ``kernel(A, P)`` for the closed-form second
    lune.  Returns ``(draw, flags)``.
    """
    hole = _hole_sampler(g, k)
    part = _particle_sampler(g, k)
    flags = []
    if hole is None:
        flags.append("hole-domain-empty")
    if part is None:
        flags.append("particle-domain-empty")
    kernel = kernel_factory()

    def draw(rng, n):
        out = np.zeros(n)
        if hole is not None:
            r, w = hole.sample(rng, n)
            rn = np.linalg.norm(r, axis=1)
            gv = g(-r) * (rn <= k)
            out += gv * w * red.hole_values(rng, np.minimum(rn, k), k, k_other, kernel=kernel)
        if part is not None:
            s, w = part.sample(rng, n)
            out += g(s) * w * red.particle_values(rng, s, k, k_other, kernel=kernel)
        return out

    return draw, tuple(flags), hole is None and part is None


def _plain_two_term_draw(g: SmearingSpec, k: float, k_other: float, shift=0.0, cutoff=None,
                         p_core=None):
    """Literal constrained uniform sampler over ``(r, r', p)`` (oracle only)."""
    hole = _hole_sampler(g, k)
    part = _particle_sampler(g, k)
    fermi = SamplerSpec("ball", radius=k)
    other = SamplerSpec("ball", radius=k_other)
    space = SamplerSpec("space", radius=p_core or 2.0 * (k + k_other))

    def sq(v):
        return np.einsum("ij,ij->i", v, v)

    def weight(p):
        return 1.0 if cutoff is None else cutoff(np.linalg.norm(p, axis=1))

    def draw(rng, n):
        out = np.zeros(n)
        if part is not None:
            s, ws = part.sample(rng, n)
            r, wr = fermi.sample(rng, n)
            rp, wrp = other.sample(rng, n)
            p = s - r
            rmp = rp - p
            ok = sq(rmp) > k_other**2
            D = sq(s) - sq(r) + sq(rmp) - sq(rp) + shift
            out += np.where(ok, g(s) * ws * wr * wrp * weight(p) / np.where(ok, D, 1.0) ** 2, 0.0)
        if hole is not None:
            r, wr = hole.sample(rng, n)
            rp, wrp = other.sample(rng, n)
            p, wp = space.sample(rng, n)
            rpp, rmp = r + p, rp - p
            ok = (sq(r) <= k * k) & (sq(rpp) > k * k) & (sq(rmp) > k_other**2)
            D = sq(rpp) - sq(r) + sq(rmp) - sq(rp) + shift
            out += np.where(ok, g(-r) * wr * wrp * wp * weight(p) / np.where(ok, D, 1.0) ** 2, 0.0)
        return out

    return draw


def _kernel(k_other: float, shift: float = 0.0, cutoff=None):
    def factory():
        def kern(A, P):
            return red.pair_kernel(A, P, k_other, 2, shift, cutoff)
        return kern
    return factory


def _two_term_quadrature(g, k, k_other, shift=0.0, cutoff=None) -> float:
    total = 0.0
    for inside, fn in ((True, red.hole_quadrature), (False, red.particle_quadrature)):
        Q, w = _radial_nodes(g, k, inside)
        if Q.size == 0:
            continue
        G = shell_measure(g, Q)
        T = np.array([fn(qi, k, k_other, 2, shift, cutoff) if gi > 0 else 0.0
                      for qi, gi in zip(Q, G)])
        total += float(np.dot(Q * Q * G * T, w))
    return total


def belyakov_density(system: FermiSystem, g: SmearingSpec, sigma: str | None = None,
                     budget: RunBudget | int | None = None, seed: int = 0,
                     method: str = "mc-importance") -> IntegralEstimate:
    """Belyakov's spin-resolved smeared excitation density ``n^(Bel)_{g,σ}``.

    Parameters
    ----------
    sigma : {"up", "down"}, optional
        Spin of the Fermi ball carrying ``r``; defaults to ``g.sigma``.
    method : {"mc-importance", "mc-uniform", "quadrature"}
        ``mc-uniform`` is the literal constrained sampler over ``(r, r', p)``;
        its variance is only finite when the smearing stays away from the
        Fermi sphere.
    """
    sigma = sigma or g.sigma
    k, k_other = system.kF(sigma), system.kF(other_spin(sigma))
    pref = belyakov_prefactor(system.a)
    if g.is_zero or system.a == 0.0:
        return exact_estimate(0.0, seed=seed, flags=("trivially-zero",))
    if method == "quadrature":
        val = pref * _two_term_quadrature(g, k, k_other)
        return IntegralEstimate(val, 0.0, 0, "quadrature", seed)
    if method == "mc-uniform":
        est = estimate_draws(_plain_two_term_draw(g, k, k_other), budget, seed, "mc-uniform", (71,))
        return _with_note(est.scaled(pref), "p sampled on all of R^3, no truncation")
    draw, flags, empty = _two_term_draw(g, k, k_other, _kernel(k_other))
    if empty:
        return exact_estimate(0.0, seed=seed, flags=flags)
    est = estimate_draws(draw, budget, seed, "mc-importance", (70, _spin_index(sigma)))
    return _with_flags(est.scaled(pref), flags)


def _spin_index(sigma):
    return 0 if sigma == "up" else 1


def _with_flags(est: IntegralEstimate, flags) -> IntegralEstimate:
    return replace(est, flags=tuple(est.flags) + tuple(flags))


def _with_note(est: IntegralEstimate, note: str) -> IntegralEstimate:
    return replace(est, truncation_note=note)


# ---------------------------------------------------------------------------
# four-term regularized constant


def _cutoff_sq(system: FermiSystem):
    cut = system.cutoffs()
    return lambda P: cut.less_radial(P) ** 2


def _cartesian_hole_draw(g, k, k_other, shift, cutoff, sign):
    """``ĝ(-r)`` term with ``p`` sampled in Cartesian coordinates.

    ``sign = +1`` is the ``r`` ball (constraint ``|r + p| > k``), ``-1`` the
    ``r'`` ball (``|r' - p| > k``); the other lune is done in closed form.
    """
    hole = _hole_sampler(g, k)
    space = SamplerSpec("space", radius=2.0 * (k + k_other))
    if hole is None:
        return None

    def draw(rng, n):
        r, wr = hole.sample(rng, n)
        p, wp = space.sample(rng, n)
        rn2 = np.einsum("ij,ij->i", r, r)
        shifted = r + sign * p
        A = np.einsum("ij,ij->i", shifted, shifted) - rn2
        ok = (rn2 <= k * k) & (A + rn2 > k * k)
        P = np.linalg.norm(p, axis=1)
        K = red.pair_kernel(np.where(ok, A, 1.0), P, k_other, 2, shift, cutoff)
        return np.where(ok, g(-r) * wr * wp * K, 0.0)

    return draw


def regularized_constant(system: FermiSystem, g: SmearingSpec,
                         budget: RunBudget | int | None = None, seed: int = 0,
                         epsilon: float | None = None, use_cutoff: bool = True,
                         method: str = "mc-importance") -> IntegralEstimate:
    """The regularized constant ``C_g`` with the four-term numerator.

    The spin assignment is fixed: ``r`` lives in the up Fermi ball and
    ``r'`` in the down ball.  ``epsilon=0`` and ``use_cutoff=False`` give the
    unregularized four-term form used for the two-term/four-term identity.
    """
    eps = system.epsilon if epsilon is None else float(epsilon)
    shift = 2.0 * eps
    cutoff = _cutoff_sq(system) if use_cutoff else None
    pref = belyakov_prefactor(system.a)
    if g.is_zero or system.a == 0.0:
        return exact_estimate(0.0, seed=seed, flags=("trivially-zero",))
    k_up, k_dn = system.kF_up, system.kF_down
    if method == "quadrature":
        val = (_two_term_quadrature(g, k_up, k_dn, shift, cutoff)
               + _two_term_quadrature(g, k_dn, k_up, shift, cutoff))
        return IntegralEstimate(pref * val, 0.0, 0, "quadrature", seed)

    parts = []
    for k, k_other, sign in ((k_up, k_dn, +1), (k_dn, k_up, -1)):
        part = _particle_sampler(g, k)
        if part is not None:
            parts.append(("particle", part, k, k_other))
        hd = _cartesian_hole_draw(g, k, k_other, shift, cutoff, sign)
        if hd is not None:
            parts.append(("hole", hd, k, k_other))
    if not parts:
        return exact_estimate(0.0, seed=seed, flags=("domain-empty",))

    def draw(rng, n):
        out = np.zeros(n)
        for kind, obj, k, k_other in parts:
            if kind == "hole":
                out += obj(rng, n)
            else:
                s, w = obj.sample(rng, n)
                out += g(s) * w * red.particle_values(rng, s, k, k_other, 2, shift, cutoff)
        return out

    est = estimate_draws(draw, budget, seed, "mc-importance", (80,))
    return est.scaled(pref)


# ---------------------------------------------------------------------------
# results


@dataclass(frozen=True)
class BelyakovResult:
    """Both spin components, their sum, and the four-term cross-check."""

    up: IntegralEstimate
    down: IntegralEstimate
    four_term: IntegralEstimate

    @property
    def total(self) -> IntegralEstimate:
        return self.up + self.down

    def consistent(self, n_sigma: float = 4.0) -> bool:
        return self.total.agrees_with(self.four_term, n_sigma)


def belyakov_result(system, g, budget=None, seed=0) -> BelyakovResult:
    up = belyakov_density(system, g, "up", budget, seed)
    down = belyakov_density(system, g, "down", budget, seed + 1)
    four = regularized_constant(system, g, budget, seed + 2, epsilon=0.0, use_cutoff=False)
    return BelyakovResult(up, down, four)


@dataclass(frozen=True)
class RegularizationGap:
    gap: IntegralEstimate
    normalizer: float
    flags: tuple[str, ...] = ()

    @property
    def ratio(self) -> float:
        return self.gap.value / self.normalizer if self.normalizer else 0.0

    @property
    def ratio_error(self) -> float:
        return self.gap.std_error / self.normalizer if self.normalizer else 0.0

    @property
    def inconclusive(self) -> bool:
        return "inconclusive" in self.flags


def regularization_gap(system: FermiSystem, g: SmearingSpec,
                       budget: RunBudget | int | None = None, seed: int = 0,
                       epsilon: float | None = None, use_cutoff: bool = True,
                       method: str = "mc-importance") -> RegularizationGap:
    """``|n^(Bel)_g - C_g|`` and its normalization by ``‖ĝ‖_∞ ρ^(5/3 + 1/9)``.

    The difference is sampled directly: both integrals share every sample
    and the integrand is ``W_2(A) - χ_<(P)^2 W_2(A + 2ε)``, which has no
    cancellation problem and a much smaller variance than two independent
    runs.
    """
    norm = g.norm_inf * system.rho**BEL_EXPONENT
    eps = system.epsilon if epsilon is None else float(epsilon)
    shift = 2.0 * eps
    cut = _cutoff_sq(system) if use_cutoff else None
    pref = belyakov_prefactor(system.a)
    if g.is_zero or system.a == 0.0:
        return RegularizationGap(exact_estimate(0.0, seed=seed), norm, ("trivially-zero",))

    if method == "quadrature":
        total = 0.0
        for sigma in ("up", "down"):
            k, ko = system.kF(sigma), system.kF(other_spin(sigma))
            total += _two_term_quadrature(g, k, ko) - _two_term_quadrature(g, k, ko, shift, cut)
        est = IntegralEstimate(abs(pref * total), 0.0, 0, "quadrature", seed)
        return RegularizationGap(est, norm)

    draws = []
    for sigma in ("up", "down"):
        k, ko = system.kF(sigma), system.kF(other_spin(sigma))

        def factory(ko=ko):
            def diff(A, P):
                base = red.lune_moment(A, P, ko, 2)
                reg = red.lune_moment(A + shift, P, ko, 2)
                if cut is not None:
                    reg = reg * cut(P)
                return base - reg
            return diff

        d, _, empty = _two_term_draw(g, k, ko, factory)
        if not empty:
            draws.append(d)
    if not draws:
        return RegularizationGap(exact_estimate(0.0, seed=seed), norm, ("domain-empty",))

    def draw(rng, n):
        return sum(d(rng, n) for d in draws)

    est = estimate_draws(draw, budget, seed, "mc-importance", (90,)).scaled(pref)
    est = replace(est, value=abs(est.value))
    flags = ("inconclusive",) if est.std_error > est.value else ()
    return RegularizationGap(est, norm, flags)


# ---------------------------------------------------------------------------
# sandwich weight and leading order


def sandwich_weight(g: SmearingSpec, kF_sigma: float, budget: RunBudget | int | None = None,
                    seed: int = 0, method: str = "mc-uniform") -> IntegralEstimate:
    """``∫ ĝ(k_F p) / (1 + |p|^4) dp``.

    Written as ``k_F^-3 ∫ ĝ(k) / (1 + |k/k_F|^4) dk`` and sampled uniformly
    on the support of ``ĝ``.  ``method="quadrature"`` uses the radial reduction.
    """
    if g.is_zero:
        return exact_estimate(0.0, seed=seed)
    if method == "quadrature":
        c, R = g.q_norm, g.radius
        brk = [max(c - R, 0.0), c + R] + [b for b in (abs(R - c), kF_sigma) if max(c - R, 0) < b < c + R]
        Q, w = red.gl_rule(brk, n_sub=4)
        val = float(np.dot(Q * Q * shell_measure(g, Q) / (1.0 + (Q / kF_sigma) ** 4), w))
        return IntegralEstimate(val / kF_sigma**3, 0.0, 0, "quadrature", seed)
    dom = SamplerSpec("ball", tuple(g.q), g.radius)

    def draw(rng, n):
        k, w = dom.sample(rng, n)
        kn = np.linalg.norm(k, axis=1) / kF_sigma
        return g(k) * w / (1.0 + kn**4)

    est = estimate_draws(draw, budget, seed, "mc-uniform", (95,))
    return est.scaled(kF_sigma**-3.0)


@dataclass(frozen=True)
class LeadingOrder:
    rho_sigma: float
    q_norm: float
    estimate: IntegralEstimate
    exponent: float
    flags: tuple[str, ...] = ()

    @property
    def ratio(self) -> float:
        return self.estimate.value / self.rho_sigma**self.exponent

    @property
    def ratio_error(self) -> float:
        return self.estimate.std_error / self.rho_sigma**self.exponent


def leading_order_check(system: FermiSystem, q=(0.0, 0.0, 0.0), budget=None, seed: int = 0,
                        sigma: str = "up", method: str = "mc-importance",
                        validity_factor: float = 2.0) -> LeadingOrder:
    """``n^(Bel)_{q,α,σ} / ρ_σ^(5/3 + 3α)`` with ball smearing of radius ``ρ_σ^(1/3+α)``.

    ``|q| > validity_factor · k_F^σ`` lies outside the regime the scaling
    statement covers; the value is still computed and flagged.
    """
    g = system.ball_smearing(q, sigma)
    flags = ()
    if g.q_norm > validity_factor * system.kF(sigma):
        warnings.warn("|q| outside the validity region of the leading-order scaling")
        flags = ("outside-validity-region",)
    est = belyakov_density(system, g, sigma, budget, seed, method)
    return LeadingOrder(system.density(sigma), g.q_norm, est,
                        5.0 / 3.0 + 3.0 * system.alpha, flags)
