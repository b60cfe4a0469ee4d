"""Exact dimension reduction of lune-constrained momentum integrals.

For fixed ``p`` (``P = |p|``) the set ``{r : |r| < k < |r + p|}`` is sliced
perpendicular to ``p``.  With ``τ = r·p̂ + P/2`` the energy difference is
``|r + p|^2 - |r|^2 = 2 P τ`` and the slice at ``τ`` is a disc or annulus of
area

    a_k(τ; P) = π max(0, min(2 P τ, k^2 - (τ - P/2)^2)).

The mirrored set ``{r' : |r'| < k < |r' - p|}`` has the same slices in the
variable ``σ = P/2 - r'·p̂``.  Integrals of ``(A + 2 P σ)^-m`` against these
areas are elementary; :func:`lune_moment` evaluates them in closed form.
"""

from __future__ import annotations

import math

import numpy as np

_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)


def lune_area(t, P, k):
    """Slice area ``a_k(t; P)`` of the lune ``B_k(0) minus B_k(∓p)``."""
    t = np.asarray(t, dtype=float)
    P = np.asarray(P, dtype=float)
    return math.pi * np.maximum(0.0, np.minimum(2.0 * P * t, k * k - (t - 0.5 * P) ** 2))


def lune_volume(P, k):
    """Volume of ``B_k(0)`` minus ``B_k(p)`` (two equal balls at distance ``P``)."""
    P = np.asarray(P, dtype=float)
    d = np.minimum(P, 2.0 * k)
    lens = math.pi * (4 * k + d) * (2 * k - d) ** 2 / 12.0
    return 4.0 * math.pi / 3.0 * k**3 - lens


def _pieces(P, k):
    """Polynomial pieces ``(lo, hi, c0, c1, c2)`` of ``a_k / π`` in ``t``.

    Piece 1 (linear ``2 P t``) lives on ``[0, k - P/2]`` when ``P < 2k``;
    piece 2 (``k^2 - (t - P/2)^2``) on ``[max(0, k - P/2, P/2 - k), P/2 + k]``.
    """
    half = 0.5 * P
    lin_hi = np.maximum(k - half, 0.0)
    zeros = np.zeros_like(P)
    quad_lo = np.maximum(np.maximum(k - half, half - k), 0.0)
    quad_hi = half + k
    return (
        (zeros, lin_hi, zeros, 2.0 * P, zeros),
        (quad_lo, quad_hi, k * k - half * half, P, -np.ones_like(P)),
    )


def _poly_power_integral(lo, hi, c0, c1, c2, A, P, m):
    """``∫_lo^hi (c0 + c1 t + c2 t^2) / (A + 2 P t)^m dt``, vectorized."""
    lo, hi, c0, c1, c2, A, P = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (lo, hi, c0, c1, c2, A, P)))
    out = np.zeros(lo.shape)
    live = hi > lo
    if not live.any():
        return out
    lo, hi, c0, c1, c2, A, P = (v[live] for v in (lo, hi, c0, c1, c2, A, P))
    ya = A + 2.0 * P * lo
    yb = A + 2.0 * P * hi
    # closed form is ill-conditioned when the denominator barely varies
    narrow = (yb - ya) <= 0.05 * ya
    res = np.empty(lo.shape)

    wide = ~narrow
    if wide.any():
        cw0, cw1, cw2, Aw, Pw, a_, b_ = (v[wide] for v in (c0, c1, c2, A, P, ya, yb))
        inv = 1.0 / (2.0 * Pw)
        d2 = cw2 * inv * inv
        d1 = cw1 * inv - 2.0 * Aw * cw2 * inv * inv
        d0 = cw0 - cw1 * Aw * inv + cw2 * Aw * Aw * inv * inv
        total = np.zeros_like(a_)
        with np.errstate(divide="ignore", invalid="ignore"):
            for j, d in ((0, d0), (1, d1), (2, d2)):
                e = j - m
                if e == -1:
                    seg = np.log(b_ / a_)
                else:
                    seg = (b_ ** (e + 1) - a_ ** (e + 1)) / (e + 1)
                # a vanishing coefficient kills the power that blows up at y = 0
                total = total + np.where(d != 0.0, d * seg, 0.0)
        res[wide] = total * inv

    if narrow.any():
        ln, hn, cn0, cn1, cn2, An, Pn = (v[narrow] for v in (lo, hi, c0, c1, c2, A, P))
        mid = 0.5 * (hn + ln)
        half = 0.5 * (hn - ln)
        t = mid[:, None] + half[:, None] * _GL_X[None, :]
        f = (cn0[:, None] + cn1[:, None] * t + cn2[:, None] * t * t) \
            / (An[:, None] + 2.0 * Pn[:, None] * t) ** m
        res[narrow] = half * (f @ _GL_W)
    out[live] = res
    return out


def lune_moment(A, P, k, m):
    """``W_m(A, P; k) = ∫_0^∞ a_k(σ; P) (A + 2 P σ)^-m dσ``.

    Equivalently, the integral of ``(A + |r' - p|^2 - |r'|^2)^-m`` over the
    lune ``|r'| < k < |r' - p|``.  Requires ``A >= 0`` and ``P > 0``.
    """
    A = np.asarray(A, dtype=float)
    P = np.asarray(P, dtype=float)
    A, P = np.broadcast_arrays(A, P)
    total = np.zeros(A.shape)
    for lo, hi, c0, c1, c2 in _pieces(P, k):
        total = total + _poly_power_integral(lo, hi, c0, c1, c2, A, P, m)
    return math.pi * total


def tau_support(P, k=1.0):
    """Interval of ``τ`` on which ``a_k(τ; P) > 0``."""
    P = np.asarray(P, dtype=float)
    return np.maximum(0.5 * P - k, 0.0), 0.5 * P + k


# ---------------------------------------------------------------------------
# importance samplers built on the reduction
#
# ``cutoff`` is an optional radial weight ``w(P)`` multiplying every kernel
# (the squared low-momentum cutoff in the regularized integrals) and ``shift``
# is added to every energy denominator (``2 ε``).


def pair_kernel(A, P, k_other, m=2, shift=0.0, cutoff=None):
    """``w(P) · W_m(A + shift, P; k_other)``."""
    val = lune_moment(np.asarray(A) + shift, P, k_other, m)
    if cutoff is not None:
        val = val * cutoff(P)
    return val


def sample_radius(rng, n, p_min, p_core):
    """Draw ``P >= p_min`` from a uniform core plus a ``P^-2`` tail.

    Returns ``(P, weight)`` with ``weight = 1 / density``.  The tail starts
    at ``max(p_min, p_core)`` so no part of the half-line is dropped.
    """
    p_min = np.broadcast_to(np.asarray(p_min, dtype=float), (n,))
    start = np.maximum(p_min, p_core)
    core_len = start - p_min
    has_core = core_len > 0
    pick_core = has_core & (rng.random(n) < 0.5)
    u = rng.random(n)
    P_core = p_min + core_len * u
    P_tail = start / (1.0 - u)          # 1 - u lies in (0, 1]
    P = np.where(pick_core, P_core, P_tail)
    safe_len = np.where(has_core, core_len, 1.0)
    prob = np.where(has_core, 0.5, 1.0)
    w_core = safe_len / 0.5
    w_tail = P * P / np.maximum(start, 1e-300) / prob
    return P, np.where(pick_core, w_core, w_tail)


def lune_pair_draw(k, k_other, m, shift=0.0, cutoff=None, p_core=None):
    """Draw function for ``∫dp ∫_{lune_k(p)} dr ∫_{lune_k'(-p)} dr' D^-m``.

    Uses the slice variable ``τ`` of the first lune; the second lune is
    integrated in closed form.
    """
    p_core = 2.0 * (k + k_other) if p_core is None else p_core

    def draw(rng, n):
        P, w = sample_radius(rng, n, 0.0, p_core)
        lo, hi = tau_support(P, k)
        tau = lo + (hi - lo) * rng.random(n)
        val = 4.0 * math.pi * P * P * lune_area(tau, P, k) \
            * pair_kernel(2.0 * P * tau, P, k_other, m, shift, cutoff)
        return val * w * (hi - lo)

    return draw


def hole_values(rng, Q, k, k_other, m=2, shift=0.0, cutoff=None, p_core=None, kernel=None):
    """One unbiased sample per entry of ``Q`` of

        T_hole(Q) = ∫_{|Q e + p| > k} dp  w(|p|) W_m(|Q e + p|^2 - Q^2 + shift, |p|; k')

    with ``e`` any unit vector and ``Q <= k``.  A custom ``kernel(A, P)``
    replaces ``w W_m``; paired differences of two kernels then share samples.
    """
    Q = np.asarray(Q, dtype=float)
    n = Q.size
    p_core = 2.0 * (k + k_other) if p_core is None else p_core
    P, w = sample_radius(rng, n, np.maximum(k - Q, 0.0), p_core)
    with np.errstate(divide="ignore", invalid="ignore"):
        c0 = (k * k - Q * Q - P * P) / (2.0 * Q * P)
    c0 = np.where(Q > 0, c0, np.where(P > k, -np.inf, np.inf))
    c_lo = np.clip(c0, -1.0, 1.0)
    span = 1.0 - c_lo
    c = c_lo + span * rng.random(n)
    A = np.maximum(P * P + 2.0 * Q * P * c, 0.0)
    if kernel is None:
        kv = pair_kernel(A, P, k_other, m, shift, cutoff)
    else:
        kv = kernel(A, P)
    val = 2.0 * math.pi * P * P * kv
    return np.where(span > 0, val * span * w, 0.0)


def particle_values(rng, s, k, k_other, m=2, shift=0.0, cutoff=None, kernel=None):
    """One unbiased sample per row of ``s`` (``|s| > k``) of

        T_particle(s) = ∫_{|r| < k} dr  w(|s - r|) W_m(|s|^2 - |r|^2 + shift, |s - r|; k').
    """
    s = np.atleast_2d(np.asarray(s, dtype=float))
    n = s.shape[0]
    d = rng.standard_normal((n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = d * (k * np.cbrt(rng.random(n)))[:, None]
    A = np.maximum(np.einsum("ij,ij->i", s, s) - np.einsum("ij,ij->i", r, r), 0.0)
    P = np.linalg.norm(s - r, axis=1)
    vol = 4.0 * math.pi / 3.0 * k**3
    if kernel is not None:
        return vol * kernel(A, P)
    return vol * pair_kernel(A, P, k_other, m, shift, cutoff)


# ---------------------------------------------------------------------------
# deterministic counterparts (composite Gauss-Legendre)

_GL64_X, _GL64_W = np.polynomial.legendre.leggauss(64)


def gl_rule(breaks, n_sub=1, grade=0):
    """Composite Gauss-Legendre nodes on consecutive intervals of ``breaks``.

    With ``grade > 0`` each interval is also split geometrically towards both
    ends, which handles the logarithmic endpoint behaviour of ``W_2``.
    """
    xs, ws = [], []
    b = np.unique(np.asarray(breaks, dtype=float))
    for lo, hi in zip(b[:-1], b[1:]):
        if hi <= lo:
            continue
        cuts = [lo, hi]
        if grade:
            mid = 0.5 * (lo + hi)
            h = 0.5 * (hi - lo)
            g = h * 0.1 ** np.arange(1, grade + 1)
            cuts = sorted(set([lo, hi, mid, *(lo + g), *(hi - g)]))
        for a, c in zip(cuts[:-1], cuts[1:]):
            edges = np.linspace(a, c, n_sub + 1)
            for e0, e1 in zip(edges[:-1], edges[1:]):
                xs.append(0.5 * (e0 + e1) + 0.5 * (e1 - e0) * _GL64_X)
                ws.append(0.5 * (e1 - e0) * _GL64_W)
    if not xs:
        return np.zeros(0), np.zeros(0)
    return np.concatenate(xs), np.concatenate(ws)


def tail_rule(start, n_sub=4):
    """Nodes for ``∫_start^∞ f(P) dP`` through ``P = start / u``."""
    u, w = gl_rule([0.0, 1.0], n_sub=n_sub)
    return start / u, w * start / (u * u)


def hole_quadrature(Q, k, k_other, m=2, shift=0.0, cutoff=None):
    """Deterministic ``T_hole(Q)`` (``m = 2``) using the closed-form angle integral."""
    if m != 2:
        raise ValueError("closed-form angular integral is implemented for m = 2")
    Q = float(Q)
    p_min = max(k - Q, 0.0)
    top = 2.0 * (k + k_other) + 2.0 * Q
    P, w = gl_rule([p_min, k + Q, 2.0 * k_other, max(k - Q, Q - k), top], n_sub=4, grade=3)
    keep = (P > p_min)
    P, w = P[keep], w[keep]
    Pt, wt = tail_rule(max(top, p_min))
    P = np.concatenate([P, Pt])
    w = np.concatenate([w, wt])
    if Q < 1e-3:
        # angle integral by quadrature; the closed form cancels badly here
        cx, cw = gl_rule([-1.0, 1.0])
        A = P[:, None] ** 2 + 2.0 * Q * P[:, None] * cx[None, :]
        ok = A > k * k - Q * Q
        Wv = lune_moment(np.maximum(A, 0.0) + shift, np.broadcast_to(P[:, None], A.shape), k_other, 2)
        ang = np.where(ok, Wv, 0.0) @ cw
    else:
        A_lo = np.maximum(k * k - Q * Q, P * P - 2.0 * Q * P)
        A_hi = P * P + 2.0 * Q * P
        ang = (lune_moment(A_lo + shift, P, k_other, 1)
               - lune_moment(A_hi + shift, P, k_other, 1)) / (2.0 * Q * P)
        ang = np.where(A_hi > A_lo, ang, 0.0)
    f = 2.0 * math.pi * P * P * ang
    if cutoff is not None:
        f = f * cutoff(P)
    return float(np.dot(f, w))


def particle_quadrature(Q, k, k_other, m=2, shift=0.0, cutoff=None):
    """Deterministic ``T_particle`` for ``|s| = Q > k``."""
    Q = float(Q)
    t, wt = gl_rule([0.0, k], n_sub=2, grade=3)
    total = 0.0
    for ti, wi in zip(t, wt):
        P, wp = gl_rule([Q - ti, Q + ti, 2.0 * k_other], n_sub=2)
        P, wp = P[(P >= Q - ti) & (P <= Q + ti)], wp[(P >= Q - ti) & (P <= Q + ti)]
        f = P / (Q * ti) * lune_moment(Q * Q - ti * ti + shift, P, k_other, m)
        if cutoff is not None:
            f = f * cutoff(P)
        total += wi * 2.0 * math.pi * ti * ti * float(np.dot(f, wp))
    return total


def lune_pair_quadrature(k, k_other, m, shift=0.0, cutoff=None):
    """Deterministic ``∫dp ∫dr ∫dr' D^-m`` over the two lunes."""
    top = 2.0 * (k + k_other) + 2.0
    P, w = gl_rule([0.0, 2.0 * k_other, 2.0 * k, top], n_sub=3, grade=3)
    Pt, wt = tail_rule(top)
    P = np.concatenate([P, Pt])
    w = np.concatenate([w, wt])
    out = np.empty(P.size)
    for i, Pi in enumerate(P):
        lo, hi = tau_support(Pi, k)
        tau, wtau = gl_rule([float(lo), max(k - 0.5 * Pi, float(lo)), float(hi)], n_sub=2, grade=4)
        f = lune_area(tau, Pi, k) * pair_kernel(2.0 * Pi * tau, Pi, k_other, m, shift, cutoff)
        out[i] = 4.0 * math.pi * Pi * Pi * float(np.dot(f, wtau))
    return float(np.dot(out, w))
