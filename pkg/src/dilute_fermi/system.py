"""Physical parameters and the scalar kernels built from them.

Momenta are plain ``(..., 3)`` float arrays; every kernel broadcasts over the
leading axes.  Nothing here rescales to ``k_F = 1``: callers that want the
rescaled appendix integrals do so explicitly (see :mod:`dilute_fermi.appendix_bounds`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

SIX_PI_SQ_CBRT = (6.0 * math.pi**2) ** (1.0 / 3.0)
DELTA_MIN = 2.0 / 9.0
ALPHA_MAX = 1.0 / 27.0

SPINS = ("up", "down")


class ConfigError(ValueError):
    """Parameter outside the range required by the construction."""


def fermi_momentum(rho: float) -> float:
    return SIX_PI_SQ_CBRT * rho ** (1.0 / 3.0)


def other_spin(sigma: str) -> str:
    if sigma not in SPINS:
        raise ValueError(f"spin must be 'up' or 'down', got {sigma!r}")
    return "down" if sigma == "up" else "up"


@dataclass(frozen=True)
class FermiSystem:
    """Two-component dilute Fermi gas with regularization parameters.

    ``epsilon = (rho_up + rho_down) ** (2/3 + delta)``.  Construction
    enforces ``delta > 2/9`` and ``0 < alpha < 1/27`` unless ``strict=False``,
    which unit tests use to probe limits such as ``alpha = 0``.
    """

    rho_up: float
    rho_down: float
    a: float
    delta: float = 0.25
    alpha: float = 0.03
    strict: bool = field(default=True, compare=False)
    epsilon_override: float | None = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("rho_up", "rho_down"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ConfigError(f"{name} must be positive and finite, got {v}")
        if not (self.a >= 0 and math.isfinite(self.a)):
            raise ConfigError(f"scattering length must be non-negative, got {self.a}")
        if self.strict:
            if not self.delta > DELTA_MIN:
                raise ConfigError(f"delta = {self.delta} violates δ > 2/9")
            if not 0.0 < self.alpha < ALPHA_MAX:
                raise ConfigError(f"alpha = {self.alpha} violates 0 < α < 1/27")
        if self.epsilon_override is not None and not self.epsilon_override >= 0:
            raise ConfigError("epsilon override must be non-negative")

    @property
    def rho(self) -> float:
        return self.rho_up + self.rho_down

    @property
    def kF_up(self) -> float:
        return fermi_momentum(self.rho_up)

    @property
    def kF_down(self) -> float:
        return fermi_momentum(self.rho_down)

    def kF(self, sigma: str) -> float:
        return self.kF_up if sigma == "up" else self.kF_down

    def density(self, sigma: str) -> float:
        return self.rho_up if sigma == "up" else self.rho_down

    @property
    def x(self) -> float:
        """Fermi momentum ratio ``k_F^down / k_F^up``."""
        return self.kF_down / self.kF_up

    @property
    def epsilon(self) -> float:
        if self.epsilon_override is not None:
            return self.epsilon_override
        return self.rho ** (2.0 / 3.0 + self.delta)

    def swapped(self) -> "FermiSystem":
        return FermiSystem(self.rho_down, self.rho_up, self.a, self.delta, self.alpha,
                           strict=self.strict, epsilon_override=self.epsilon_override)

    def with_a(self, a: float) -> "FermiSystem":
        return FermiSystem(self.rho_up, self.rho_down, a, self.delta, self.alpha,
                           strict=self.strict, epsilon_override=self.epsilon_override)

    def cutoffs(self) -> "CutoffPair":
        return CutoffPair.for_density(self.rho)

    def smearing_radius(self, sigma: str) -> float:
        return self.density(sigma) ** (1.0 / 3.0 + self.alpha)

    def ball_smearing(self, q=(0.0, 0.0, 0.0), sigma: str = "up") -> "SmearingSpec":
        return SmearingSpec.ball(q, self.smearing_radius(sigma), sigma)

    def as_dict(self) -> dict:
        return {"rho_up": self.rho_up, "rho_down": self.rho_down, "a": self.a,
                "delta": self.delta, "alpha": self.alpha, "epsilon": self.epsilon,
                "kF_up": self.kF_up, "kF_down": self.kF_down}


# ---------------------------------------------------------------------------
# smearing


@dataclass(frozen=True)
class SmearingSpec:
    """Momentum-space weight ``ĝ(k) = h(|k - q|)``.

    The ``ball`` kind is the closed indicator ``|k - q| <= radius``; the
    ``radial-profile`` kind takes any non-negative ``h`` supported in
    ``[0, radius]``.
    """

    kind: str
    center: tuple[float, float, float]
    radius: float
    sigma: str = "up"
    profile: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("ball", "radial-profile", "zero"):
            raise ValueError(f"unknown smearing kind {self.kind!r}")
        if self.radius < 0:
            raise ValueError("smearing radius must be non-negative")
        if self.kind == "radial-profile" and self.profile is None:
            raise ValueError("radial-profile smearing needs a profile function")
        other_spin(self.sigma)

    @classmethod
    def ball(cls, q, radius: float, sigma: str = "up") -> "SmearingSpec":
        return cls("ball", tuple(float(c) for c in q), float(radius), sigma)

    @classmethod
    def radial(cls, q, radius: float, profile, sigma: str = "up") -> "SmearingSpec":
        return cls("radial-profile", tuple(float(c) for c in q), float(radius), sigma, profile)

    @classmethod
    def zero(cls, sigma: str = "up") -> "SmearingSpec":
        return cls("zero", (0.0, 0.0, 0.0), 0.0, sigma)

    @property
    def q(self) -> np.ndarray:
        return np.asarray(self.center, dtype=float)

    @property
    def q_norm(self) -> float:
        return float(np.linalg.norm(self.center))

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or self.radius == 0.0 or self.norm_inf == 0.0

    def __call__(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        d = np.linalg.norm(k - self.q, axis=-1)
        if self.kind == "zero":
            return np.zeros(d.shape)
        inside = d <= self.radius
        if self.kind == "ball":
            return inside.astype(float)
        return np.where(inside, np.asarray(self.profile(np.minimum(d, self.radius)), float), 0.0)

    def _radial_grid(self, n=4001):
        t = np.linspace(0.0, self.radius, n)
        return t, np.asarray(self.profile(t), dtype=float)

    @property
    def norm_inf(self) -> float:
        if self.kind == "zero" or self.radius == 0.0:
            return 0.0
        if self.kind == "ball":
            return 1.0
        return float(np.max(np.abs(self._radial_grid()[1])))

    @property
    def norm_l2(self) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "ball":
            return math.sqrt(4.0 * math.pi / 3.0 * self.radius**3)
        val, _ = integrate.quad(lambda t: 4 * math.pi * t * t * float(self.profile(np.array(t))) ** 2,
                                0.0, self.radius, limit=200)
        return math.sqrt(val)

    def rotated(self, rotation: np.ndarray) -> "SmearingSpec":
        q = tuple(float(c) for c in np.asarray(rotation) @ self.q)
        return SmearingSpec(self.kind, q, self.radius, self.sigma, self.profile)

    def with_sigma(self, sigma: str) -> "SmearingSpec":
        return SmearingSpec(self.kind, self.center, self.radius, sigma, self.profile)

    def as_dict(self) -> dict:
        return {"kind": self.kind, "q": list(self.center), "radius": self.radius,
                "sigma": self.sigma}


# ---------------------------------------------------------------------------
# cutoffs and kernels


@dataclass(frozen=True)
class CutoffPair:
    """Smooth partition ``χ_< + χ_> = 1`` switching on ``[lo, hi]``.

    The ramp is ``(1 + cos(π (|p| - lo) / (hi - lo))) / 2``.
    """

    lo: float
    hi: float

    def __post_init__(self):
        if not 0 < self.lo < self.hi:
            raise ValueError("cutoff thresholds must satisfy 0 < lo < hi")

    @classmethod
    def for_density(cls, rho: float) -> "CutoffPair":
        s = rho ** (2.0 / 9.0)
        return cls(4.0 * s, 5.0 * s)

    def less_radial(self, pnorm) -> np.ndarray:
        t = np.asarray(pnorm, dtype=float)
        ramp = 0.5 * (1.0 + np.cos(math.pi * (t - self.lo) / (self.hi - self.lo)))
        return np.where(t <= self.lo, 1.0, np.where(t >= self.hi, 0.0, ramp))

    def greater_radial(self, pnorm) -> np.ndarray:
        return 1.0 - self.less_radial(pnorm)

    def less(self, p) -> np.ndarray:
        return self.less_radial(np.linalg.norm(np.asarray(p, dtype=float), axis=-1))

    def greater(self, p) -> np.ndarray:
        return 1.0 - self.less(p)


def chi_less(system: FermiSystem, p) -> np.ndarray:
    return system.cutoffs().less(p)


def chi_greater(system: FermiSystem, p) -> np.ndarray:
    return system.cutoffs().greater(p)


def _sq(v: np.ndarray) -> np.ndarray:
    return np.einsum("...i,...i->...", v, v)


def lam(r, p) -> np.ndarray:
    """``λ_{r,p} = | |r + p|^2 - |r|^2 |``."""
    r = np.asarray(r, dtype=float)
    p = np.asarray(p, dtype=float)
    return np.abs(_sq(r + p) - _sq(r))


def eta(system: FermiSystem, r, r_prime, p) -> np.ndarray:
    """Regularized low-momentum pair kernel ``8πa / (λ_{r,p} + λ_{r',-p} + 2ε)``."""
    p = np.asarray(p, dtype=float)
    return 8.0 * math.pi * system.a / (lam(r, p) + lam(r_prime, -p) + 2.0 * system.epsilon)


def excitation_energy(kF: float, r) -> np.ndarray:
    """``e_r = | |r|^2 - kF^2 |``; pass ``kF = x`` for the rescaled ``ẽ_r``."""
    return np.abs(_sq(np.asarray(r, dtype=float)) - kF * kF)


__all__ = [
    "FermiSystem", "SmearingSpec", "CutoffPair", "ConfigError", "fermi_momentum",
    "lam", "eta", "chi_less", "chi_greater", "excitation_energy", "other_spin",
    "DELTA_MIN", "ALPHA_MAX",
]
