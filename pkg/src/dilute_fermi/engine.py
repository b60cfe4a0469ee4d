"""Shared Monte Carlo machinery.

Random streams are counter-based (Philox) generators keyed by
``(master_seed, *path)`` through :class:`numpy.random.SeedSequence`, so any
batch can be regenerated without replaying the others.  Estimates are built
from fixed-size batches that are reduced in batch order, which makes every
result bit-identical for a given seed regardless of how many worker threads
evaluated the batches.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

FOUR_PI_THIRDS = 4.0 * math.pi / 3.0

METHODS = ("mc-uniform", "mc-importance", "quadrature", "exact")


class DegenerateDomainError(ValueError):
    """Raised when a sampling domain has zero measure."""


class NonFiniteIntegrandError(ValueError):
    """Raised when an integrand evaluates to inf or nan."""


# ---------------------------------------------------------------------------
# results


@dataclass(frozen=True)
class IntegralEstimate:
    """Value of an integral together with its statistical uncertainty.

    ``flags`` collects machine-readable remarks such as ``"domain-empty"`` or
    ``"budget-exhausted"``.
    """

    value: float
    std_error: float
    n_samples: int
    method: str
    seed: int | None = None
    truncation_note: str | None = None
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if self.std_error < 0:
            raise ValueError("std_error must be non-negative")
        if self.method not in METHODS and self.method != "mixed":
            raise ValueError(f"unknown method tag {self.method!r}")

    @property
    def rel_error(self) -> float:
        if self.value == 0.0:
            return 0.0 if self.std_error == 0.0 else math.inf
        return self.std_error / abs(self.value)

    def scaled(self, factor: float) -> "IntegralEstimate":
        return replace(self, value=self.value * factor,
                       std_error=self.std_error * abs(factor))

    def __add__(self, other: "IntegralEstimate") -> "IntegralEstimate":
        # independent estimates: errors add in quadrature
        notes = [n for n in (self.truncation_note, other.truncation_note) if n]
        method = self.method if self.method == other.method else "mixed"
        flags = tuple(dict.fromkeys(self.flags + other.flags))
        return IntegralEstimate(
            value=self.value + other.value,
            std_error=math.hypot(self.std_error, other.std_error),
            n_samples=self.n_samples + other.n_samples,
            method=method,
            seed=self.seed if self.seed is not None else other.seed,
            truncation_note="; ".join(notes) or None,
            flags=flags,
        )

    def agrees_with(self, other: "IntegralEstimate", n_sigma: float = 4.0) -> bool:
        combined = math.hypot(self.std_error, other.std_error)
        return abs(self.value - other.value) <= n_sigma * combined

    def as_dict(self) -> dict:
        return {
            "value": self.value,
            "std_error": self.std_error,
            "n_samples": self.n_samples,
            "method": self.method,
            "seed": self.seed,
            "truncation_note": self.truncation_note,
            "flags": list(self.flags),
        }


def exact_estimate(value: float, method: str = "exact", **kw) -> IntegralEstimate:
    return IntegralEstimate(value=float(value), std_error=0.0, n_samples=0,
                            method=method, **kw)


def sum_estimates(parts: Sequence[IntegralEstimate]) -> IntegralEstimate:
    out = parts[0]
    for p in parts[1:]:
        out = out + p
    return out


# ---------------------------------------------------------------------------
# random streams


@dataclass(frozen=True)
class RngContract:
    """Stateless derivation ``(master_seed, stream path) -> Generator``."""

    master_seed: int

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")

    def generator(self, *path: int) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.master_seed),
                                    spawn_key=tuple(int(k) for k in path))
        return np.random.Generator(np.random.Philox(ss))

    def child_seed(self, *path: int) -> int:
        ss = np.random.SeedSequence(entropy=int(self.master_seed),
                                    spawn_key=tuple(int(k) for k in path))
        return int(ss.generate_state(1, dtype=np.uint64)[0])


def stream(master_seed: int, index: int) -> np.random.Generator:
    return RngContract(master_seed).generator(index)


# ---------------------------------------------------------------------------
# samplers


def _isotropic(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.standard_normal((n, 3))
    norm = np.linalg.norm(v, axis=1)
    # a zero vector has probability zero but would poison the batch
    bad = norm == 0.0
    if bad.any():
        v[bad] = (1.0, 0.0, 0.0)
        norm[bad] = 1.0
    return v / norm[:, None]


def lens_volume(r1: float, r2: float, d: float) -> float:
    """Volume of the intersection of two balls with radii r1, r2 at distance d."""
    if d >= r1 + r2:
        return 0.0
    if d <= abs(r1 - r2):
        return FOUR_PI_THIRDS * min(r1, r2) ** 3
    return (math.pi * (r1 + r2 - d) ** 2
            * (d * d + 2 * d * (r1 + r2) - 3 * (r1 - r2) ** 2)
            / (12.0 * d))


@dataclass(frozen=True)
class SamplerSpec:
    """A three-dimensional sampling domain.

    kinds
    -----
    ``ball``            |x - center| <= radius
    ``shell``           inner < |x - center| <= radius
    ``ball-minus-ball`` |x - center| <= radius and |x - center2| > radius2
    ``exterior``        |x - center| > radius, radial law with density
                        proportional to |x|^-4 (weights grow like |x|^4)
    ``space``           all of R^3: an even mixture of the ``ball`` and
                        ``exterior`` laws with the same radius, so no
                        truncation is needed for integrands decaying
                        faster than |x|^-3

    ``sample`` returns ``(points, weights)`` where ``weights`` is the inverse
    sampling density, i.e. the domain volume for the uniform kinds.
    """

    kind: str
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius: float = 1.0
    inner: float = 0.0
    center2: tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius2: float = 0.0

    def __post_init__(self):
        if self.kind not in ("ball", "shell", "ball-minus-ball", "exterior", "space"):
            raise ValueError(f"unknown sampler kind {self.kind!r}")
        if self.radius < 0 or self.inner < 0 or self.radius2 < 0:
            raise ValueError("radii must be non-negative")
        if self.kind == "shell" and self.inner > self.radius:
            raise ValueError("shell inner radius exceeds outer radius")

    @property
    def volume(self) -> float:
        if self.kind == "ball":
            return FOUR_PI_THIRDS * self.radius**3
        if self.kind == "shell":
            return FOUR_PI_THIRDS * (self.radius**3 - self.inner**3)
        if self.kind == "ball-minus-ball":
            d = math.dist(self.center, self.center2)
            return FOUR_PI_THIRDS * self.radius**3 - lens_volume(self.radius, self.radius2, d)
        return math.inf

    def contains(self, x: np.ndarray) -> np.ndarray:
        d = np.linalg.norm(x - np.asarray(self.center), axis=-1)
        if self.kind == "ball":
            return d <= self.radius
        if self.kind == "shell":
            return (d > self.inner) & (d <= self.radius)
        if self.kind == "ball-minus-ball":
            d2 = np.linalg.norm(x - np.asarray(self.center2), axis=-1)
            return (d <= self.radius) & (d2 > self.radius2)
        if self.kind == "space":
            return np.ones(d.shape, dtype=bool)
        return d > self.radius

    def check(self) -> None:
        if self.kind in ("exterior", "space"):
            if self.radius <= 0:
                raise DegenerateDomainError(f"{self.kind} sampler needs a positive radius")
            return
        if not self.volume > 0.0:
            raise DegenerateDomainError(f"{self.kind} domain has zero volume")

    def sample(self, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        self.check()
        c = np.asarray(self.center, dtype=float)
        if self.kind == "ball":
            rad = self.radius * rng.random(n) ** (1.0 / 3.0)
            return c + rad[:, None] * _isotropic(rng, n), np.full(n, self.volume)
        if self.kind == "shell":
            lo, hi = self.inner**3, self.radius**3
            rad = np.cbrt(lo + (hi - lo) * rng.random(n))
            return c + rad[:, None] * _isotropic(rng, n), np.full(n, self.volume)
        if self.kind == "exterior":
            u = 1.0 - rng.random(n)  # (0, 1]
            rad = self.radius / u
            w = 4.0 * math.pi * rad**4 / self.radius
            return c + rad[:, None] * _isotropic(rng, n), w
        if self.kind == "space":
            core = rng.random(n) < 0.5
            u = rng.random(n)
            rad = np.where(core, self.radius * np.cbrt(u), self.radius / (1.0 - u))
            w = np.where(core, FOUR_PI_THIRDS * self.radius**3,
                         4.0 * math.pi * rad**4 / self.radius) * 2.0
            return c + rad[:, None] * _isotropic(rng, n), w
        return self._sample_rejection(rng, n)

    def _sample_rejection(self, rng, n):
        outer = SamplerSpec("ball", self.center, self.radius)
        c2 = np.asarray(self.center2, dtype=float)
        got: list[np.ndarray] = []
        have = 0
        accept = max(self.volume / outer.volume, 1e-6)
        for _ in range(10_000):
            m = int(min(max(2 * (n - have) / accept, 64), 4 * n / accept + 64))
            x, _ = outer.sample(rng, m)
            keep = x[np.linalg.norm(x - c2, axis=1) > self.radius2]
            got.append(keep)
            have += len(keep)
            if have >= n:
                break
        else:  # pragma: no cover - guarded by check()
            raise DegenerateDomainError("rejection sampler failed to fill the batch")
        return np.concatenate(got)[:n], np.full(n, self.volume)


# ---------------------------------------------------------------------------
# estimation


@dataclass
class _BatchStats:
    n: int
    total: float
    mean: float
    m2: float


def _merge(a: _BatchStats, b: _BatchStats) -> _BatchStats:
    # Chan et al. pairwise update; ordered merges keep results reproducible
    if a.n == 0:
        return b
    if b.n == 0:
        return a
    n = a.n + b.n
    delta = b.mean - a.mean
    mean = a.mean + delta * b.n / n
    m2 = a.m2 + b.m2 + delta * delta * a.n * b.n / n
    return _BatchStats(n, a.total + b.total, mean, m2)


def _stats(values: np.ndarray) -> _BatchStats:
    n = len(values)
    if n == 0:
        return _BatchStats(0, 0.0, 0.0, 0.0)
    mean = float(np.mean(values))
    m2 = float(np.sum((values - mean) ** 2))
    return _BatchStats(n, float(np.sum(values)), mean, m2)


Draw = Callable[[np.random.Generator, int], np.ndarray]


@dataclass
class RunBudget:
    """Stopping rule shared by all Monte Carlo estimators."""

    max_samples: int = 1_000_000
    target_rel_err: float = 0.01
    batch_size: int = 1 << 15
    wave: int = 8
    min_samples: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.max_samples <= 0 or self.batch_size <= 0:
            raise ValueError("budget sizes must be positive")

    def fraction(self, share: float) -> "RunBudget":
        return replace(self, max_samples=max(int(self.max_samples * share), 1))


def as_budget(budget: "RunBudget | int | None") -> RunBudget:
    if budget is None:
        return RunBudget()
    if isinstance(budget, RunBudget):
        return budget
    return RunBudget(max_samples=int(budget))


def estimate_draws(draw: Draw, budget: "RunBudget | int | None" = None,
                   seed: int = 0, method: str = "mc-uniform",
                   path: tuple[int, ...] = ()) -> IntegralEstimate:
    """Monte Carlo mean of weighted samples produced by ``draw(rng, n)``.

    Batches are indexed ``0, 1, 2, ...`` and batch ``b`` always uses stream
    ``(seed, *path, b)``.  Sampling proceeds in waves of ``budget.wave``
    batches until the relative standard error falls below the target or the
    sample budget is spent.
    """
    budget = as_budget(budget)
    contract = RngContract(seed)
    bsize = min(budget.batch_size, budget.max_samples)
    n_batches_max = max(budget.max_samples // bsize, 1)

    def run(b):
        vals = np.asarray(draw(contract.generator(*path, b), bsize), dtype=float)
        if not np.all(np.isfinite(vals)):
            idx = int(np.flatnonzero(~np.isfinite(vals))[0])
            raise NonFiniteIntegrandError(
                f"non-finite integrand value {vals[idx]!r} in batch {b}, sample {idx}")
        return _stats(vals)

    acc = _BatchStats(0, 0.0, 0.0, 0.0)
    b = 0
    flags: tuple[str, ...] = ()
    pool = ThreadPoolExecutor(budget.workers) if budget.workers > 1 else None
    try:
        while b < n_batches_max:
            idx = range(b, min(b + budget.wave, n_batches_max))
            results = list(pool.map(run, idx)) if pool else [run(i) for i in idx]
            for r in results:
                acc = _merge(acc, r)
            b = idx.stop
            if acc.n >= budget.min_samples and acc.n > 1:
                se = math.sqrt(acc.m2 / (acc.n - 1) / acc.n)
                if se == 0.0 or se <= budget.target_rel_err * abs(acc.mean):
                    break
        else:
            flags = ("budget-exhausted",)
    finally:
        if pool:
            pool.shutdown()
    se = math.sqrt(acc.m2 / (acc.n - 1) / acc.n) if acc.n > 1 else 0.0
    if flags and se <= budget.target_rel_err * abs(acc.mean):
        flags = ()
    return IntegralEstimate(value=acc.mean, std_error=se, n_samples=acc.n,
                            method=method, seed=seed, flags=flags)


def estimate(integrand: Callable[..., np.ndarray], samplers: Sequence[SamplerSpec],
             budget: "RunBudget | int | None" = None, seed: int = 0,
             method: str = "mc-uniform", path: tuple[int, ...] = ()) -> IntegralEstimate:
    """Integrate ``integrand(x1, ..., xk)`` over the product of ``samplers``.

    The value is the sample mean of ``integrand * prod(weights)``; for
    uniform samplers this is ``volume * mean``.
    """
    for s in samplers:
        s.check()

    def draw(rng, n):
        pts, w = [], np.ones(n)
        for s in samplers:
            x, wi = s.sample(rng, n)
            pts.append(x)
            w = w * wi
        f = np.asarray(integrand(*pts), dtype=float)
        if f.shape != (n,):
            f = np.broadcast_to(f, (n,))
        if not np.all(np.isfinite(f)):
            idx = int(np.flatnonzero(~np.isfinite(f))[0])
            where = ", ".join(np.array2string(x[idx], precision=6) for x in pts)
            raise NonFiniteIntegrandError(f"integrand is {f[idx]!r} at ({where})")
        # zero integrand beats infinite weight, matters only at measure zero
        return np.where(f == 0.0, 0.0, f * w)

    return estimate_draws(draw, budget, seed=seed, method=method, path=path)


def sample_uniform(spec: SamplerSpec, rng: np.random.Generator, n: int = 1) -> np.ndarray:
    """``n`` points distributed uniformly on ``spec`` (shape ``(n, 3)``)."""
    if spec.kind == "exterior":
        raise DegenerateDomainError("exterior domain has no uniform law")
    pts, _ = spec.sample(rng, n)
    return pts


# ---------------------------------------------------------------------------
# summation


class CompensatedSum:
    """Running Neumaier sum (an error-free-transform accumulator)."""

    def __init__(self, value: float = 0.0):
        self.s = float(value)
        self.c = 0.0

    def add(self, x: float) -> None:
        x = float(x)
        t = self.s + x
        if abs(self.s) >= abs(x):
            self.c += (self.s - t) + x
        else:
            self.c += (x - t) + self.s
        self.s = t

    def extend(self, xs) -> None:
        for x in xs:
            self.add(x)

    @property
    def value(self) -> float:
        return self.s + self.c


def compensated_sum(values) -> float:
    """Correctly rounded sum of ``values`` (delegates to :func:`math.fsum`)."""
    return math.fsum(np.asarray(values, dtype=float).ravel().tolist())


__all__ = [
    "IntegralEstimate", "RngContract", "SamplerSpec", "RunBudget",
    "DegenerateDomainError", "NonFiniteIntegrandError", "estimate",
    "estimate_draws", "sample_uniform", "stream", "lens_volume",
    "CompensatedSum", "compensated_sum", "exact_estimate", "sum_estimates",
    "as_budget",
]
