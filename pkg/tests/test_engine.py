import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dilute_fermi.engine import (
    CompensatedSum, DegenerateDomainError, IntegralEstimate, NonFiniteIntegrandError,
    RngContract, RunBudget, SamplerSpec, compensated_sum, estimate, estimate_draws,
    lens_volume, sample_uniform,
)

FOUR_PI_3 = 4.0 * math.pi / 3.0


def within(est, target, n_sigma=4.0):
    return abs(est.value - target) <= n_sigma * est.std_error


def test_ball_radius_zero_is_degenerate():
    spec = SamplerSpec("ball", radius=0.0)
    with pytest.raises(DegenerateDomainError):
        sample_uniform(spec, np.random.default_rng(0), 10)


def test_unit_ball_second_moment():
    # E|x|^2 = 3/5 for the uniform unit ball
    est = estimate(lambda x: np.einsum("ij,ij->i", x, x) / FOUR_PI_3,
                   [SamplerSpec("ball")], RunBudget(200_000, 1e-9), seed=1)
    assert within(est, 0.6)


@given(st.floats(0.05, 0.85))
def test_shell_hit_rate(x):
    spec = SamplerSpec("shell", radius=1.0, inner=x)
    pts = sample_uniform(spec, RngContract(3).generator(0), 40_000)
    hit = np.linalg.norm(pts, axis=1) > 0.9
    p = (1 - 0.9**3) / (1 - x**3)
    se = math.sqrt(p * (1 - p) / len(hit))
    assert abs(hit.mean() - p) <= 4 * se + 1e-12


def test_constant_one_and_zero():
    one = estimate(lambda x: np.ones(len(x)), [SamplerSpec("ball")], 10_000)
    assert one.value == pytest.approx(FOUR_PI_3, rel=1e-12)
    zero = estimate(lambda x: np.zeros(len(x)), [SamplerSpec("ball")], 10_000)
    assert zero.value == 0.0 and zero.std_error == 0.0


def test_half_ball_indicator():
    est = estimate(lambda x: (x[:, 0] > 0).astype(float), [SamplerSpec("ball")],
                   RunBudget(100_000, 1e-9), seed=5)
    assert within(est, FOUR_PI_3 / 2)


@given(st.floats(0.2, 2.0), st.floats(0.2, 2.0), st.floats(0.0, 4.0))
def test_lens_volume_against_hit_rate(r1, r2, d):
    spec = SamplerSpec("ball", radius=r1)
    pts = sample_uniform(spec, RngContract(11).generator(1), 30_000)
    frac = np.mean(np.linalg.norm(pts - np.array([d, 0, 0]), axis=1) <= r2)
    se = math.sqrt(max(frac * (1 - frac), 1e-6) / len(pts))
    assert abs(lens_volume(r1, r2, d) / spec.volume - frac) <= 4 * se + 1e-3


def test_ball_minus_ball_volume_matches_hit_rate():
    spec = SamplerSpec("ball-minus-ball", (0, 0, 0.3), 1.0, center2=(0, 0, 0), radius2=0.8)
    box = np.random.default_rng(2).uniform(-1.4, 1.4, (400_000, 3))
    frac = spec.contains(box).mean()
    vol = frac * 2.8**3
    se = 2.8**3 * math.sqrt(frac * (1 - frac) / len(box))
    assert abs(vol - spec.volume) <= 4 * se
    pts = sample_uniform(spec, np.random.default_rng(3), 5000)
    assert spec.contains(pts).all()


def test_space_sampler_integrates_decaying_function():
    # ∫ (1 + |x|^2)^-2 dx = π^2
    est = estimate(lambda x: (1.0 + np.einsum("ij,ij->i", x, x)) ** -2,
                   [SamplerSpec("space", radius=1.0)], RunBudget(400_000, 1e-9), seed=9)
    assert within(est, math.pi**2)


def test_non_finite_integrand_reports_point():
    with pytest.raises(NonFiniteIntegrandError, match="at"):
        estimate(lambda x: np.full(len(x), np.nan), [SamplerSpec("ball")], 1000)


def test_reproducible_and_worker_independent():
    f = lambda x: np.cos(x[:, 0]) ** 2
    b1 = RunBudget(300_000, 1e-9, batch_size=1 << 14, workers=1)
    b3 = RunBudget(300_000, 1e-9, batch_size=1 << 14, workers=3)
    a = estimate(f, [SamplerSpec("ball")], b1, seed=42)
    b = estimate(f, [SamplerSpec("ball")], b1, seed=42)
    c = estimate(f, [SamplerSpec("ball")], b3, seed=42)
    assert a == b == c
    d = estimate(f, [SamplerSpec("ball")], b1, seed=43)
    assert d.value != a.value


def test_streams_uncorrelated():
    c = RngContract(123)
    x = c.generator(0).standard_normal(200_000)
    y = c.generator(1).standard_normal(200_000)
    r = np.corrcoef(x, y)[0, 1]
    assert abs(r) < 4 / math.sqrt(len(x))


def test_seed_range_checked():
    with pytest.raises(ValueError):
        RngContract(-1)
    RngContract(2**64 - 1).generator(0)


def test_error_halves_when_samples_quadruple():
    draw = lambda rng, n: rng.random(n) ** 2
    e1 = estimate_draws(draw, RunBudget(1 << 16, 1e-12, batch_size=1 << 12), seed=7)
    e2 = estimate_draws(draw, RunBudget(1 << 18, 1e-12, batch_size=1 << 12), seed=8)
    assert e2.n_samples == 4 * e1.n_samples
    assert e1.std_error / e2.std_error == pytest.approx(2.0, rel=0.2)


def test_budget_exhausted_flag():
    draw = lambda rng, n: rng.random(n)
    est = estimate_draws(draw, RunBudget(4096, 1e-9, batch_size=1024), seed=0)
    assert "budget-exhausted" in est.flags
    assert est.n_samples == 4096


def test_estimate_arithmetic():
    a = IntegralEstimate(1.0, 0.3, 10, "mc-uniform", 1)
    b = IntegralEstimate(2.0, 0.4, 20, "quadrature", 2)
    s = a + b
    assert s.value == 3.0 and s.std_error == pytest.approx(0.5) and s.method == "mixed"
    assert a.scaled(-2).std_error == pytest.approx(0.6)
    assert a.agrees_with(IntegralEstimate(2.0, 0.0, 1, "exact"))
    with pytest.raises(ValueError):
        IntegralEstimate(1.0, -1.0, 1, "exact")


@given(st.lists(st.floats(-1e12, 1e12, allow_nan=False), min_size=1, max_size=200))
def test_compensated_sum_matches_fsum(xs):
    acc = CompensatedSum()
    acc.extend(xs)
    exact = math.fsum(xs)
    assert compensated_sum(xs) == exact
    assert abs(acc.value - exact) <= 1e-3 * (1 + abs(exact)) + 1e-9 * max(map(abs, xs))


def test_compensated_sum_cancellation():
    xs = [1e16, 1.0, -1e16] * 100
    acc = CompensatedSum()
    acc.extend(xs)
    assert acc.value == 100.0
    assert sum(xs) != 100.0
