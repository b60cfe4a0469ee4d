import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dilute_fermi.system import (
    ConfigError, CutoffPair, FermiSystem, SmearingSpec, chi_greater, chi_less, eta,
    excitation_energy, lam,
)

rhos = st.floats(1e-6, 1e-1)
vec = st.tuples(*[st.floats(-3, 3)] * 3)


def test_fermi_momentum_and_epsilon():
    s = FermiSystem(1e-3, 2e-3, 1.0, delta=0.3)
    assert s.kF_up == pytest.approx((6 * math.pi**2 * 1e-3) ** (1 / 3), rel=1e-15)
    assert s.epsilon == pytest.approx(3e-3 ** (2 / 3 + 0.3), rel=1e-15)
    assert s.x == pytest.approx(2 ** (1 / 3))


@pytest.mark.parametrize("kw, msg", [({"delta": 0.2}, "δ > 2/9"), ({"alpha": 0.0}, "0 < α < 1/27"),
                                     ({"alpha": 0.04}, "0 < α < 1/27")])
def test_constraints_named(kw, msg):
    with pytest.raises(ConfigError, match=msg):
        FermiSystem(1e-3, 1e-3, 1.0, **kw)


def test_bad_density():
    with pytest.raises(ConfigError):
        FermiSystem(0.0, 1e-3, 1.0)


@given(rhos, rhos)
def test_spin_exchange(ru, rd):
    s = FermiSystem(ru, rd, 1.0)
    t = s.swapped()
    assert (t.kF_up, t.kF_down) == (s.kF_down, s.kF_up)
    assert t.x == pytest.approx(1 / s.x)


def test_lambda_examples():
    assert lam([0.3, 0.1, 0.2], [0, 0, 0]) == 0.0
    assert lam([0, 0, 0], [0, 0, 2]) == 4.0
    assert lam([1, 0, 0], [-2, 0, 0]) == 0.0


def test_eta_examples():
    s = FermiSystem(1e-3, 1e-3, 0.5)
    r = np.zeros(3)
    assert eta(s, r, r, r) == pytest.approx(4 * math.pi * 0.5 / s.epsilon)
    assert eta(s.with_a(0.0), r, r, [1, 2, 3]) == 0.0
    # by hand: r, r' on the Fermi spheres, |p| = kF
    k = s.kF_up
    r = k * np.array([1.0, 0, 0])
    rp = k * np.array([0, 0.6, 0.8])
    p = k * np.array([0, 0, 1.0])
    l1 = abs(k * k + k * k - k * k)
    l2 = abs((0.36 + 0.04) * k * k - k * k)
    assert eta(s, r, rp, p) == pytest.approx(8 * math.pi * 0.5 / (l1 + l2 + 2 * s.epsilon), rel=1e-13)


@given(vec, vec, vec)
def test_eta_symmetry_and_positivity(r, rp, p):
    s = FermiSystem(1e-2, 1e-2, 1.0)
    v = eta(s, r, rp, p)
    assert v > 0
    assert v == pytest.approx(eta(s, rp, r, -np.asarray(p)), rel=1e-12)


def test_eta_monotone_in_epsilon():
    lo = FermiSystem(1e-2, 1e-2, 1.0, epsilon_override=1e-3)
    hi = FermiSystem(1e-2, 1e-2, 1.0, epsilon_override=1e-2)
    r, p = np.array([0.1, 0, 0]), np.array([0, 0.3, 0])
    assert eta(lo, r, r, p) > eta(hi, r, r, p)


def test_cutoff_plateaus():
    s = FermiSystem(1e-3, 1e-3, 1.0)
    t = s.rho ** (2 / 9)
    e = np.array([0, 0, 1.0])
    assert chi_less(s, 3 * t * e) == 1.0
    assert chi_less(s, 6 * t * e) == 0.0
    mid = chi_less(s, 4.5 * t * e)
    assert 0 < mid < 1
    assert chi_less(s, 4.4 * t * e) > mid > chi_less(s, 4.6 * t * e)
    assert chi_greater(s, 4.5 * t * e) == 1.0 - mid


@given(st.floats(0, 10), st.floats(0, 10))
def test_cutoff_monotone_partition(a, b):
    c = CutoffPair(2.0, 3.0)
    lo, hi = sorted((a, b))
    assert c.less_radial(lo) >= c.less_radial(hi)
    assert c.less_radial(a) + c.greater_radial(a) == 1.0


def test_excitation_energy():
    assert excitation_energy(1.0, [0.6, 0.8, 0]) == pytest.approx(0.0, abs=1e-15)
    assert excitation_energy(1.0, [0, 0, 0]) == 1.0
    assert excitation_energy(1.0, [0, 2, 0]) == 3.0
    assert excitation_energy(0.5, [0, 0, 1]) == 0.75


def test_ball_smearing_norms():
    assert SmearingSpec.ball((0.25, 0, 0), 0.5)(np.array([0.75, 0, 0])) == 1.0  # closed boundary
    g = SmearingSpec.ball((0.1, 0, 0), 0.3)
    assert g(np.array([0.41, 0, 0])) == 0.0
    assert g.norm_inf == 1.0
    # grid quadrature over a bounding box
    h = 0.6 / 120
    ax = -0.3 + h * (np.arange(120) + 0.5)
    pts = np.stack(np.meshgrid(ax + 0.1, ax, ax, indexing="ij"), -1).reshape(-1, 3)
    assert g(pts).sum() * h**3 == pytest.approx(g.norm_l2**2, rel=2e-3)
    assert g.norm_l2**2 == pytest.approx(4 * math.pi / 3 * 0.027)


def test_radial_profile_norms():
    g = SmearingSpec.radial((0, 0, 0), 1.0, lambda t: 1 - t)
    assert g.norm_inf == pytest.approx(1.0)
    # 4π ∫ t^2 (1-t)^2 dt = 4π/30
    assert g.norm_l2**2 == pytest.approx(4 * math.pi / 30, rel=1e-8)
    assert SmearingSpec.zero().is_zero


def test_smearing_radius():
    s = FermiSystem(1e-3, 1e-4, 1.0, alpha=0.03)
    assert s.ball_smearing(sigma="down").radius == pytest.approx(1e-4 ** (1 / 3 + 0.03))
