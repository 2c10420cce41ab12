import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from subfrac import heatkernel, hgroup, riesz
from strategies import nonzero_points, scales


@given(st.floats(-30.0, 30.0).filter(lambda z: abs(z - round(z)) > 1e-6 or z > 0.5))
def test_gamma_matches_scipy(z):
    assert riesz.gamma(z) == pytest.approx(special.gamma(z), rel=5e-14)


@pytest.mark.parametrize("z", [0.0, -1.0, -2.0, -7.0])
def test_gamma_poles(z):
    with pytest.raises(riesz.PoleError):
        riesz.gamma(z)
    assert riesz.rgamma(z) == 0.0


@pytest.mark.parametrize("m", [0, 1, 2, 3])
def test_pole_residue_limit(m):
    eps = 1e-6
    a = -2.0 * m + eps
    assert 1.0 / (eps * riesz.gamma(a / 2.0)) == pytest.approx(riesz.pole_residue_limit(m), rel=1e-5)


def test_alpha_domain():
    d = riesz.AlphaDomain(-4.0, 1)
    assert d.Q == 4 and d.valid and d.at_pole
    with pytest.raises(riesz.PoleError):
        d.check(allow_pole=False)
    with pytest.raises(ValueError):
        riesz.AlphaDomain(4.0, 1).check()
    assert not riesz.AlphaDomain(1.5, 1).at_pole


def fundamental_solution_constant(n):
    return 2.0 ** (n - 2) * math.gamma(n / 2.0) ** 2 / math.pi ** (n + 1)


@pytest.mark.parametrize("n", [1, 2])
def test_p2_is_the_fundamental_solution(n):
    x = np.random.default_rng(n).normal(size=(8, 2 * n + 1))
    z2 = np.sum(x[:, :-1] ** 2, axis=1)
    gauge = (z2 * z2 + 16.0 * x[:, -1] ** 2) ** 0.25
    np.testing.assert_allclose(riesz.p_alpha(2.0, x) * gauge ** (2 * n), fundamental_solution_constant(n), rtol=1e-11)


@pytest.mark.parametrize("alpha", [-7.5, -3.0, -1.0, 0.5, 1.0, 3.5])
def test_radial_and_time_routes_agree(alpha):
    x = np.array([0.3, 0.2, 0.5])
    assert riesz.radial_I(alpha, x) == pytest.approx(riesz.time_I(alpha, x), rel=1e-11)


@settings(max_examples=15)
@given(nonzero_points(), scales, st.sampled_from([-3.0, 1.0, 3.0]))
def test_I_is_homogeneous(x, r, alpha):
    lhs = riesz.radial_I(alpha, hgroup.dilate(r, x))
    rhs = r ** (alpha - 4.0) * riesz.radial_I(alpha, x)
    assert lhs == pytest.approx(rhs, rel=1e-11)


@pytest.mark.parametrize("alpha", [-5.0, 1.0])
def test_profile_matches_direct(alpha):
    x = np.random.default_rng(4).normal(size=(10, 3))
    np.testing.assert_allclose(riesz.alpha_norm(alpha, x, "profile"), riesz.alpha_norm(alpha, x), rtol=1e-11)


def test_alpha_norm_is_a_symmetric_homogeneous_gauge():
    x = np.array([[0.4, -0.7, 0.9], [2.0, 0.1, -0.3]])
    v = riesz.alpha_norm(1.0, x, "profile")
    np.testing.assert_allclose(riesz.alpha_norm(1.0, hgroup.inverse(x), "profile"), v, rtol=1e-13)
    np.testing.assert_allclose(riesz.alpha_norm(1.0, hgroup.dilate(2.5, x), "profile"), 2.5 * v, rtol=1e-11)
    R = hgroup.rotation_block([0.7])
    np.testing.assert_allclose(riesz.alpha_norm(1.0, x @ R.T, "profile"), v, rtol=1e-11)


def test_kernel_at_poles_is_refused():
    with pytest.raises(riesz.PoleError):
        riesz.p_alpha(-2.0, [1.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        riesz.p_alpha(1.0, [0.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        riesz.p_alpha(1.0, [1.0, 0.0, 0.0], method="bogus")


def test_horizontal_sphere_moments():
    assert riesz.horizontal_sphere_moment((2, 0)) == pytest.approx(math.pi)
    assert riesz.horizontal_sphere_moment((0, 0, 0, 0)) == pytest.approx(2 * math.pi**2)
    assert riesz.horizontal_sphere_moment((2, 2, 0, 0)) == pytest.approx(2 * math.pi**2 / 24)
    assert riesz.horizontal_sphere_moment((3, 1)) == 0.0


@pytest.mark.parametrize("n", [1, 2])
def test_sigma_at_zero_is_twice_the_mass(n):
    assert riesz.sigma(0.0, n).value == pytest.approx(2.0, rel=1e-12)


def test_boundary_moment_symmetry_and_errors():
    r = riesz.boundary_moment((1, 0, 2), 1.0)
    assert (r.value, r.method) == (0.0, "symmetry")
    with pytest.raises(ValueError):
        riesz.boundary_moment((2, 0, 0), 1.0, method="bogus")
    with pytest.raises(ValueError):
        riesz.d_alpha(1.0, 3, 1)


def test_quadrature_and_montecarlo_moments_agree():
    spec = heatkernel.SamplerSpec(paths=40000, steps=200, seed=2)
    for g, alpha in [((2, 0, 0), 1.0), ((0, 0, 2), -2.0), ((4, 0, 0), 0.0)]:
        q = riesz.boundary_moment(g, alpha)
        mc = riesz.boundary_moment(g, alpha, "montecarlo", spec)
        assert abs(q.value - mc.value) < 5 * mc.stderr + 0.01 * abs(q.value)


def test_symmetrized_estimator_is_unbiased_on_h2():
    spec = heatkernel.SamplerSpec(paths=20000, steps=100, seed=4)
    plain = riesz.boundary_moment((2, 2, 0, 0, 0), 0.0, "montecarlo", spec)
    sym = riesz.boundary_moment((2, 2, 0, 0, 0), 0.0, "montecarlo", spec, symmetrize=True)
    exact = riesz.boundary_moment((2, 2, 0, 0, 0), 0.0)
    assert abs(sym.value - exact.value) < 5 * sym.stderr
    assert sym.stderr < plain.stderr


def test_convolution_identity_small_sample():
    c = riesz.convolution_check(1.0, 1.0, [1.0, 0.0, 0.0], samples=200_000, seed=3)
    assert abs(c.rhs - c.lhs) < 5 * c.stderr
    assert c.lhs == pytest.approx(float(riesz.p_alpha(2.0, [1.0, 0.0, 0.0])))
    with pytest.raises(ValueError):
        riesz.convolution_check(3.0, 2.0, [1.0, 0.0, 0.0])
