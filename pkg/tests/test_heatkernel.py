import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from subfrac import heatkernel as H
from subfrac import hgroup, jets
from strategies import points, scales

times = st.floats(0.1, 10.0)


def oracle(t, x):
    """Independent evaluation of the Fourier integral with adaptive quadrature."""
    x = np.asarray(x, dtype=float)
    n = (x.size - 1) // 2
    z2 = float(np.sum(x[:-1] ** 2))
    u = float(x[-1])

    def f(lam):
        if lam == 0.0:
            return (1.0 / (4.0 * math.pi * t)) ** n * math.exp(-z2 / (4.0 * t))
        return (lam / (4.0 * math.pi * math.sinh(lam * t))) ** n * math.exp(
            -0.25 * lam * z2 / math.tanh(lam * t)) * math.cos(lam * u)

    val, _ = integrate.quad(f, 0.0, 80.0 / t, limit=400, epsabs=1e-15, epsrel=1e-12)
    return val / math.pi


def test_value_at_origin():
    assert H.hk_eval(1.0, np.zeros(3)) == pytest.approx(1.0 / 16.0, rel=1e-14)
    assert H.kernel_eval(1.0, np.zeros(3)).value == pytest.approx(1.0 / 16.0, rel=1e-14)


def test_center_axis_closed_form():
    # h(1, (0, u)) = sech^2(pi u / 2) / 16 on H^1, checked deep into the tail
    u = np.concatenate([np.linspace(-4.0, 4.0, 17), [10.0, 40.0, -120.0]])
    x = np.stack([np.zeros_like(u), np.zeros_like(u), u], axis=-1)
    np.testing.assert_allclose(H.hk_eval(1.0, x), 1.0 / (16.0 * np.cosh(np.pi * u / 2) ** 2), rtol=1e-12)


@pytest.mark.parametrize("x", [[0.5, -0.3, 0.7], [2.0, 1.0, -3.0], [0.1, 0.2, 0.0, 0.3, 1.5], [3.0, 0, 0, 0, 0.2]])
@pytest.mark.parametrize("t", [0.5, 1.0, 3.0])
def test_matches_adaptive_quadrature(x, t):
    assert H.hk_eval(t, x) == pytest.approx(oracle(t, x), rel=1e-9, abs=1e-16)


def test_horizontal_marginal_is_gaussian():
    z = np.array([0.7, -0.4])
    val, _ = integrate.quad(lambda u: float(H.hk_eval(1.0, [z[0], z[1], u])), -60, 60, limit=200)
    assert val == pytest.approx(math.exp(-np.dot(z, z) / 4.0) / (4.0 * math.pi), rel=1e-9)


@given(times, points(), scales)
def test_dilation_law(t, x, s):
    lhs = H.hk_eval(s * s * t, hgroup.dilate(s, x))
    rhs = s ** -4 * H.hk_eval(t, x)
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-300)


@given(times, points(2), st.lists(st.floats(-3, 3), min_size=2, max_size=2))
def test_inverse_and_rotation_symmetry(t, x, angles):
    v = H.hk_eval(t, x)
    assert H.hk_eval(t, hgroup.inverse(x)) == pytest.approx(v, rel=1e-12, abs=1e-300)
    assert H.hk_eval(t, hgroup.rotation_block(angles) @ x) == pytest.approx(v, rel=1e-10, abs=1e-300)


def test_kernel_is_positive_far_out():
    x = np.array([[12.0, 0.0, 0.0], [0.0, 0.0, 40.0], [5.0, 5.0, 30.0]])
    assert np.all(H.hk_eval(1.0, x) > 0)
    assert H.hk_eval(1.0, [0.0, 0.0, 0.0, 0.0, 60.0]) > 0


@pytest.mark.parametrize("n", [1, 2])
def test_tail_values_keep_relative_accuracy(n):
    # deep-tail values against the dilation law, which mixes near and far evaluations
    rng = np.random.default_rng(n)
    x = rng.normal(size=(40, 2 * n + 1)) * 3.0
    for s in (1.7, 0.6):
        lhs = H.hk_eval(s * s, hgroup.dilate(s, x))
        rhs = s ** (-2 * n - 2) * H.hk_eval(1.0, x)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-10)


def test_absolute_mode_agrees_with_relative_mode():
    x = np.random.default_rng(0).normal(size=(4000, 3)) * 2.0
    v1 = H.hk_eval(1.0, x)
    v0 = H.hk_eval(1.0, x, relative=False)
    assert np.max(np.abs(v1 - v0)) < 1e-15


def test_pde_residual_refines_at_second_order():
    eps = np.array([0.04, 0.02, 0.01])
    for t, x in [(1.0, [0.3, -0.2, 0.5]), (0.7, [0.1, 0.4, -0.2, 0.0, 0.3])]:
        res = np.array([abs(H.pde_residual(t, x, e)) for e in eps])
        slope = np.polyfit(np.log(eps), np.log(res), 1)[0]
        assert slope == pytest.approx(2.0, abs=0.3)


def test_heat_rule_is_a_probability_measure():
    rule = H.heat_rule()
    assert np.sum(rule.weights) == pytest.approx(1.0, abs=1e-10)
    assert rule.moment((2, 0, 0)) == pytest.approx(2.0, rel=1e-10)
    assert rule.moment((1, 0, 0)) == 0.0


def test_quadrature_moments_scale_with_time():
    m1 = H.hk_moment((2, 0, 2), 1.0).value
    m3 = H.hk_moment((2, 0, 2), 3.0).value
    assert m3 == pytest.approx(27.0 * m1, rel=1e-12)
    assert H.hk_moment((1, 0, 2), 1.0).method == "symmetry"
    with pytest.raises(ValueError):
        H.hk_moment((2, 0, 0, 0, 0), 1.0, "quadrature")
    with pytest.raises(ValueError):
        H.hk_moment((2, 0, 0), 1.0, "bogus")


def test_sampler_streams_are_reproducible_and_worker_independent(tmp_path):
    spec = H.SamplerSpec(paths=3000, steps=50, seed=11, block=1000)
    a = np.concatenate(list(H.sample_diffusion(spec, 1)))
    b = np.concatenate(list(H.sample_diffusion(spec, 1, workers=2)))
    np.testing.assert_array_equal(a, b)
    other = np.concatenate(list(H.sample_diffusion(H.SamplerSpec(paths=3000, steps=50, seed=12, block=1000), 1)))
    assert not np.array_equal(a, other)
    c1 = H.sample_cloud(1, spec, str(tmp_path))
    files = list(tmp_path.iterdir())
    assert len(files) == 1 and files[0].name.endswith(".npy")
    H._CLOUDS.clear()
    c2 = H.sample_cloud(1, spec, str(tmp_path))
    np.testing.assert_array_equal(c1, c2)


def test_sampler_spec_validation():
    with pytest.raises(ValueError):
        H.SamplerSpec(paths=0)
    with pytest.raises(ValueError):
        H.SamplerSpec(seed=-1)
    assert H.SamplerSpec().digest(1) != H.SamplerSpec().digest(2)


def test_small_mc_moments_are_consistent():
    spec = H.SamplerSpec(paths=20000, steps=200, seed=5)
    e = H.hk_moment((2, 0, 0), 1.0, "montecarlo", spec)
    assert abs(e.value - 2.0) < 5 * e.stderr
    e = H.hk_moment((0, 0, 2), 1.0, "montecarlo", spec)
    assert abs(e.value - 1.0) < 5 * e.stderr + 0.02


def test_semigroup_routes_agree():
    phi = jets.Gaussian(1.0)
    x = np.array([0.3, -0.1, 0.2])
    ts = np.array([0.05, 0.5, 2.0, 20.0])
    quadv = H.heat_semigroup_quad(phi, ts, x)
    spec = H.SamplerSpec(paths=40000, steps=200, seed=3)
    for t, q in zip(ts, quadv):
        mc = H.heat_semigroup(phi, t, x, spec)
        assert abs(mc.value - q) < 5 * mc.stderr + 2e-3 * abs(q)
    # the semigroup at t -> 0 recovers phi
    assert H.heat_semigroup_quad(phi, [1e-6], x)[0] == pytest.approx(float(phi(x)), rel=1e-5)


def test_bad_times():
    with pytest.raises(ValueError):
        H.hk_eval(0.0, np.zeros(3))
    with pytest.raises(ValueError):
        H.heat_semigroup(jets.Gaussian(), -1.0, np.zeros(3), H.SamplerSpec(paths=10, steps=2))
