import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from subfrac import quad


@given(st.integers(1, 40), st.integers(0, 20))
def test_gauss_legendre_exact_for_polynomials(m, k):
    x, w = quad.gauss_legendre(m)
    if k <= 2 * m - 1:
        exact = 2.0 / (k + 1) if k % 2 == 0 else 0.0
        assert np.dot(w, x**k) == pytest.approx(exact, abs=1e-13)


def test_gauss_hermite_moments():
    x, w = quad.gauss_hermite(20)
    assert np.dot(w, x**4) == pytest.approx(0.75 * math.sqrt(math.pi), rel=1e-14)


def test_panels_integrate_exp():
    x, w = quad.uniform_panels(0.0, 3.0, 5, 10)
    assert np.dot(w, np.exp(x)) == pytest.approx(math.exp(3.0) - 1.0, rel=1e-14)


@pytest.mark.parametrize("beta", [-0.7, 0.0, 2.5, 6.3])
def test_jacobi_start_absorbs_the_singular_weight(beta):
    r, w = quad.jacobi_start(1.5, beta, 16)
    exact = 1.5 ** (beta + 2) / (beta + 2)  # int_0^1.5 r^beta * r dr
    assert np.dot(w, r) == pytest.approx(exact, rel=1e-13)


def test_sphere_area():
    assert quad.sphere_area(1) == pytest.approx(2 * math.pi)
    assert quad.sphere_area(2) == pytest.approx(4 * math.pi)
    assert quad.sphere_area(4) == pytest.approx(8 * math.pi**2 / 3)


def test_product_rule_on_s2():
    rule = quad.sphere_product_rule(16, 16)
    p = rule.points
    assert np.allclose(np.linalg.norm(p, axis=1), 1.0)
    assert np.sum(rule.weights) == pytest.approx(4 * math.pi, rel=1e-14)
    assert np.dot(rule.weights, p[:, 0] ** 2 * p[:, 2] ** 2) == pytest.approx(4 * math.pi / 15, rel=1e-13)
    with pytest.raises(ValueError):
        quad.sphere_product_rule(8, 7)


def test_mc_rule_is_antithetic_and_reproducible():
    a = quad.sphere_mc_rule(2, 1000, seed=3)
    b = quad.sphere_mc_rule(2, 1000, seed=3)
    np.testing.assert_array_equal(a.points, b.points)
    i, j = a.pairs[:, 0], a.pairs[:, 1]
    np.testing.assert_allclose(a.points[i, :-1], -a.points[j, :-1])
    np.testing.assert_allclose(a.points[i, -1], a.points[j, -1])
    assert np.sum(a.weights) == pytest.approx(quad.sphere_area(4))
