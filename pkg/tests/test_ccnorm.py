import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from subfrac import ccnorm, hgroup
from strategies import nonzero_points, points, scales


def test_axes():
    assert ccnorm.cc_norm([1.0, 0.0, 0.0]) == pytest.approx(1.0)
    assert ccnorm.cc_norm([0.0, 0.0, 1.0]) == pytest.approx(2.0 * math.sqrt(math.pi))
    assert ccnorm.cc_norm([0.0, 0.0, 0.0]) == 0.0


def test_known_arc():
    # theta = pi/2: a half circle of diameter |z| encloses area pi |z|^2 / 8, so |u| = pi |z|^2 / 8
    z = 2.0
    u = math.pi * z * z / 8.0
    r = ccnorm.cc_eval([z, 0.0, u])
    assert r.theta == pytest.approx(math.pi / 2, rel=1e-10)
    assert r.value == pytest.approx(math.pi / 2 * z, rel=1e-10)


@given(nonzero_points(2), scales)
def test_homogeneous(x, r):
    assert ccnorm.cc_norm(hgroup.dilate(r, x)) == pytest.approx(r * ccnorm.cc_norm(x), rel=1e-9)


@given(points(), points())
def test_triangle_inequality(a, b):
    lhs = ccnorm.cc_norm(hgroup.group_mul(a, b))
    assert lhs <= ccnorm.cc_norm(a) + ccnorm.cc_norm(b) + 1e-9


@given(points(2), st.lists(st.floats(-3, 3), min_size=2, max_size=2))
def test_rotation_and_inverse_invariance(x, angles):
    c = ccnorm.cc_norm(x)
    assert ccnorm.cc_norm(hgroup.rotation_block(angles) @ x) == pytest.approx(c, rel=1e-10, abs=1e-14)
    assert ccnorm.cc_norm(hgroup.inverse(x)) == pytest.approx(c, rel=1e-12, abs=1e-14)


def test_continuous_in_the_center_coordinate():
    u = np.linspace(-2.0, 2.0, 4001)
    x = np.stack([np.full_like(u, 0.7), np.zeros_like(u), u], axis=-1)
    c = ccnorm.cc_norm(x)
    assert np.max(np.abs(np.diff(c))) < 5e-3
    # close to the center axis the norm approaches 2 sqrt(pi |u|)
    assert ccnorm.cc_norm([1e-8, 0.0, 1.0]) == pytest.approx(2.0 * math.sqrt(math.pi), rel=1e-7)


def test_dominates_the_koranyi_gauge_up_to_a_constant(rng):
    sample = rng.normal(size=(2000, 3)) * rng.uniform(0.1, 5.0, size=(2000, 1))
    lo, hi = ccnorm.cc_equivalence_constant(sample)
    # extremes: 1/(2 sqrt(pi)) on the center axis, 1 on the horizontal layer
    assert 1.0 / (2.0 * math.sqrt(math.pi)) - 1e-12 <= lo <= hi <= 1.0 + 1e-12
    assert hi > 0.9 and lo < 0.3
    with pytest.raises(ValueError):
        ccnorm.cc_equivalence_constant(np.zeros((1, 3)))


@pytest.mark.parametrize("z", [1e-300, 1.4e-150, 1e-20, 1e-11, 1e-6])
def test_near_center_axis(z):
    # ||(z, u)||_c = 2 sqrt(pi |u|) - |z| + O(|z|^2) as z -> 0
    v = float(ccnorm.cc_norm([0.0, z, 1.0]))
    assert v == pytest.approx(2.0 * math.sqrt(math.pi) - z, rel=1e-13)


def test_continuous_across_thin_branch():
    zs = 2e-10 * np.array([1.0 - 1e-9, 1.0 + 1e-9])
    v, _ = ccnorm.cc_norm_zu(zs, np.ones(2))
    assert abs(v[1] - v[0]) < 1e-12
