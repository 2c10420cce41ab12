import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from subfrac import hgroup, jets
from strategies import points

PHIS = [
    jets.Gaussian(1.0),
    jets.PolyGauss((2, 0, 1), 0.7),
    jets.KoranyiGauss(),
    jets.Translated(jets.Gaussian(0.8), (0.4, -0.2, 0.3)),
]


def fd_word(phi, word, x, h=1e-2):
    """Z_w phi(x) by nested central differences along left-invariant flows."""
    if not word:
        return float(phi(x))
    q = x.size
    i = word[0]
    e = np.zeros(q)
    e[i - 1] = 1.0
    # fourth-order central stencil
    vals = []
    for s in (-2, -1, 1, 2):
        vals.append(fd_word(phi, word[1:], hgroup.group_mul(x, s * h * e), h))
    return (vals[0] - 8 * vals[1] + 8 * vals[2] - vals[3]) / (12 * h)


@pytest.mark.parametrize("phi", PHIS, ids=lambda p: p.name)
@pytest.mark.parametrize("word", [(1,), (3,), (2, 1), (1, 2), (3, 1), (1, 1, 2)])
def test_frame_words_match_finite_differences(phi, word):
    x = np.array([0.3, -0.4, 0.2])
    assert jets.apply_word(phi, word, x) == pytest.approx(fd_word(phi, word, x), rel=1e-5, abs=1e-7)


@given(points(), st.sampled_from(PHIS))
def test_bracket_is_the_center_field(x, phi):
    # [X, Y] = T on H^1
    xy = jets.apply_word(phi, (1, 2), x)
    yx = jets.apply_word(phi, (2, 1), x)
    t = jets.apply_word(phi, (3,), x)
    assert xy - yx == pytest.approx(t, abs=1e-10 * (1 + abs(t) + abs(xy)))


def test_bracket_on_h2():
    phi = jets.Gaussian(0.5)
    x = np.array([0.1, 0.2, -0.3, 0.4, 0.5])
    assert jets.apply_word(phi, (1, 3), x) - jets.apply_word(phi, (3, 1), x) == pytest.approx(
        jets.apply_word(phi, (5,), x))
    # commuting pair from different planes
    assert jets.apply_word(phi, (1, 4), x) == pytest.approx(jets.apply_word(phi, (4, 1), x))


def test_sublaplacian_of_gaussian_at_origin():
    # L exp(-a|x|^2) at 0 equals 2a times the horizontal dimension
    for n, a in [(1, 1.0), (2, 0.3)]:
        x = np.zeros(2 * n + 1)
        assert jets.sublaplacian_power(jets.Gaussian(a), 1, x) == pytest.approx(4 * n * a)


@pytest.mark.parametrize("phi", PHIS[:2], ids=lambda p: p.name)
def test_sublaplacian_power_composes(phi):
    x = np.array([0.2, 0.1, -0.3])
    lap = -sum(fd_word(phi, (i, i), x) for i in (1, 2))
    assert jets.sublaplacian_power(phi, 1, x) == pytest.approx(lap, rel=1e-6)
    # L^2 via words
    l2 = sum(jets.apply_word(phi, (i, i, j, j), x) for i in (1, 2) for j in (1, 2))
    assert jets.sublaplacian_power(phi, 2, x) == pytest.approx(l2, rel=1e-12)


def test_jet_arithmetic_matches_taylor_series():
    t = jets.Jet.variable(1, 8, 0, value=0.3)
    e = (t * 2.0).exp()
    coeffs = [math.exp(0.6) * 2**k / math.factorial(k) for k in range(9)]
    np.testing.assert_allclose(e.coeffs, coeffs, rtol=1e-14)
    p = (t + 1.0) ** 3
    np.testing.assert_allclose(p.coeffs[:4], [1.3**3, 3 * 1.3**2, 3 * 1.3, 1.0])
    assert np.all(p.coeffs[4:] == 0)
    with pytest.raises(TypeError):
        t / t
    with pytest.raises(jets.JetOrderError):
        t.truncate(9)


def test_word_enumeration_counts():
    words = jets.words_up_to(1, 4)
    assert all(jets.word_weight(w, 1) <= 4 for w in words)
    # horizontal words only: 1 + 2 + 4 + 8 + 16; with T letters added
    by_len = {}
    for w in words:
        by_len[jets.word_weight(w, 1)] = by_len.get(jets.word_weight(w, 1), 0) + 1
    # counts satisfy c_k = 2 c_{k-1} + c_{k-2}
    assert [by_len[k] for k in range(5)] == [1, 2, 5, 12, 29]


@pytest.mark.parametrize("phi", PHIS, ids=lambda p: p.name)
@pytest.mark.parametrize("deg", [1, 3, 5])
def test_ztaylor_remainder_has_the_right_order(phi, deg):
    x = np.array([0.25, -0.15, 0.1])
    T = jets.ztaylor(phi, x, deg)
    omega = np.array([0.6, 0.48, 0.64])
    errs = []
    rs = np.array([0.08, 0.04, 0.02])
    for r in rs:
        y = hgroup.dilate(r, omega)
        errs.append(abs(float(phi(hgroup.group_mul(x, y))) - float(T(y))))
    slope = np.polyfit(np.log(rs), np.log(errs), 1)[0]
    assert slope > deg + 0.7


@pytest.mark.parametrize("phi", PHIS, ids=lambda p: p.name)
def test_radial_series_agrees_with_ztaylor(phi):
    x = np.array([0.25, -0.15, 0.1])
    rng = np.random.default_rng(1)
    om = rng.normal(size=(12, 3))
    om /= np.linalg.norm(om, axis=1, keepdims=True)
    d = 7
    f = phi.radial_series(x, om, 10)
    t = jets.ztaylor(phi, x, d).on_directions(om)
    np.testing.assert_allclose(f[: d + 1], t, atol=1e-11, rtol=1e-10)


def test_radial_series_reproduces_the_function():
    phi = jets.Gaussian(1.0)
    x = np.array([0.2, 0.3, -0.1])
    om = np.array([[0.0, 0.6, 0.8]])
    f = phi.radial_series(x, om, 12)[:, 0]
    r = 0.2
    approx = sum(f[k] * r**k for k in range(13))
    assert approx == pytest.approx(float(phi(hgroup.group_mul(x, hgroup.dilate(r, om[0])))), rel=1e-9)


@given(points(), st.sampled_from([(1, 2), (2, 1)]))
def test_commutator_identity(x, ij):
    res = jets.commutator_identity_check(jets.Gaussian(1.0), ij[0], ij[1], x)
    assert res.relative <= 1e-10


def test_commutator_identity_on_h2_commuting_pair():
    x = np.array([0.1, -0.2, 0.3, 0.05, 0.2])
    assert jets.commutator_identity_check(jets.Gaussian(1.0), 1, 2, x).relative <= 1e-10
    assert jets.commutator_identity_check(jets.Gaussian(1.0), 1, 3, x).relative <= 1e-10
    with pytest.raises(ValueError):
        jets.commutator_identity_check(jets.Gaussian(1.0), 1, 5, x)


def test_order_limits():
    x = np.zeros(3)
    with pytest.raises(jets.JetOrderError):
        jets.apply_word(jets.Gaussian(), (1,) * 9, x)
    with pytest.raises(jets.JetOrderError):
        jets.ztaylor(jets.Gaussian(), x, 8)
    with pytest.raises(ValueError):
        jets.apply_word(jets.Gaussian(), (4,), x)
