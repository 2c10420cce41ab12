import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from subfrac import jets
from subfrac.fnspec import DslError, build_fn, format_call, parse_fn

pos = st.floats(0.05, 20.0, allow_nan=False)
small = st.floats(-2.0, 2.0, allow_nan=False)


def descriptors():
    g = st.builds(lambda a: format_call("gaussian", {"a": a}), pos)
    pg = st.builds(
        lambda gam, a: format_call("poly_gauss", {"gamma": gam, "a": a}),
        st.lists(st.integers(0, 3), min_size=3, max_size=3),
        pos,
    )
    k = st.just("koranyi_gauss()")
    base = st.one_of(g, pg, k)
    tr = st.builds(lambda b, z: f"translate(base={b};z={format_call('', {'z': z})[3:-1]})",
                   base, st.lists(small, min_size=3, max_size=3))
    return st.one_of(base, tr)


@given(descriptors())
def test_descriptor_roundtrip(text):
    phi = build_fn(text)
    again = build_fn(phi.descriptor())
    assert again == phi
    assert parse_fn(phi.descriptor()) == parse_fn(text)


def test_defaults_and_whitespace():
    assert build_fn(" gaussian ( ) ") == jets.Gaussian(1.0)
    phi = build_fn("poly_gauss(gamma=[2, 0, 1]; a=0.5)")
    assert phi == jets.PolyGauss((2, 0, 1), 0.5)
    x = np.array([0.3, -0.1, 0.2])
    assert phi(x) == pytest.approx(0.09 * 0.2 * np.exp(-0.5 * 0.14))


def test_translate_is_left_translation():
    phi = build_fn("translate(base=gaussian(a=1.0);z=[0.5,0.0,0.1])")
    x = np.array([0.1, 0.4, -0.3])
    z = np.array([0.5, 0.0, 0.1])
    from subfrac import hgroup

    assert phi(x) == pytest.approx(jets.Gaussian(1.0)(hgroup.group_mul(z, x)))


@pytest.mark.parametrize(
    "text, offset, fragment",
    [
        ("gauss(a=1)", 0, "unknown function"),
        ("gaussian(b=1)", 9, "unknown parameter"),
        ("gaussian(a=1;a=2)", 13, "duplicate"),
        ("gaussian(a=x)", 11, "expected a number"),
        ("poly_gauss(a=1)", 0, "missing required"),
        ("poly_gauss(gamma=[1.5,0,0])", 18, "expected an integer"),
        ("gaussian(a=1) extra", 14, "trailing input"),
        ("gaussian(a=1", 12, "expected ';' or ')'"),
        ("gaussian(a=1)#", 13, "unexpected character"),
        ("gaussian(a=-1)", 0, "invalid parameters"),
        ("poly_gauss(gamma=[1,0])", 0, "invalid parameters"),
    ],
)
def test_errors_carry_byte_offsets(text, offset, fragment):
    with pytest.raises(DslError) as info:
        parse_fn(text)
    assert info.value.offset == offset
    assert fragment in info.value.reason


def test_offset_points_at_non_ascii_input():
    with pytest.raises(DslError) as info:
        parse_fn("gaussian(a=1)é")
    assert info.value.offset == 13
    with pytest.raises(DslError) as info:
        parse_fn("gaussian(é=1)")
    assert info.value.offset == 9
