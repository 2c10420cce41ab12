"""Carnot-Caratheodory norm on H^n.

Geodesics from the origin project to circular arcs in the horizontal space.
For x = (z, u) with z != 0 and u != 0 the arc half-angle theta in (0, pi)
solves

    mu(theta) = (theta - sin(theta) cos(theta)) / sin(theta)^2 = 4|u| / |z|^2,

and the length is theta |z| / sin(theta).  On the axes the norm is |z|
(u = 0) and 2 sqrt(pi |u|) (z = 0).  Only |z| and |u| enter, so the norm is
invariant under horizontal rotations by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import hgroup

_ITERS = 200
_BRACKET = 1e-13
# beyond this mu(theta) = pi/eps^2 + pi/3 + O(eps^2) with eps = pi - theta is exact to roundoff
_THIN = 1e20


class CcRootError(RuntimeError):
    pass


@dataclass(frozen=True)
class CcEval:
    point: tuple
    value: float
    theta: float


def _x_minus_sin(x):
    """x - sin x without cancellation for small x."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 0.4
    xs = np.where(small, x, 0.0)
    x2 = xs * xs
    # series x^3/3! - x^5/5! + ... to x^17
    ser = np.zeros_like(xs)
    term = xs * x2 / 6.0
    k = 3
    for _ in range(8):
        ser = ser + term
        term = -term * x2 / ((k + 1) * (k + 2))
        k += 2
    return np.where(small, ser, x - np.sin(x))


def _mu_small(theta):
    # theta in (0, pi/2]: (theta - sin theta cos theta)/sin^2 theta = (2 theta - sin 2 theta)/(2 sin^2 theta)
    s = np.sin(theta)
    return _x_minus_sin(2.0 * theta) / (2.0 * s * s)


def _mu_large(eps):
    # theta = pi - eps with eps in (0, pi/2]
    s = np.sin(eps)
    return (np.pi - eps + s * np.cos(eps)) / (s * s)


def _bisect(f, target, lo, hi):
    """Vectorized bisection for increasing f; geometric midpoint while the bracket spans decades."""
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    for _ in range(_ITERS):
        geo = hi > 4.0 * lo
        mid = np.where(geo, np.sqrt(lo) * np.sqrt(hi), 0.5 * (lo + hi))
        up = f(mid) < target
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
        if np.all(hi - lo <= _BRACKET * np.maximum(hi, 1e-300)):
            break
    return lo, hi


def _solve(z, u):
    """Return (norm, theta) for arrays |z| > 0, |u| > 0."""
    out = np.empty(z.shape)
    theta = np.empty(z.shape)
    # compare in a form that cannot overflow for |z| near the underflow limit
    thin = z < 2.0 * np.sqrt(u / _THIN)
    if np.any(thin):
        eps = z[thin] * np.sqrt(np.pi / (4.0 * u[thin]))
        theta[thin] = np.pi - eps
        out[thin] = (np.pi - eps) * np.sqrt(4.0 * u[thin] / np.pi) * (eps / np.sin(eps))
    z, u = z[~thin], u[~thin]
    rest = np.flatnonzero(~thin)
    if rest.size == 0:
        return out, theta
    target = 4.0 * u / (z * z)
    o2, t2 = np.empty(z.shape), np.empty(z.shape)
    _solve_regular(z, target, o2, t2)
    out[rest], theta[rest] = o2, t2
    return out, theta


def _solve_regular(z, target, out, theta):
    mid = np.pi / 2.0  # mu(pi/2) = pi/2
    a = target <= mid
    if np.any(a):
        tg = target[a]
        lo, hi = _bisect(_mu_small, tg, np.full(tg.shape, 1e-300), np.full(tg.shape, mid))
        th = 0.5 * (lo + hi)
        if np.any(hi - lo > 1e-10 * hi):
            raise CcRootError(f"theta bracket too wide: [{lo.min()}, {hi.max()}]")
        theta[a] = th
        out[a] = th * z[a] / np.sin(th)
    b = ~a
    if np.any(b):
        tg = target[b]
        # eps = pi - theta is decreasing in mu, so bisect on -eps via mu_large(eps) decreasing
        lo, hi = _bisect(lambda e: -_mu_large(e), -tg, np.full(tg.shape, 1e-300), np.full(tg.shape, mid))
        eps = 0.5 * (lo + hi)
        if np.any(hi - lo > 1e-10 * hi):
            raise CcRootError(f"angle bracket too wide: [{lo.min()}, {hi.max()}]")
        theta[b] = np.pi - eps
        out[b] = (np.pi - eps) * z[b] / np.sin(eps)


def cc_norm_zu(zabs, uabs):
    """||x||_c from |z| and |u| (arrays)."""
    z = np.abs(np.asarray(zabs, dtype=float))
    u = np.abs(np.asarray(uabs, dtype=float))
    z, u = np.broadcast_arrays(z, u)
    out = np.zeros(z.shape)
    theta = np.zeros(z.shape)
    hz = (u == 0)
    out[hz] = z[hz]
    vz = (z == 0) & (u > 0)
    out[vz] = 2.0 * np.sqrt(np.pi * u[vz])
    theta[vz] = np.pi
    gen = (z > 0) & (u > 0)
    if np.any(gen):
        val, th = _solve(z[gen], u[gen])
        out[gen] = val
        theta[gen] = th
    return out, theta


def cc_norm(x) -> np.ndarray:
    """Carnot-Caratheodory distance from the origin (vectorized over leading axes)."""
    x = hgroup.as_point(x)
    val, _ = cc_norm_zu(hgroup.horizontal_norm(x), x[..., -1])
    return val


def cc_eval(x) -> CcEval:
    x = hgroup.as_point(x)
    val, th = cc_norm_zu(hgroup.horizontal_norm(x), x[..., -1])
    return CcEval(tuple(float(v) for v in x), float(val), float(th))


def cc_equivalence_constant(sample):
    """Empirical (min, max) of ||x||_K / ||x||_c over a sample of nonzero points."""
    sample = np.atleast_2d(hgroup.as_point(sample))
    if sample.shape[0] == 0:
        raise ValueError("empty sample")
    c = cc_norm(sample)
    if np.any(c == 0):
        raise ValueError("sample must exclude the origin")
    ratio = hgroup.koranyi_norm(sample) / c
    return float(ratio.min()), float(ratio.max())
