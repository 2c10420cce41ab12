"""Gauss rules and composite panels used across the package."""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_jacobi


@functools.lru_cache(maxsize=None)
def gauss_legendre(m: int):
    x, w = np.polynomial.legendre.leggauss(m)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


@functools.lru_cache(maxsize=None)
def gauss_hermite(m: int):
    """Nodes/weights for int f(x) exp(-x^2) dx."""
    x, w = np.polynomial.hermite.hermgauss(m)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def panels(edges, m: int):
    """Composite Gauss-Legendre rule on consecutive intervals given by ``edges``."""
    edges = np.asarray(edges, dtype=float)
    x, w = gauss_legendre(m)
    a = edges[:-1, None]
    b = edges[1:, None]
    half = 0.5 * (b - a)
    nodes = (a + b) * 0.5 + half * x[None, :]
    weights = half * w[None, :]
    return nodes.ravel(), weights.ravel()


def uniform_panels(a: float, b: float, npanel: int, m: int):
    return panels(np.linspace(a, b, npanel + 1), m)


def jacobi_start(r1: float, beta: float, m: int):
    """Rule for int_0^{r1} r^beta f(r) dr, returning nodes and weights that already include r^beta."""
    x, w = roots_jacobi(m, 0.0, beta)
    r = 0.5 * r1 * (x + 1.0)
    return r, w * (0.5 * r1) ** (beta + 1.0)


def trapezoid_circle(m: int, offset: float = 0.5):
    """Equispaced angles on [0, 2pi) with equal weights; exact for trig polynomials of degree < m."""
    th = 2.0 * np.pi * (np.arange(m) + offset) / m
    return th, np.full(m, 2.0 * np.pi / m)


@dataclass(frozen=True)
class DirectionRule:
    """Quadrature on the Euclidean unit sphere S^{2n} of H^n.

    ``points`` has shape (J, 2n+1).  When ``kind`` is ``"mc"`` the weights are
    equal and ``pairs`` lists index pairs related by z -> -z, used for
    antithetic error estimates.
    """

    points: np.ndarray
    weights: np.ndarray
    kind: str
    pairs: np.ndarray | None = None


@functools.lru_cache(maxsize=None)
def sphere_product_rule(n_mu: int, n_theta: int) -> DirectionRule:
    """Product rule on S^2 (n = 1): Gauss-Legendre in the center component, trapezoid in the angle.

    The angle count must be even so that z -> -z maps the rule to itself.
    """
    if n_theta % 2:
        raise ValueError("n_theta must be even")
    mu, wm = gauss_legendre(n_mu)
    th, wt = trapezoid_circle(n_theta)
    M, TH = np.meshgrid(mu, th, indexing="ij")
    s = np.sqrt(1.0 - M * M)
    pts = np.stack([s * np.cos(TH), s * np.sin(TH), M], axis=-1).reshape(-1, 3)
    w = (wm[:, None] * wt[None, :]).ravel()
    return DirectionRule(pts, w, "product")


def sphere_area(dim: int) -> float:
    """Surface area of the unit sphere S^{dim} in R^{dim+1}."""
    from math import gamma, pi

    k = dim + 1
    return 2.0 * pi ** (k / 2) / gamma(k / 2)


def sphere_mc_rule(n: int, count: int, seed: int) -> DirectionRule:
    """Random directions on S^{2n} with horizontal antithetic partners."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0x5F3])))
    half = count // 2
    g = rng.standard_normal((half, 2 * n + 1))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    h = g.copy()
    h[:, :-1] *= -1.0
    pts = np.concatenate([g, h])
    w = np.full(2 * half, sphere_area(2 * n) / (2 * half))
    pairs = np.stack([np.arange(half), np.arange(half) + half], axis=1)
    return DirectionRule(pts, w, "mc", pairs)
