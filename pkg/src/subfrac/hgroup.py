"""Exact arithmetic of the Heisenberg group H^n in exponential coordinates.

A point is a length ``2n+1`` vector ``(x_1..x_n, x_{n+1}..x_{2n}, x_{2n+1})``.
The first ``2n`` entries are horizontal, the last one is the center.
All functions accept arrays whose last axis holds the coordinates, so a
batch of points is just a ``(..., 2n+1)`` array.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GroupConfig:
    """Dimension data for H^n."""

    n: int

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")

    @property
    def q(self) -> int:
        """Number of coordinates."""
        return 2 * self.n + 1

    @property
    def Q(self) -> int:
        """Homogeneous dimension."""
        return 2 * self.n + 2


def dim_of(x) -> int:
    """Return n for a point (or batch of points) with 2n+1 coordinates."""
    q = np.shape(x)[-1]
    if q < 3 or q % 2 == 0:
        raise ValueError(f"a point of H^n has an odd number >= 3 of coordinates, got {q}")
    return (q - 1) // 2


def as_point(x, n: int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    m = dim_of(x)
    if n is not None and m != n:
        raise ValueError(f"expected a point of H^{n}, got {x.shape[-1]} coordinates")
    if not np.all(np.isfinite(x)):
        raise ValueError("point coordinates must be finite")
    return x


def symplectic(a, b):
    """omega(a, b) = sum_i a_i b_{i+n} - a_{i+n} b_i over the horizontal layer."""
    n = dim_of(a)
    return np.sum(a[..., :n] * b[..., n:2 * n] - a[..., n:2 * n] * b[..., :n], axis=-1)


def group_mul(a, b) -> np.ndarray:
    """Group product a*b; horizontal parts add, the center picks up half the area."""
    a = as_point(a)
    b = as_point(b)
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]} coordinates")
    out = a + b
    out[..., -1] += 0.5 * symplectic(a, b)
    return out


def group_mul_coords(a, b):
    """Group product on coordinate lists of ring elements (floats, jets, series).

    This is the same formula as :func:`group_mul`, written without numpy
    indexing so it can act on truncated Taylor objects.
    """
    if len(a) != len(b):
        raise ValueError(f"dimension mismatch: {len(a)} vs {len(b)} coordinates")
    q = len(a)
    n = (q - 1) // 2
    out = [a[i] + b[i] for i in range(q)]
    area = 0.0
    for i in range(n):
        area = area + a[i] * b[i + n] - a[i + n] * b[i]
    out[-1] = out[-1] + 0.5 * area
    return out


def inverse(x) -> np.ndarray:
    """x^{-1} = -x in exponential coordinates."""
    return -as_point(x)


def dilate(r, x) -> np.ndarray:
    """delta_r: horizontal coordinates times r, center times r^2."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("dilation factor must be positive")
    x = as_point(x)
    out = x * r[..., None] if r.ndim else x * r
    out = np.array(out)
    out[..., -1] *= r
    return out


def horizontal_norm(x) -> np.ndarray:
    """|pi_H1(x)|, the Euclidean norm of the horizontal part."""
    x = as_point(x)
    return np.sqrt(np.sum(x[..., :-1] ** 2, axis=-1))


def koranyi_norm(x) -> np.ndarray:
    """Koranyi gauge (|z|^4 + u^2)^(1/4)."""
    x = as_point(x)
    z2 = np.sum(x[..., :-1] ** 2, axis=-1)
    return (z2 * z2 + x[..., -1] ** 2) ** 0.25


def weight(gamma) -> int:
    """Homogeneous weight of a monomial exponent: horizontal degree plus twice the center degree."""
    gamma = tuple(int(g) for g in gamma)
    return sum(gamma[:-1]) + 2 * gamma[-1]


def polar_radius(x) -> np.ndarray:
    """Homogeneous radius r with x = delta_r(omega) and omega on the Euclidean unit sphere.

    Solves |z|^2/r^2 + u^2/r^4 = 1, i.e. r^2 = (|z|^2 + sqrt(|z|^4 + 4u^2))/2.
    """
    x = as_point(x)
    z2 = np.sum(x[..., :-1] ** 2, axis=-1)
    u = x[..., -1]
    return np.sqrt(0.5 * (z2 + np.sqrt(z2 * z2 + 4.0 * u * u)))


def to_polar(x):
    """Split x != 0 into (r, omega) with x = delta_r(omega) and |omega| = 1."""
    x = as_point(x)
    r = polar_radius(x)
    if np.any(r == 0):
        raise ValueError("the origin has no polar decomposition")
    return r, dilate(1.0 / r, x)


def from_polar(r, omega) -> np.ndarray:
    return dilate(r, omega)


def polar_jacobian(omega) -> np.ndarray:
    """Density of Lebesgue measure in homogeneous polar coordinates.

    dx = r^(Q-1) (1 + omega_c^2) dr dsigma(omega) where sigma is surface measure
    on the Euclidean unit sphere and omega_c the center component.
    """
    omega = as_point(omega)
    return 1.0 + omega[..., -1] ** 2


def rotation_block(angles) -> np.ndarray:
    """Horizontal rotation acting on each symplectic plane (x_i, x_{i+n}) by its own angle.

    Returns a (2n+1, 2n+1) matrix that fixes the center; such maps are group automorphisms.
    """
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    n = angles.size
    R = np.eye(2 * n + 1)
    for i, a in enumerate(angles):
        c, s = np.cos(a), np.sin(a)
        R[i, i], R[i, i + n] = c, -s
        R[i + n, i], R[i + n, i + n] = s, c
    return R
