"""Truncated Taylor jets and the left-invariant frame of H^n.

A :class:`Jet` stores the Taylor coefficients of a function of ``nvars``
variables around a center, up to total degree ``order``.  Coefficients may
carry trailing batch axes, so the same class doubles as a vectorized
univariate series (``nvars == 1``) along many rays at once.

Frame fields act on jets exactly:

    X_j = d_j - (1/2) x_{j+n} d_{2n+1},   Y_j = d_{n+j} + (1/2) x_j d_{2n+1},   T = d_{2n+1}.

Each application lowers the valid order by one, so a word of length k needs a
jet of order at least k.  Frame indices in the public API are 1-based, as in
``Z_1 .. Z_{2n+1}``.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import hgroup

MAX_ORDER = 8
MAX_ZTAYLOR_DEG = 7


class JetOrderError(ValueError):
    """Raised when a derivative needs more orders than the jet carries."""


# ---------------------------------------------------------------- basis tables


@functools.lru_cache(maxsize=None)
def _basis(nvars: int, order: int):
    monos = []
    for d in range(order + 1):
        for combo in itertools.combinations_with_replacement(range(nvars), d):
            e = [0] * nvars
            for v in combo:
                e[v] += 1
            monos.append(tuple(e))
    index = {m: i for i, m in enumerate(monos)}
    return tuple(monos), index


def basis_size(nvars: int, order: int) -> int:
    return math.comb(nvars + order, order)


@functools.lru_cache(maxsize=None)
def _mul_table(nvars: int, order: int):
    monos, index = _basis(nvars, order)
    ii, jj, kk = [], [], []
    for i, a in enumerate(monos):
        da = sum(a)
        for j, b in enumerate(monos):
            if da + sum(b) > order:
                continue
            ii.append(i)
            jj.append(j)
            kk.append(index[tuple(x + y for x, y in zip(a, b))])
    return np.array(ii), np.array(jj), np.array(kk)


@functools.lru_cache(maxsize=None)
def _deriv_table(nvars: int, order: int, v: int):
    monos, _ = _basis(nvars, order)
    _, low = _basis(nvars, order - 1)
    src, dst, fac = [], [], []
    for i, a in enumerate(monos):
        if a[v] == 0:
            continue
        b = list(a)
        b[v] -= 1
        src.append(i)
        dst.append(low[tuple(b)])
        fac.append(float(a[v]))
    return np.array(src, dtype=int), np.array(dst, dtype=int), np.array(fac)


@functools.lru_cache(maxsize=None)
def _shift_table(nvars: int, order: int, v: int):
    monos, index = _basis(nvars, order)
    src, dst = [], []
    for i, a in enumerate(monos):
        if sum(a) + 1 > order:
            continue
        b = list(a)
        b[v] += 1
        src.append(i)
        dst.append(index[tuple(b)])
    return np.array(src, dtype=int), np.array(dst, dtype=int)


# ------------------------------------------------------------------------ Jet


class Jet:
    """Truncated multivariate Taylor polynomial.

    ``coeffs`` has shape ``(basis_size(nvars, order), *batch)``.  The basis is
    graded by total degree, so a lower-order basis is a prefix of a higher one.
    ``center`` is the expansion point (needed by the frame fields only).
    """

    __array_priority__ = 100

    def __init__(self, nvars: int, order: int, coeffs, center=None):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[0] != basis_size(nvars, order):
            raise ValueError("coefficient count does not match the degree simplex")
        self.nvars = nvars
        self.order = order
        self.coeffs = coeffs
        self.center = None if center is None else np.asarray(center, dtype=float)

    # constructors
    @classmethod
    def constant(cls, nvars, order, value, center=None):
        value = np.asarray(value, dtype=float)
        c = np.zeros((basis_size(nvars, order),) + value.shape)
        c[0] = value
        return cls(nvars, order, c, center)

    @classmethod
    def variable(cls, nvars, order, v, value=0.0, center=None):
        """The coordinate ``value + d_v`` as a jet."""
        jet = cls.constant(nvars, order, value, center)
        if order >= 1:
            _, index = _basis(nvars, order)
            e = [0] * nvars
            e[v] = 1
            jet.coeffs[index[tuple(e)]] = 1.0
        return jet

    @classmethod
    def coordinates(cls, center, order):
        """Jets of the coordinate functions around ``center``."""
        center = np.asarray(center, dtype=float)
        q = center.shape[-1]
        return [cls.variable(q, order, v, center[v], center) for v in range(q)]

    # basic properties
    @property
    def const(self):
        return self.coeffs[0]

    @property
    def batch_shape(self):
        return self.coeffs.shape[1:]

    def coefficient(self, exponent):
        _, index = _basis(self.nvars, self.order)
        return self.coeffs[index[tuple(exponent)]]

    def monomials(self):
        return _basis(self.nvars, self.order)[0]

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise JetOrderError(f"cannot raise jet order from {self.order} to {order}")
        return Jet(self.nvars, order, self.coeffs[: basis_size(self.nvars, order)], self.center)

    def _like(self, coeffs, order=None):
        return Jet(self.nvars, self.order if order is None else order, coeffs, self.center)

    def _coerce(self, other):
        if isinstance(other, Jet):
            if other.nvars != self.nvars:
                raise ValueError("jets over different variable sets")
            k = min(self.order, other.order)
            return self.truncate(k), other.truncate(k)
        return self, None

    # arithmetic
    def __add__(self, other):
        a, b = self._coerce(other)
        if b is None:
            c = a.coeffs.copy()
            c[0] = c[0] + other
            return a._like(c)
        return a._like(a.coeffs + b.coeffs)

    __radd__ = __add__

    def __neg__(self):
        return self._like(-self.coeffs)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        a, b = self._coerce(other)
        if b is None:
            other = np.asarray(other, dtype=float)
            return a._like(a.coeffs * other)
        i, j, k = _mul_table(a.nvars, a.order)
        prod = a.coeffs[i] * b.coeffs[j]
        out = np.zeros((basis_size(a.nvars, a.order),) + prod.shape[1:])
        np.add.at(out, k, prod)
        return a._like(out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            raise TypeError("division by a jet is not supported")
        return self * (1.0 / np.asarray(other, dtype=float))

    def __pow__(self, p):
        if not isinstance(p, (int, np.integer)) or p < 0:
            raise TypeError("jets support non-negative integer powers only")
        out = Jet.constant(self.nvars, self.order, np.ones(self.batch_shape), self.center)
        base = self
        while p:
            if p & 1:
                out = out * base
            p >>= 1
            if p:
                base = base * base
        return out

    def exp(self) -> "Jet":
        c0 = self.coeffs[0]
        nil = self - c0
        s = Jet.constant(self.nvars, self.order, np.ones(self.batch_shape), self.center)
        for k in range(self.order, 0, -1):
            s = 1.0 + (nil * s) / k
        return s * np.exp(c0)

    # calculus
    def deriv(self, v: int) -> "Jet":
        if self.order < 1:
            raise JetOrderError("jet has no derivative orders left")
        src, dst, fac = _deriv_table(self.nvars, self.order, v)
        out = np.zeros((basis_size(self.nvars, self.order - 1),) + self.batch_shape)
        fac = fac.reshape((-1,) + (1,) * len(self.batch_shape))
        out[dst] = self.coeffs[src] * fac
        return Jet(self.nvars, self.order - 1, out, self.center)

    def mul_var(self, v: int) -> "Jet":
        """Multiply by the displacement d_v, dropping terms above the order."""
        src, dst = _shift_table(self.nvars, self.order, v)
        out = np.zeros_like(self.coeffs)
        out[dst] = self.coeffs[src]
        return self._like(out)

    def __repr__(self):
        return f"Jet(nvars={self.nvars}, order={self.order}, batch={self.batch_shape})"


def rexp(v):
    """exp that works on floats, arrays and jets."""
    if isinstance(v, Jet):
        return v.exp()
    return np.exp(v)


# --------------------------------------------------------------- frame fields


def _check_frame_index(i: int, q: int):
    if not 1 <= i <= q:
        raise ValueError(f"frame index must be in 1..{q}, got {i}")


def frame_weight(i: int, n: int) -> int:
    """deg(Z_i): 1 on the horizontal layer, 2 for T."""
    return 2 if i == 2 * n + 1 else 1


def word_weight(word, n: int) -> int:
    return sum(frame_weight(i, n) for i in word)


def apply_frame(jet: Jet, i: int) -> Jet:
    """Apply Z_i (1-based) to a jet expanded around ``jet.center``."""
    q = jet.nvars
    n = (q - 1) // 2
    _check_frame_index(i, q)
    if jet.order < 1:
        raise JetOrderError("jet order exhausted")
    if jet.center is None:
        raise ValueError("frame fields need the jet center")
    c = q - 1
    if i == q:
        return jet.deriv(c)
    dc = jet.deriv(c)
    if i <= n:
        v, partner, sign = i - 1, i - 1 + n, -0.5
    else:
        v, partner, sign = i - 1, i - 1 - n, 0.5
    coord = dc * jet.center[partner] + dc.mul_var(partner)
    return jet.deriv(v) + coord * sign


def apply_word_jet(jet: Jet, word) -> Jet:
    """Z_{i_1} ... Z_{i_k} applied to a jet; the rightmost letter acts first."""
    for i in reversed(tuple(word)):
        jet = apply_frame(jet, i)
    return jet


def sublaplacian_jet(jet: Jet) -> Jet:
    """L = -sum_{i<=2n} Z_i^2 on a jet (lowers the order by two)."""
    q = jet.nvars
    out = None
    for i in range(1, q):
        term = apply_frame(apply_frame(jet, i), i)
        out = term if out is None else out + term
    return -out


# ------------------------------------------------------------- test functions


class TestFunction:
    """A Schwartz-class scalar field on H^n.

    Subclasses implement :meth:`formula` on a list of coordinate ring elements
    (floats, arrays or jets).  Everything else is derived from it.
    """

    __test__ = False  # not a pytest class
    name = "abstract"
    # True when the function depends on (|z|, |u|) only
    zu_radial = False

    def formula(self, y):
        raise NotImplementedError

    def params(self) -> dict:
        return {}

    def descriptor(self) -> str:
        from .fnspec import format_call

        return format_call(self.name, self.params())

    def __repr__(self):
        return self.descriptor()

    def __eq__(self, other):
        return isinstance(other, TestFunction) and self.descriptor() == other.descriptor()

    def __hash__(self):
        return hash(self.descriptor())

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        coords = [x[..., k] for k in range(x.shape[-1])]
        return np.asarray(self.formula(coords), dtype=float) + np.zeros(x.shape[:-1])

    def jet(self, x, order: int) -> Jet:
        """Euclidean Taylor jet of the function around the point x."""
        x = hgroup.as_point(x)
        if x.ndim != 1:
            raise ValueError("jet() takes a single point")
        return self.formula(Jet.coordinates(x, order))

    def left_jet(self, x, order: int) -> Jet:
        """Jet in y at y = 0 of y -> phi(x * y)."""
        x = hgroup.as_point(x)
        q = x.shape[-1]
        ys = Jet.coordinates(np.zeros(q), order)
        return self.formula(hgroup.group_mul_coords(list(x), ys))

    def radial_series(self, x, omegas, order: int) -> np.ndarray:
        """Coefficients f_k(omega), k = 0..order, of r -> phi(x * delta_r omega).

        Returns an array of shape ``(order+1, J)`` for ``J`` directions.
        """
        x = hgroup.as_point(x)
        omegas = np.atleast_2d(hgroup.as_point(omegas))
        q = x.shape[-1]
        n = (q - 1) // 2
        J = omegas.shape[0]
        ray = []
        for k in range(q):
            c = np.zeros((order + 1, J))
            c[0] = 0.0
            if k < 2 * n:
                if order >= 1:
                    c[1] = omegas[:, k]
            elif order >= 2:
                c[2] = omegas[:, k]
            ray.append(Jet(1, order, c))
        pts = hgroup.group_mul_coords([float(v) for v in x], ray)
        out = self.formula(pts)
        if not isinstance(out, Jet):
            out = Jet.constant(1, order, np.broadcast_to(out, (J,)))
        return out.coeffs

    def support_radius(self, eps: float = 1e-17) -> float:
        """Euclidean radius outside of which |phi| < eps."""
        raise NotImplementedError

    def gauss_scale(self) -> float:
        """Scale a of a Gaussian weight exp(-a|w|^2) adapted to the bulk of phi."""
        return 1.0

    def gauss_center(self, q: int) -> np.ndarray:
        return np.zeros(q)


def _sq(y):
    return y * y


def _euclid_sq(y):
    s = _sq(y[0])
    for v in y[1:]:
        s = s + _sq(v)
    return s


@dataclass(frozen=True, eq=False)
class Gaussian(TestFunction):
    """exp(-a |x|^2) with the Euclidean norm of all 2n+1 coordinates."""

    a: float = 1.0
    name = "gaussian"
    zu_radial = True

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("gaussian needs a > 0")

    def params(self):
        return {"a": float(self.a)}

    def formula(self, y):
        return rexp(_euclid_sq(y) * (-self.a))

    def support_radius(self, eps=1e-17):
        return math.sqrt(math.log(1.0 / eps) / self.a)

    def gauss_scale(self):
        return float(self.a)


@dataclass(frozen=True, eq=False)
class PolyGauss(TestFunction):
    """x^gamma exp(-a |x|^2); gamma has one entry per coordinate."""

    gamma: tuple = (0, 0, 0)
    a: float = 1.0
    name = "poly_gauss"

    def __post_init__(self):
        g = tuple(int(v) for v in self.gamma)
        if any(v < 0 for v in g) or len(g) < 3 or len(g) % 2 == 0:
            raise ValueError("gamma must list 2n+1 non-negative integers")
        object.__setattr__(self, "gamma", g)
        if not self.a > 0:
            raise ValueError("poly_gauss needs a > 0")

    def params(self):
        return {"gamma": list(self.gamma), "a": float(self.a)}

    def formula(self, y):
        if len(y) != len(self.gamma):
            raise ValueError(f"poly_gauss gamma has {len(self.gamma)} entries, point has {len(y)}")
        out = rexp(_euclid_sq(y) * (-self.a))
        for v, g in zip(y, self.gamma):
            for _ in range(g):
                out = out * v
        return out

    def support_radius(self, eps=1e-17):
        d = sum(self.gamma)
        rho = math.sqrt(math.log(1.0 / eps) / self.a)
        for _ in range(60):
            rho = math.sqrt(max(math.log(1.0 / eps) + d * math.log(max(rho, 1.0)), 0.0) / self.a)
        return rho

    def gauss_scale(self):
        return float(self.a)


@dataclass(frozen=True, eq=False)
class KoranyiGauss(TestFunction):
    """exp(-||x||_K^4) = exp(-(|z|^4 + u^2))."""

    name = "koranyi_gauss"
    zu_radial = True

    def formula(self, y):
        z2 = _euclid_sq(y[:-1])
        return rexp((z2 * z2 + _sq(y[-1])) * (-1.0))

    def support_radius(self, eps=1e-17):
        return math.sqrt(math.log(1.0 / eps) + 0.25)

    def gauss_scale(self):
        return 1.0


@dataclass(frozen=True, eq=False)
class Translated(TestFunction):
    """phi o l_z, i.e. y -> phi(z * y)."""

    base: TestFunction = None
    z: tuple = ()
    name = "translate"

    def __post_init__(self):
        object.__setattr__(self, "z", tuple(float(v) for v in self.z))

    def params(self):
        return {"base": self.base.descriptor(), "z": list(self.z)}

    def formula(self, y):
        return self.base.formula(hgroup.group_mul_coords(list(self.z), list(y)))

    def support_radius(self, eps=1e-17):
        z = np.asarray(self.z)
        rb = self.base.support_radius(eps)
        zh = float(np.linalg.norm(z[:-1]))
        return math.hypot(zh + rb, abs(z[-1]) + rb + 0.5 * zh * rb)

    def gauss_scale(self):
        return self.base.gauss_scale()

    def gauss_center(self, q):
        return hgroup.group_mul(hgroup.inverse(np.asarray(self.z)), self.base.gauss_center(q))


# --------------------------------------------------------------- operations


def _check_word(word, q):
    word = tuple(int(i) for i in word)
    for i in word:
        _check_frame_index(i, q)
    return word


def apply_word(phi: TestFunction, word, x, max_order: int = MAX_ORDER) -> float:
    """(Z_{i_1} ... Z_{i_k} phi)(x) by exact jet differentiation."""
    x = hgroup.as_point(x)
    word = _check_word(word, x.shape[-1])
    k = len(word)
    if k > max_order:
        raise JetOrderError(f"word of length {k} needs jet order {k} > {max_order}")
    return float(apply_word_jet(phi.jet(x, k), word).const)


def sublaplacian_power(phi: TestFunction, m: int, x, max_order: int = MAX_ORDER) -> float:
    """L^m phi(x) with L = -sum_{i<=2n} Z_i^2."""
    if m < 0:
        raise ValueError("m must be non-negative")
    if 2 * m > max_order:
        raise JetOrderError(f"L^{m} needs jet order {2 * m} > {max_order}")
    x = hgroup.as_point(x)
    jet = phi.jet(x, 2 * m)
    for _ in range(m):
        jet = sublaplacian_jet(jet)
    return float(jet.const)


def words_up_to(n: int, deg: int):
    """All frame words of homogeneous weight <= deg, shortest first."""
    q = 2 * n + 1
    out = [()]
    frontier = [()]
    while frontier:
        nxt = []
        for w in frontier:
            for i in range(1, q + 1):
                nw = (i,) + w
                if word_weight(nw, n) <= deg:
                    nxt.append(nw)
        out.extend(nxt)
        frontier = nxt
    return out


def word_values(phi: TestFunction, x, deg: int) -> dict:
    """Map every word of weight <= deg to Z_w phi(x).

    Words are built by prepending letters, so each jet is derived once from
    its suffix.
    """
    x = hgroup.as_point(x)
    q = x.shape[-1]
    n = (q - 1) // 2
    root = phi.jet(x, deg)
    out = {(): float(root.const)}

    def rec(word, jet, w):
        for i in range(1, q + 1):
            wi = w + frame_weight(i, n)
            if wi > deg:
                continue
            j2 = apply_frame(jet, i)
            nw = (i,) + word
            out[nw] = float(j2.const)
            rec(nw, j2, wi)

    rec((), root, 0)
    return out


def word_monomial(word, q: int) -> tuple:
    g = [0] * q
    for i in word:
        g[i - 1] += 1
    return tuple(g)


@dataclass
class ZTaylor:
    """Group Taylor polynomial T_deg(phi, x) in exponential coordinates.

    ``words`` maps each word w to Z_w phi(x)/k!; ``monomials`` aggregates them
    by exponent.  Calling the object on y returns T_deg(phi, x)(x * y).
    """

    n: int
    deg: int
    center: np.ndarray
    words: dict = field(repr=False)
    monomials: dict = field(repr=False)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        out = np.zeros(y.shape[:-1])
        for g, c in self.monomials.items():
            term = c
            for k, e in enumerate(g):
                if e:
                    term = term * y[..., k] ** e
            out = out + term
        return out

    def by_weight(self) -> dict:
        out = {}
        for g, c in self.monomials.items():
            w = hgroup.weight(g)
            out.setdefault(w, {})[g] = c
        return out

    def on_directions(self, omegas) -> np.ndarray:
        """Coefficients of r^k in T(delta_r omega), shape (deg+1, J)."""
        omegas = np.atleast_2d(omegas)
        out = np.zeros((self.deg + 1, omegas.shape[0]))
        for g, c in self.monomials.items():
            term = np.full(omegas.shape[0], c)
            for k, e in enumerate(g):
                if e:
                    term = term * omegas[:, k] ** e
            out[hgroup.weight(g)] += term
        return out


def ztaylor(phi: TestFunction, x, deg: int, max_deg: int = MAX_ZTAYLOR_DEG) -> ZTaylor:
    """Coefficients Z_w phi(x)/k! for all words of homogeneous weight <= deg."""
    if deg > max_deg:
        raise JetOrderError(f"Taylor degree {deg} exceeds the configured maximum {max_deg}")
    x = hgroup.as_point(x)
    q = x.shape[-1]
    n = (q - 1) // 2
    if deg < 0:
        return ZTaylor(n, deg, x, {}, {})
    vals = word_values(phi, x, deg)
    words = {w: v / math.factorial(len(w)) for w, v in vals.items()}
    monos: dict = {}
    for w, c in words.items():
        g = word_monomial(w, q)
        monos[g] = monos.get(g, 0.0) + c
    return ZTaylor(n, deg, x, words, monos)


def conjugate(i: int, n: int) -> int:
    """Index j with [Z_i, Z_j] = +-T, or 0 for the center."""
    if i <= n:
        return i + n
    if i <= 2 * n:
        return i - n
    return 0


@dataclass(frozen=True)
class CommutatorCheck:
    lhs: float
    rhs: float
    residual: float
    relative: float


def commutator_identity_check(phi: TestFunction, i: int, j: int, x) -> CommutatorCheck:
    """Sum over the 15 arrangements of {i,i,i,i,j,j} against its reorganized form.

    For a conjugate pair ([Z_i, Z_j] = +-T) the reorganized form is
    5 Z_i^4 Z_j^2 + 5 Z_i^2 Z_j^2 Z_i^2 + 5 Z_j^2 Z_i^4 - 25 T^2 Z_i^2;
    for commuting horizontal pairs the T^2 term is absent.
    """
    x = hgroup.as_point(x)
    q = x.shape[-1]
    n = (q - 1) // 2
    for k in (i, j):
        if not 1 <= k <= 2 * n:
            raise ValueError(f"indices must be horizontal (1..{2 * n}), got {k}")
    if i == j:
        raise ValueError("indices must differ")
    paired = conjugate(i, n) == j
    jet = phi.jet(x, 6)

    def val(word):
        return float(apply_word_jet(jet, word).const)

    perms = sorted(set(itertools.permutations((i, i, i, i, j, j))))
    terms = [val(p) for p in perms]
    lhs = math.fsum(terms)
    pieces = [
        5 * val((i, i, i, i, j, j)),
        5 * val((i, i, j, j, i, i)),
        5 * val((j, j, i, i, i, i)),
    ]
    if paired:
        pieces.append(-25 * val((q, q, i, i)))
    rhs = math.fsum(pieces)
    scale = math.fsum(abs(t) for t in terms) + math.fsum(abs(p) for p in pieces)
    res = lhs - rhs
    return CommutatorCheck(lhs, rhs, res, abs(res) / scale if scale > 0 else 0.0)
