"""Riesz-type kernels P_alpha, the homogeneous norms ||.||_alpha and sphere integrals.

With I(alpha, x) = int_0^inf t^(alpha/2 - 1) h(t, x) dt the kernel is
P_alpha = I / Gamma(alpha/2) and ||x||_alpha = I^(1/(alpha - Q)).  Putting
r = 1/sqrt(t) and using the dilation law of h,

    I(alpha, x) = 2 int_0^inf r^(Q - alpha - 1) h(1, delta_r x) dr.

Points are written x = delta_r(omega) with omega on the Euclidean unit sphere
(homogeneous polar coordinates).  Then I(alpha, x) = r^(alpha - Q) I(alpha, omega),
and I(alpha, omega) depends on omega only through its center component, so one
smooth even function of one variable describes the whole kernel.

Integrals over the CC unit sphere are always rewritten as volume integrals
against h(1, .):

    int_{dB_c} x^g ||x||_alpha^(alpha-Q) dS = 2 int x^g h(1, x) ||x||_c^(-alpha-w(g)) dx,

with w(g) the homogeneous weight of the monomial.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.fft import dct

from . import ccnorm, heatkernel, hgroup, quad

# ----------------------------------------------------------------- gamma

_LANCZOS_G = 7.0
_LANCZOS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


class PoleError(ValueError):
    pass


def _is_pole(z) -> bool:
    return z <= 0 and float(z).is_integer()


def _gamma_pos(z: float) -> float:
    z -= 1.0
    acc = _LANCZOS[0]
    for i in range(1, len(_LANCZOS)):
        acc += _LANCZOS[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    return math.sqrt(2.0 * math.pi) * math.exp((z + 0.5) * math.log(t) - t) * acc


def gamma(z: float) -> float:
    """Euler Gamma via the Lanczos approximation (g = 7) with reflection."""
    z = float(z)
    if _is_pole(z):
        raise PoleError(f"Gamma has a pole at {z}")
    if z < 0.5:
        return math.pi / (math.sin(math.pi * z) * _gamma_pos(1.0 - z))
    return _gamma_pos(z)


def rgamma(z: float) -> float:
    """1/Gamma(z), equal to 0 at the poles."""
    z = float(z)
    if _is_pole(z):
        return 0.0
    return 1.0 / gamma(z)


def pole_residue_limit(m: int) -> float:
    """lim_{alpha -> -2m} 1/((alpha + 2m) Gamma(alpha/2)) = (-1)^m m!/2."""
    return 0.5 * (-1) ** m * math.factorial(m)


# --------------------------------------------------------------- domains


@dataclass(frozen=True)
class AlphaDomain:
    alpha: float
    n: int

    @property
    def Q(self) -> int:
        return 2 * self.n + 2

    @property
    def valid(self) -> bool:
        return self.alpha < self.Q

    @property
    def at_pole(self) -> bool:
        return self.alpha <= 0 and float(self.alpha / 2).is_integer()

    def check(self, allow_pole: bool = True):
        if not self.valid:
            raise ValueError(f"alpha = {self.alpha} must be below Q = {self.Q}")
        if not allow_pole and self.at_pole:
            raise PoleError(f"alpha = {self.alpha} is a pole of 1/Gamma(alpha/2) structure")
        return self


# ------------------------------------------------------------ radial I


@dataclass(frozen=True)
class RadialSpec:
    panels: int = 16
    nodes: int = 16
    reach: float = 14.0  # in units of the CC norm; h(1, x) ~ exp(-||x||_c^2 / 4)
    tail_exact: bool = False  # kernel values with full relative accuracy in the tail

    @classmethod
    def for_alpha(cls, alpha: float) -> "RadialSpec":
        # r^(Q - alpha - 1) pushes mass outward for negative alpha and amplifies the kernel tail
        return cls(panels=16 + 2 * math.ceil(max(0.0, -alpha)), tail_exact=alpha < -2.0)


def _radial_I(alpha: float, z2, u, n: int, spec: RadialSpec | None = None) -> np.ndarray:
    """I(alpha, x) = 2 int r^(Q-alpha-1) h(1, delta_r x) dr for arrays of (|z|^2, u)."""
    Q = 2 * n + 2
    spec = RadialSpec.for_alpha(alpha) if spec is None else spec
    beta = Q - alpha - 1.0
    if beta <= -1.0:
        raise ValueError(f"alpha = {alpha} must be below Q = {Q}")
    z2 = np.atleast_1d(np.asarray(z2, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    cc, _ = ccnorm.cc_norm_zu(np.sqrt(z2), np.abs(u))
    if np.any(cc == 0):
        raise ValueError("I(alpha, 0) is not defined")
    rmax = (spec.reach + math.sqrt(max(0.0, 2.0 * beta))) / cc
    # first panel carries r^beta exactly, the rest are plain Gauss-Legendre
    tj, wj = quad.jacobi_start(1.0, beta, spec.nodes)
    tl, wl = quad.uniform_panels(1.0, float(spec.panels), spec.panels - 1, spec.nodes)
    s = np.concatenate([tj, tl]) / spec.panels  # fraction of rmax
    ws = np.concatenate([wj, wl * tl**beta]) * float(spec.panels) ** (-beta - 1.0)
    R = rmax[:, None] * s[None, :]
    H = heatkernel.hk_profile(1.0, z2[:, None] * R**2, u[:, None] * R**2, n, relative=spec.tail_exact)
    return 2.0 * (H @ ws) * rmax ** (beta + 1.0)


def radial_I(alpha: float, x, spec: RadialSpec | None = None) -> np.ndarray:
    x = hgroup.as_point(x)
    n = hgroup.dim_of(x)
    z2 = np.sum(x[..., :-1] ** 2, axis=-1)
    out = _radial_I(alpha, z2.ravel(), x[..., -1].ravel(), n, spec)
    return out.reshape(z2.shape)


def time_I(alpha: float, x, nodes: int = 64) -> float:
    """I(alpha, x) by direct quadrature in t (no substitution); audit route."""
    x = hgroup.as_point(x)
    n = hgroup.dim_of(x)
    cc = float(ccnorm.cc_norm(x))
    # integrate in s = log t over a window where t^(a/2) h(t, x) is non-negligible
    lo = math.log(cc * cc / 400.0)
    hi = math.log(cc * cc) + 60.0 / max(1e-3, (2 * n + 2 - alpha) / 2.0)
    s, w = quad.uniform_panels(lo, hi, 64, nodes)
    t = np.exp(s)
    h = heatkernel.hk_eval(t, np.broadcast_to(x, (t.size, x.size)))
    return float(np.sum(w * t ** (alpha / 2.0) * h))


# ------------------------------------------------------------- profile


@dataclass(frozen=True)
class ProfileSpec:
    min_degree: int = 32
    max_degree: int = 512
    tol: float = 1e-12  # relative size of the trailing Chebyshev coefficients
    radial: RadialSpec | None = None


def _lobatto_coeffs(values: np.ndarray) -> np.ndarray:
    """Chebyshev coefficients from samples at cos(pi k / N), k = 0..N."""
    N = values.size - 1
    c = dct(values, type=1) / N
    c[0] *= 0.5
    c[-1] *= 0.5
    return c


class AlphaProfile:
    """I(alpha, omega) on the Euclidean unit sphere of H^n.

    Stored as a Chebyshev interpolant in s = omega_c^2 on [0, 1].  Samples sit
    on nested Lobatto points and the degree doubles until the trailing
    coefficients fall below ``spec.tol``.
    """

    def __init__(self, alpha: float, n: int, spec: ProfileSpec = ProfileSpec()):
        AlphaDomain(alpha, n).check()
        self.alpha = float(alpha)
        self.n = n
        self.Q = 2 * n + 2
        self.spec = spec
        self.rg = rgamma(alpha / 2.0)

        def f(t):
            s = np.clip(0.5 * (t + 1.0), 0.0, 1.0)
            return _radial_I(self.alpha, 1.0 - s, np.sqrt(s), n, spec.radial)

        deg = spec.min_degree
        vals = f(np.cos(np.pi * np.arange(deg + 1) / deg))
        while True:
            c = _lobatto_coeffs(vals)
            self.tail = float(np.abs(c[-4:]).max() / np.abs(c).max())
            if self.tail < spec.tol or 2 * deg > spec.max_degree:
                break
            fresh = f(np.cos(np.pi * np.arange(1, 2 * deg, 2) / (2 * deg)))
            merged = np.empty(2 * deg + 1)
            merged[0::2] = vals
            merged[1::2] = fresh
            vals = merged
            deg *= 2
        self.cheb = np.polynomial.Chebyshev(c, domain=[0.0, 1.0])
        self.degree = deg

    def on_sphere(self, mu) -> np.ndarray:
        mu = np.asarray(mu, dtype=float)
        return self.cheb(mu * mu)

    def I(self, x) -> np.ndarray:
        """I(alpha, x) = ||x||_alpha^(alpha - Q) for arbitrary nonzero points."""
        x = hgroup.as_point(x)
        r = hgroup.polar_radius(x)
        mu = x[..., -1] / (r * r)
        return r ** (self.alpha - self.Q) * self.on_sphere(mu)

    def kernel(self, x) -> np.ndarray:
        """P_alpha(x); identically zero at the poles alpha = 0, -2, -4, ..."""
        return self.rg * self.I(x)

    def norm(self, x) -> np.ndarray:
        return self.I(x) ** (1.0 / (self.alpha - self.Q))


@functools.lru_cache(maxsize=64)
def alpha_profile(alpha: float, n: int, spec: ProfileSpec = ProfileSpec()) -> AlphaProfile:
    return AlphaProfile(float(alpha), int(n), spec)


def alpha_norm(alpha: float, x, method: str = "direct") -> np.ndarray:
    """||x||_alpha for x != 0 and alpha < Q."""
    x = hgroup.as_point(x)
    n = hgroup.dim_of(x)
    AlphaDomain(alpha, n).check()
    Q = 2 * n + 2
    if method == "direct":
        I = radial_I(alpha, x)
    elif method == "profile":
        I = alpha_profile(alpha, n).I(x)
    else:
        raise ValueError(f"unknown method {method!r}")
    return I ** (1.0 / (alpha - Q))


def p_alpha(alpha: float, x, method: str = "direct") -> np.ndarray:
    """P_alpha(x) = I(alpha, x) / Gamma(alpha/2) away from the poles."""
    x = hgroup.as_point(x)
    n = hgroup.dim_of(x)
    dom = AlphaDomain(alpha, n).check(allow_pole=False)
    if method == "direct":
        I = radial_I(dom.alpha, x)
    elif method == "profile":
        I = alpha_profile(dom.alpha, n).I(x)
    else:
        raise ValueError(f"unknown method {method!r}")
    return I / gamma(alpha / 2.0)


# ------------------------------------------------------- sphere integrals


def horizontal_sphere_moment(gh) -> float:
    """int over S^{2n-1} of nu^gh for a horizontal multi-index gh (closed form)."""
    gh = tuple(int(v) for v in gh)
    if any(v % 2 for v in gh):
        return 0.0
    d = len(gh)
    num = 2.0 * math.prod(math.gamma((v + 1) / 2.0) for v in gh)
    return num / math.gamma((sum(gh) + d) / 2.0)


@dataclass(frozen=True)
class MomentResult:
    value: float
    stderr: float
    method: str


def _cc_on_sphere(mu, n):
    c, _ = ccnorm.cc_norm_zu(np.sqrt(1.0 - mu * mu), np.abs(mu))
    return c


def boundary_moment(gamma_idx, alpha: float, method: str = "quadrature", spec=None,
                    nodes: int = 96, cache_dir: str | None = None, symmetrize: bool = False) -> MomentResult:
    """int_{dB_c(0,1)} x^gamma ||x||_alpha^(alpha-Q) dS in volume form.

    quadrature: 2 int x^g h(1,x) ||x||_c^(-alpha-w) dx = int_{S^2n} omega^g (1 + omega_c^2)
        ||omega||_c^(-alpha-w) I(alpha, omega) dsigma, reduced to one variable.
    montecarlo: 2 E[Y^g ||Y||_c^(-alpha-w)] over the cached h(1, .) cloud.
    """
    g = tuple(int(v) for v in gamma_idx)
    q = len(g)
    n = hgroup.dim_of(np.zeros(q))
    AlphaDomain(alpha, n).check()
    if any(v < 0 for v in g):
        raise ValueError("multi-index entries must be non-negative")
    if any(v % 2 for v in g):
        return MomentResult(0.0, 0.0, "symmetry")
    w = hgroup.weight(g)
    if method == "quadrature":
        prof = alpha_profile(alpha, n)
        gh, gc = g[:-1], g[-1]
        mu, wm = quad.panels(np.linspace(-1.0, 1.0, 9), nodes // 8)
        f = (1.0 - mu * mu) ** (sum(gh) / 2.0 + n - 1) * mu**gc * (1.0 + mu * mu)
        f = f * _cc_on_sphere(mu, n) ** (-alpha - w) * prof.on_sphere(mu)
        val = horizontal_sphere_moment(gh) * float(np.dot(wm, f))
        return MomentResult(val, 0.0, "quadrature")
    if method == "montecarlo":
        spec = heatkernel.SamplerSpec() if spec is None else spec
        Y = heatkernel.sample_cloud(n, spec, cache_dir)
        if spec.t != 1.0:
            Y = hgroup.dilate(1.0 / math.sqrt(spec.t), Y)
        cc = ccnorm.cc_norm(Y)
        weight_pow = cc ** (-alpha - w)
        if symmetrize:
            mono = _symmetrized_monomial(Y, g)
        else:
            mono = np.prod(Y ** np.asarray(g, dtype=float), axis=1)
        est = heatkernel._mc_mean(2.0 * mono * weight_pow)
        return MomentResult(est.value, est.stderr, "montecarlo")
    raise ValueError(f"unknown method {method!r}")


def _symmetrized_monomial(Y, g):
    """Average of Y^g over all placements of the horizontal exponents on distinct horizontal coordinates."""
    q = len(g)
    gh = [v for v in g[:-1] if v]
    slots = range(q - 1)
    acc = np.zeros(Y.shape[0])
    count = 0
    for pos in itertools.permutations(slots, len(gh)):
        term = Y[:, -1] ** g[-1]
        for p, e in zip(pos, gh):
            term = term * Y[:, p] ** e
        acc += term
        count += 1
    return acc / count


def sigma(alpha: float, n: int = 1, method: str = "quadrature", spec=None, cache_dir=None) -> MomentResult:
    """sigma(alpha) = 2 int h(1, y) ||y||_c^(-alpha) dy."""
    return boundary_moment((0,) * (2 * n + 1), alpha, method, spec, cache_dir=cache_dir)


def d_alpha(alpha: float, i: int = 1, n: int = 1, method: str = "montecarlo", spec=None, cache_dir=None) -> MomentResult:
    """d(alpha) = 2 int y_i^2 h(1, y) ||y||_c^(-alpha-2) dy for a horizontal index i (1-based)."""
    if not 1 <= i <= 2 * n:
        raise ValueError(f"i must be horizontal (1..{2 * n})")
    g = [0] * (2 * n + 1)
    g[i - 1] = 2
    return boundary_moment(tuple(g), alpha, method, spec, cache_dir=cache_dir)


# ----------------------------------------------------------- convolution


@dataclass(frozen=True)
class ConvolutionCheck:
    lhs: float
    rhs: float
    stderr: float
    gap: float


def _radial_sample(rng, a, size):
    """r with density a r^(a-1) / (1+r)^(a+1) on (0, inf)."""
    v = rng.random(size) ** (1.0 / a)
    return v / (1.0 - v)


def _radial_density(r, a):
    return a * r ** (a - 1.0) / (1.0 + r) ** (a + 1.0)


def convolution_check(alpha: float, beta: float, x, samples: int = 2_000_000, seed: int = 0) -> ConvolutionCheck:
    """Compare P_{alpha+beta}(x) with an importance-sampled P_alpha * P_beta (x) on H^1.

    The proposal is an even mixture of two polar samplers, one centered at 0
    with radial law matched to P_alpha, one centered at x matched to P_beta.
    """
    x = hgroup.as_point(x)
    n = hgroup.dim_of(x)
    if n != 1:
        raise ValueError("convolution check is limited to n = 1 (cost guard)")
    Q = 2 * n + 2
    if not (0 < alpha < Q and 0 < beta < Q and alpha + beta < Q):
        raise ValueError("need alpha, beta in (0, Q) with alpha + beta < Q")
    Pa = alpha_profile(alpha, n)
    Pb = alpha_profile(beta, n)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0xC0])))
    area = quad.sphere_area(2 * n)

    def q0(v, a):
        r = hgroup.polar_radius(v)
        mu = v[:, -1] / (r * r)
        return _radial_density(r, a) / (area * r ** (Q - 1) * (1.0 + mu * mu))

    half = samples // 2
    vals = []
    for comp, a in ((0, alpha), (1, beta)):
        g = rng.standard_normal((half, 2 * n + 1))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = _radial_sample(rng, a, half)
        v = hgroup.dilate(r, g)
        y = v if comp == 0 else hgroup.group_mul(x, v)
        dens = 0.5 * q0(y, alpha) + 0.5 * q0(hgroup.group_mul(hgroup.inverse(x), y), beta)
        f = Pa.kernel(y) * Pb.kernel(hgroup.group_mul(hgroup.inverse(y), x))
        vals.append(f / dens)
    vals = np.concatenate(vals)
    est = heatkernel._mc_mean(vals)
    lhs = float(p_alpha(alpha + beta, x))
    return ConvolutionCheck(lhs, est.value, est.stderr, abs(est.value - lhs) / abs(lhs))
