"""Fractional powers of the sub-Laplacian through the continued map alpha -> psi(x, alpha).

For alpha < Q and phi a Schwartz function,

    psi(x, alpha) = int (phi(x y) - T_{2m+1}(phi, x)(x y)) P_alpha(y) dy,

where m is the strip index of alpha and the Taylor term is dropped for alpha > 0.
L^s phi(x) is psi(x, -2s).  At alpha = -2m the prefactor 1/Gamma(alpha/2)
vanishes and psi takes the value of the pole formula, a finite sum of frame
derivatives weighted by heat-kernel moments.

Two evaluation routes are provided.  The spatial route integrates the kernel
in homogeneous polar coordinates y = delta_r(omega):

    Gamma(alpha/2) psi = int_{S^2n} (1 + omega_c^2) I(alpha, omega)
                         int_0^inf r^(alpha-1) [phi(x delta_r omega) - T(delta_r omega)] dr dsigma.

The radial integral splits into a near field [0, r0] summed analytically from
the Taylor series of r -> phi(x delta_r omega), a middle range of
Gauss-Legendre panels, and a polynomial tail in closed form.  For points far
from the bulk of phi the outer part is instead computed as
int phi(w) I(alpha, x^-1 w) dw with a Gauss-Hermite rule.

The time route writes psi as (1/Gamma(alpha/2)) int t^(alpha/2-1)
[e^{-tL} phi(x) - sum_{p<=m} c_p t^p] dt, where the c_p come from frame
derivatives and heat-kernel moments.
"""

from __future__ import annotations

import dataclasses
import functools
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import ccnorm, heatkernel, hgroup, jets, quad, riesz


class MissingMoment(KeyError):
    pass


class BudgetExceeded(RuntimeError):
    pass


# ------------------------------------------------------------------ strips


@dataclass(frozen=True)
class StripSelector:
    """alpha in (-2m-2, -2m] (or alpha > 0 with m = 0), plus the pole flag."""

    alpha: float
    m: int
    at_pole: bool

    @classmethod
    def of(cls, alpha) -> "StripSelector":
        alpha = float(alpha)
        if not math.isfinite(alpha):
            raise ValueError("alpha must be finite")
        m = max(0, math.floor(-alpha / 2.0))
        at_pole = alpha <= 0 and (-alpha / 2.0).is_integer()
        return cls(alpha, m, at_pole)

    @property
    def taylor_degree(self) -> int:
        """Degree of the subtracted Taylor polynomial; -1 means none."""
        return 2 * self.m + 1 if self.alpha < 0 else -1


@dataclass(frozen=True)
class PsiResult:
    value: float
    stderr: float
    route: str
    alpha: float
    provenance: dict = field(default_factory=dict, compare=False)
    flags: tuple = ()


def _check_alpha(alpha: float, n: int) -> StripSelector:
    Q = 2 * n + 2
    if not alpha < Q:
        raise ValueError(f"alpha = {alpha} must be below Q = {Q}")
    st = StripSelector.of(alpha)
    if st.at_pole:
        raise riesz.PoleError(f"alpha = {alpha} is a pole; use psi_pole")
    return st


# ------------------------------------------------------------------ moments


def even_indices(n: int, max_weight: int):
    """Even multi-indices of homogeneous weight <= max_weight."""
    q = 2 * n + 1
    out = []
    for g in itertools.product(range(0, max_weight + 1, 2), repeat=q):
        if hgroup.weight(g) <= max_weight:
            out.append(tuple(g))
    return out


def _gaussian_moment(gh) -> float:
    # horizontal marginal of h(1, .) is N(0, 2 I)
    out = 1.0
    for e in gh:
        out *= math.prod(range(e - 1, 0, -2)) * 2.0 ** (e // 2)
    return out


@dataclass(frozen=True)
class MomentTable:
    """mu_gamma = int y^gamma h(1, y) dy for even gamma up to a weight."""

    n: int
    max_weight: int
    values: dict
    stderr: dict
    provenance: str

    def mu(self, gamma) -> float:
        g = tuple(int(v) for v in gamma)
        if len(g) != 2 * self.n + 1:
            raise ValueError(f"multi-index for H^{self.n} needs {2 * self.n + 1} entries")
        if any(v % 2 for v in g):
            return 0.0
        if g not in self.values:
            raise MissingMoment(f"no moment for {g} (table holds weight <= {self.max_weight})")
        return self.values[g]

    def se(self, gamma) -> float:
        return self.stderr.get(tuple(int(v) for v in gamma), 0.0)

    @classmethod
    def reference(cls, n: int, max_weight: int = 6) -> "MomentTable":
        """Closed-form values: Gaussian horizontal marginal, E u^2 = n, E y_i^2 u^2 = (2/3)(3n + 2)."""
        if max_weight > 6:
            raise ValueError("closed-form moments are tabulated to weight 6")
        vals = {}
        for g in even_indices(n, max_weight):
            gh, gc = g[:-1], g[-1]
            if gc == 0:
                vals[g] = _gaussian_moment(gh)
            elif gc == 2 and sum(gh) == 0:
                vals[g] = float(n)
            elif gc == 2 and sum(gh) == 2:
                vals[g] = 2.0 * (3 * n + 2) / 3.0
        return cls(n, max_weight, vals, {}, "reference")

    @classmethod
    def quadrature(cls, n: int = 1, max_weight: int = 6, rule=None) -> "MomentTable":
        if n != 1:
            raise ValueError("deterministic moments are implemented for n = 1")
        vals = {g: heatkernel.hk_moment(g, rule=rule).value for g in even_indices(n, max_weight)}
        return cls(n, max_weight, vals, {}, "quadrature")

    @classmethod
    def montecarlo(cls, n: int, spec=None, cache_dir=None, max_weight: int = 6) -> "MomentTable":
        spec = heatkernel.SamplerSpec() if spec is None else spec
        vals, errs = {}, {}
        for g in even_indices(n, max_weight):
            est = heatkernel.hk_moment(g, method="montecarlo", spec=spec, cache_dir=cache_dir)
            vals[g], errs[g] = est.value, est.stderr
        return cls(n, max_weight, vals, errs, f"montecarlo:{spec.digest(n)}")

    @classmethod
    def measured(cls, n: int, spec=None, cache_dir=None, max_weight: int = 6) -> "MomentTable":
        if n == 1:
            return cls.quadrature(1, max_weight)
        return cls.montecarlo(n, spec, cache_dir, max_weight)


@functools.lru_cache(maxsize=8)
def _default_moments(n: int) -> MomentTable:
    return MomentTable.measured(n)


def heat_coefficients(phi, x, pmax: int, moments: MomentTable):
    """c_p(x) = sum over words w of weight 2p of (Z_w phi(x)/k!) mu_w, p = 0..pmax.

    Returns (values, stderr) arrays; the error propagates moment standard errors.
    """
    x = hgroup.as_point(x)
    q = x.shape[-1]
    n = (q - 1) // 2
    vals = jets.word_values(phi, x, 2 * pmax)
    c = np.zeros(pmax + 1)
    var = np.zeros(pmax + 1)
    for w, v in vals.items():
        wt = jets.word_weight(w, n)
        if wt % 2:
            continue
        g = jets.word_monomial(w, q)
        if any(e % 2 for e in g):
            continue
        a = v / math.factorial(len(w))
        c[wt // 2] += a * moments.mu(g)
        var[wt // 2] += (a * moments.se(g)) ** 2
    return c, np.sqrt(var)


def exact_heat_coefficients(phi, x, pmax: int) -> np.ndarray:
    """(-1)^p L^p phi(x) / p!, the Taylor coefficients of t -> e^{-tL} phi(x)."""
    return np.array([(-1) ** p * jets.sublaplacian_power(phi, p, x) / math.factorial(p) for p in range(pmax + 1)])


# ------------------------------------------------------------------ pole


def psi_pole(phi, x, m: int, moments: MomentTable | None = None) -> PsiResult:
    """psi(x, -2m) = (-1)^m m! c_m(x)."""
    if m < 0 or int(m) != m:
        raise ValueError("m must be a non-negative integer")
    m = int(m)
    x = hgroup.as_point(x)
    n = hgroup.dim_of(x)
    if m == 0:
        return PsiResult(float(phi(x)), 0.0, "pole-formula", 0.0, {"m": 0})
    moments = _default_moments(n) if moments is None else moments
    if 2 * m > moments.max_weight:
        raise MissingMoment(f"pole formula at m = {m} needs moments of weight {2 * m}")
    c, se = heat_coefficients(phi, x, m, moments)
    s = (-1) ** m * math.factorial(m)
    return PsiResult(float(s * c[m]), float(abs(s) * se[m]), "pole-formula", -2.0 * m,
                     {"m": m, "moments": moments.provenance})


@dataclass(frozen=True)
class CollapseCoefficient:
    """Coefficients of the pole formula after reduction with symmetric moments.

    ``lap`` multiplies L^m phi; ``anomaly`` multiplies T^2 phi (m = 2) or
    T^2 L phi (m = 3) and vanishes for the true heat kernel.
    """

    m: int
    lap: float
    anomaly: float
    stderr: float


def _collapse_terms(m: int, n: int, yh, u):
    """Per-sample (lap, anomaly) values given horizontal and center samples."""
    if m == 2:
        mu4 = np.mean(yh**4, axis=-1)
        return (2.0 / 24.0) * mu4, u**2 - (2.0 * n / 24.0) * mu4
    if m == 3:
        mu6 = np.mean(yh**6, axis=-1)
        mu22 = np.mean(yh**2, axis=-1) * u**2
        return 6.0 * mu6 / 720.0, 6.0 * (0.25 * mu22 - (3 * n + 2) / 720.0 * mu6)
    raise ValueError("collapse coefficients are tabulated for m = 2 and m = 3")


def collapse_coefficient(m: int, n: int, moments: MomentTable | None = None, samples=None) -> CollapseCoefficient:
    """Collapse coefficients from a moment table or, with error bars, from raw h(1, .) samples."""
    if m not in (2, 3):
        raise ValueError("collapse coefficients are tabulated for m = 2 and m = 3")
    if samples is not None:
        Y = np.asarray(samples, dtype=float)
        lap, anom = _collapse_terms(m, n, Y[:, :-1], Y[:, -1])
        est = heatkernel._mc_mean(anom)
        return CollapseCoefficient(m, float(np.mean(lap)), est.value, est.stderr)
    moments = _default_moments(n) if moments is None else moments
    q = 2 * n + 1

    def e(i, p, c=0):
        g = [0] * q
        g[i] = p
        g[-1] = c
        return tuple(g)

    mu = moments.mu
    if m == 2:
        mu4 = np.mean([mu(e(i, 4)) for i in range(2 * n)])
        se = math.sqrt(moments.se(e(0, 0, 2)) ** 2 + (2 * n / 24.0 * moments.se(e(0, 4))) ** 2)
        return CollapseCoefficient(2, 2.0 / 24.0 * mu4, mu(e(0, 0, 2)) - 2.0 * n / 24.0 * mu4, se)
    if m == 3:
        mu6 = np.mean([mu(e(i, 6)) for i in range(2 * n)])
        mu22 = np.mean([mu(e(i, 2, 2)) for i in range(2 * n)])
        se = 6.0 * math.hypot(0.25 * moments.se(e(0, 2, 2)), (3 * n + 2) / 720.0 * moments.se(e(0, 6)))
        return CollapseCoefficient(3, 6.0 * mu6 / 720.0, 6.0 * (0.25 * mu22 - (3 * n + 2) / 720.0 * mu6), se)
    raise ValueError("collapse coefficients are tabulated for m = 2 and m = 3")


# ------------------------------------------------------------ spatial route


@dataclass(frozen=True)
class SpatialSpec:
    n_mu: int = 64
    n_theta: int = 64
    mc_directions: int = 20000  # n >= 2
    seed: int = 0
    r0: float = 0.25
    series_order: int = 12
    panel: float = 0.5
    nodes: int = 16
    gh_nodes: int = 24
    far_min: float = 1.0
    eps: float = 1e-17


def direction_rule(n: int, spec: SpatialSpec) -> quad.DirectionRule:
    if n == 1:
        return quad.sphere_product_rule(spec.n_mu, spec.n_theta)
    return quad.sphere_mc_rule(n, spec.mc_directions, spec.seed)


@functools.lru_cache(maxsize=256)
def _profile_at_gl(alpha: float, n_mu: int) -> np.ndarray:
    mu, _ = quad.gauss_legendre(n_mu)
    return riesz._radial_I(alpha, 1.0 - mu * mu, mu, 1)


def sphere_weights(alpha: float, n: int, rule: quad.DirectionRule, spec: SpatialSpec) -> np.ndarray:
    """w_j (1 + mu_j^2) I(alpha, omega_j) for every direction of the rule."""
    mu = rule.points[:, -1]
    if rule.kind == "product":
        prof = np.repeat(_profile_at_gl(float(alpha), spec.n_mu), spec.n_theta)
    else:
        prof = riesz.alpha_profile(float(alpha), n).on_sphere(mu)
    return rule.weights * (1.0 + mu * mu) * prof


def _reduce(rule: quad.DirectionRule, w, rad, spec: SpatialSpec):
    """Sphere sum with an error indicator (embedded coarse rule or antithetic spread)."""
    v = w * rad
    total = float(np.sum(v))
    if rule.kind == "product":
        coarse = 2.0 * float(np.sum(v.reshape(spec.n_mu, spec.n_theta)[:, ::2]))
        return total, abs(total - coarse)
    pairs = rule.pairs
    pv = (v[pairs[:, 0]] + v[pairs[:, 1]])
    return total, float(np.std(pv, ddof=1) * math.sqrt(pairs.shape[0]))


def _cut_radius(phi, x, spec: SpatialSpec):
    """Radius beyond which phi(x delta_r omega) is negligible for every omega, and the far-route radius."""
    rho = phi.support_radius(spec.eps)
    zx = float(hgroup.horizontal_norm(x))
    ux = abs(float(x[-1]))
    s2 = math.sqrt(2.0)
    r_h = s2 * (rho + zx)
    r_c = (0.5 * zx + math.sqrt(0.25 * zx * zx + 2.0 * s2 * (ux + rho))) / s2
    rho_c = rho + 2.0 * math.sqrt(math.pi * rho)
    r_in = (float(ccnorm.cc_norm(x)) - rho_c) / (2.0 * math.sqrt(math.pi))
    return max(r_h, r_c), r_in


def psi_spatial(phi, x, alpha: float, spec: SpatialSpec = SpatialSpec()) -> PsiResult:
    """Whole-space form of psi(x, alpha) by homogeneous polar quadrature."""
    x = hgroup.as_point(x)
    if x.ndim != 1:
        raise ValueError("psi_spatial takes a single point")
    n = hgroup.dim_of(x)
    st = _check_alpha(alpha, n)
    d = st.taylor_degree
    K = spec.series_order
    if K <= d:
        raise jets.JetOrderError(f"series order {K} must exceed the Taylor degree {d}")
    rule = direction_rule(n, spec)
    omegas = rule.points
    W = sphere_weights(alpha, n, rule, spec)

    f = phi.radial_series(x, omegas, K)
    tay = jets.ztaylor(phi, x, d).on_directions(omegas) if d >= 0 else np.zeros((0, omegas.shape[0]))

    r0 = spec.r0
    ks = np.arange(d + 1, K + 1)
    near = np.sum(f[d + 1:] * (r0 ** (alpha + ks) / (alpha + ks))[:, None], axis=0)

    r_cut, r_in = _cut_radius(phi, x, spec)
    far_route = r_in >= spec.far_min
    if far_route:
        r_cut = max(r_in, r0)
    npan = max(1, math.ceil((r_cut - r0) / spec.panel))
    r, wr = quad.uniform_panels(r0, r_cut, npan, spec.nodes)
    pts = hgroup.group_mul(x, hgroup.dilate(r[:, None], omegas[None, :, :]))
    g = phi(pts)
    for k in range(d + 1):
        g = g - tay[k][None, :] * r[:, None] ** k
    mid = np.sum((wr * r ** (alpha - 1.0))[:, None] * g, axis=0)

    # -T beyond r_cut; odd weights cancel over the symmetric rule
    tail = np.zeros(omegas.shape[0])
    for k in range(0, d + 1, 2):
        tail += tay[k] * r_cut ** (alpha + k) / (alpha + k)

    total, err = _reduce(rule, W, near + mid + tail, spec)
    prov = {"spec": dataclasses.asdict(spec), "route": "far" if far_route else "near", "r_cut": r_cut}
    if far_route:
        nodes, gw = heatkernel.gauss_rule_for(phi, 2 * n + 1, spec.gh_nodes)
        fw = phi(nodes) * gw
        keep = np.abs(fw) > 1e-30 * np.max(np.abs(fw))
        prof = riesz.alpha_profile(float(alpha), n)
        total += float(np.dot(fw[keep], prof.I(hgroup.group_mul(hgroup.inverse(x), nodes[keep]))))
    rg = riesz.rgamma(alpha / 2.0)
    return PsiResult(rg * total, abs(rg) * err, "spatial", float(alpha), prov)


# --------------------------------------------------------------- time route


@dataclass(frozen=True)
class TimeSpec:
    t0: float = 0.02
    near_order: int = 4
    panels_low: int = 4
    panels_high: int = 8
    nodes: int = 12
    t_max: float = 1e6
    gh_nodes: int = 20
    sampler: heatkernel.SamplerSpec | None = None


def _heat_values(phi, ts, x, spec: TimeSpec, cache_dir=None):
    """e^{-tL} phi(x) for an array of times (deterministic on H^1)."""
    n = hgroup.dim_of(x)
    if n == 1:
        return heatkernel.heat_semigroup_quad(phi, ts, x, gh_nodes=spec.gh_nodes)
    ts = np.atleast_1d(ts)
    out = np.empty(ts.shape)
    samp = heatkernel.SamplerSpec() if spec.sampler is None else spec.sampler
    Y = heatkernel.sample_cloud(n, samp, cache_dir)
    gh = None
    for k, t in enumerate(ts):
        if t <= 1.0:
            out[k] = float(np.mean(phi(hgroup.group_mul(x, hgroup.dilate(math.sqrt(t / samp.t), Y)))))
        else:
            if gh is None:
                nodes, gw = heatkernel.gauss_rule_for(phi, 2 * n + 1, min(spec.gh_nodes, 8))
                gh = (phi(nodes) * gw, hgroup.group_mul(hgroup.inverse(x), nodes))
            out[k] = float(np.dot(gh[0], heatkernel.hk_eval(t, gh[1], relative=False)))
    return out


def psi_time(phi, x, alpha: float, moments: MomentTable | None = None, spec: TimeSpec = TimeSpec(),
             cache_dir=None) -> PsiResult:
    """(1/Gamma(alpha/2)) int t^(alpha/2-1) [e^{-tL} phi(x) - sum_{p<=m} c_p t^p] dt."""
    x = hgroup.as_point(x)
    n = hgroup.dim_of(x)
    Q = 2 * n + 2
    st = _check_alpha(alpha, n)
    sub = st.m if alpha < 0 else -1  # highest subtracted power
    P = spec.near_order
    if P <= sub:
        raise jets.JetOrderError(f"near-field order {P} must exceed the subtracted order {sub}")
    moments = _default_moments(n) if moments is None else moments
    a = alpha / 2.0

    c_tab = np.zeros(0)
    se_tab = np.zeros(0)
    if sub >= 0:
        c_tab, se_tab = heat_coefficients(phi, x, sub, moments)
    c_ex = exact_heat_coefficients(phi, x, P)

    t0 = spec.t0
    ps = np.arange(sub + 1, P + 1)
    near = float(np.sum(c_ex[sub + 1:] * t0 ** (a + ps) / (a + ps)))

    s, ws = quad.uniform_panels(math.log(t0), 0.0, spec.panels_low, spec.nodes)
    t = np.exp(s)
    E = _heat_values(phi, t, x, spec, cache_dir)
    poly = np.zeros_like(t)
    for p in range(sub + 1):
        poly += c_tab[p] * t**p
    low = float(np.sum(ws * t**a * (E - poly)))

    s, ws = quad.uniform_panels(0.0, math.log(spec.t_max), spec.panels_high, spec.nodes)
    t = np.exp(s)
    high = float(np.sum(ws * t**a * _heat_values(phi, t, x, spec, cache_dir)))
    for p in range(sub + 1):
        high += c_tab[p] / (a + p)

    # e^{-tL} phi(x) ~ h(t, 0) int phi beyond t_max
    nodes, gw = heatkernel.gauss_rule_for(phi, 2 * n + 1, min(spec.gh_nodes, 12))
    mass = float(np.dot(phi(nodes), gw))
    h0 = float(heatkernel.hk_eval(1.0, np.zeros(2 * n + 1)))
    tail = h0 * mass * spec.t_max ** (a - Q / 2.0) / (Q / 2.0 - a)

    rg = riesz.rgamma(a)
    total = near + low + high + tail
    se = 0.0
    if sub >= 0:
        # c_p enters through the subtracted polynomial on [t0, inf) and its closed-form tail
        se = float(np.sqrt(np.sum((se_tab * np.array([-(t0 ** (a + p)) / (a + p) for p in range(sub + 1)])) ** 2)))
    prov = {"spec": dataclasses.asdict(spec), "moments": moments.provenance}
    return PsiResult(rg * total, abs(rg) * se, "time-domain", float(alpha), prov)


# ---------------------------------------------------------------- dispatch


def _as_fraction(s) -> Fraction:
    if isinstance(s, Fraction):
        return s
    return Fraction(str(s))


def frac_power(phi, s, x, spec: SpatialSpec = SpatialSpec(), route: str = "spatial",
               moments: MomentTable | None = None, near_pole: float = 1e-6) -> PsiResult:
    """L^s phi(x) = psi(x, -2s)."""
    x = hgroup.as_point(x)
    n = hgroup.dim_of(x)
    Q = 2 * n + 2
    sf = _as_fraction(s)
    if not sf > Fraction(-Q, 2):
        raise ValueError(f"s = {s} must exceed -Q/2 = {-Q / 2}")
    if sf.denominator == 1 and sf >= 0:
        return psi_pole(phi, x, int(sf), moments)
    alpha = float(-2 * sf)
    m = round(-alpha / 2.0)
    if m >= 0 and abs(alpha + 2 * m) < near_pole:
        base = psi_pole(phi, x, m, moments)
        h = 0.05
        up = psi_spatial(phi, x, -2.0 * m + h, spec).value
        dn = psi_spatial(phi, x, -2.0 * m - h, spec).value
        slope = (up - dn) / (2.0 * h)
        val = base.value + (alpha + 2 * m) * slope
        return PsiResult(val, base.stderr, "pole-formula", alpha, dict(base.provenance, slope=slope), ("near_pole",))
    if route == "spatial":
        return psi_spatial(phi, x, alpha, spec)
    if route == "time":
        return psi_time(phi, x, alpha, moments)
    raise ValueError(f"unknown route {route!r}")


# ----------------------------------------------------------- verifications


def pole_limit(phi, x, m: int, delta: float = 0.1, spec: SpatialSpec = SpatialSpec()) -> float:
    """psi(x, -2m) extrapolated from symmetric pairs -2m +- delta, -2m +- delta/2 (Richardson)."""
    def sym(d):
        return 0.5 * (psi_spatial(phi, x, -2.0 * m + d, spec).value + psi_spatial(phi, x, -2.0 * m - d, spec).value)

    s1, s2 = sym(delta), sym(0.5 * delta)
    return (4.0 * s2 - s1) / 3.0


def strip_continuity_check(phi, x, m: int, delta: float = 0.05, spec: SpatialSpec = SpatialSpec(),
                           moments: MomentTable | None = None) -> float:
    """Worst one-sided gap between the spatial route near -2m and the pole formula."""
    if m not in (1, 2, 3):
        raise ValueError("m must be 1, 2 or 3")
    pole = psi_pole(phi, x, m, moments).value
    gaps = []
    for sgn in (1.0, -1.0):
        a1 = psi_spatial(phi, x, -2.0 * m + sgn * delta, spec).value
        a2 = psi_spatial(phi, x, -2.0 * m + sgn * 0.5 * delta, spec).value
        gaps.append(abs(2.0 * a2 - a1 - pole))
    return max(gaps)


def decay_slope(phi, alpha: float, direction, cc_radii, spec: SpatialSpec = SpatialSpec()):
    """Least-squares slope of log|psi(x, alpha)| against log ||x||_c along a dilation orbit."""
    omega = hgroup.as_point(direction)
    c1 = float(ccnorm.cc_norm(omega))
    vals = []
    for R in cc_radii:
        vals.append(psi_spatial(phi, hgroup.dilate(R / c1, omega), alpha, spec).value)
    vals = np.asarray(vals)
    slope = np.polyfit(np.log(cc_radii), np.log(np.abs(vals)), 1)[0]
    return float(slope), vals


# ---------------------------------------------------------- nested fields


@dataclass(frozen=True)
class FieldSpec:
    """Outer rule for applying a fractional power to a black-box field (n = 1)."""

    n_mu: int = 16
    n_theta: int = 16
    r_split: float = 4.0
    panels: int = 8
    nodes: int = 8
    tail_nodes: int = 12
    fd_step: float = 0.02
    max_evals: int = 20000


class FieldCache:
    """Memoized scalar field; keys use the (|z|, |u|) invariant when the field has it."""

    def __init__(self, func, zu_radial: bool, max_evals: int):
        self.func = func
        self.zu_radial = zu_radial
        self.max_evals = max_evals
        self.store: dict = {}

    @property
    def evaluations(self) -> int:
        return len(self.store)

    def _key(self, y):
        if self.zu_radial:
            return (round(float(np.linalg.norm(y[:-1])), 12), round(abs(float(y[-1])), 12))
        return tuple(round(float(v), 12) for v in y)

    def _canonical(self, key, y):
        if self.zu_radial:
            out = np.zeros_like(y)
            out[0], out[-1] = key
            return out
        return y

    def __call__(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        flat = pts.reshape(-1, pts.shape[-1])
        out = np.empty(flat.shape[0])
        for i, y in enumerate(flat):
            k = self._key(y)
            if k not in self.store:
                if len(self.store) >= self.max_evals:
                    raise BudgetExceeded(f"field evaluation cap {self.max_evals} reached")
                self.store[k] = float(self.func(self._canonical(k, y)))
            out[i] = self.store[k]
        return out.reshape(pts.shape[:-1])


def apply_to_field(field_fn, x, alpha: float, fspec: FieldSpec = FieldSpec()) -> float:
    """psi for a smooth black-box field on H^1 with alpha in (-2, 0) or (0, 2).

    For alpha < 0 the linear Taylor term is removed by pairing omega with -omega,
    so only field values are needed.
    """
    x = hgroup.as_point(x, 1)
    if not (-2.0 < alpha < 2.0) or alpha == 0.0:
        raise ValueError("field route covers alpha in (-2, 0) or (0, 2)")
    rule = quad.sphere_product_rule(fspec.n_mu, fspec.n_theta)
    sspec = SpatialSpec(n_mu=fspec.n_mu, n_theta=fspec.n_theta)
    W = sphere_weights(alpha, 1, rule, sspec)
    om = rule.points
    R = fspec.r_split
    r, wr = quad.uniform_panels(0.0, R, fspec.panels, fspec.nodes)
    s, wsn = quad.uniform_panels(0.0, 1.0, 1, fspec.tail_nodes)
    rr = np.concatenate([r, R / s])
    wt = np.concatenate([wr * r ** (alpha - 1.0), R**alpha * wsn * s ** (-alpha - 1.0)])
    g0 = float(field_fn(x[None, :])[0])
    plus = field_fn(hgroup.group_mul(x, hgroup.dilate(rr[:, None], om[None, :, :])))
    if alpha < 0:
        minus = field_fn(hgroup.group_mul(x, hgroup.dilate(rr[:, None], -om[None, :, :])))
        G = 0.5 * (plus + minus) - g0
    else:
        G = plus
    rad = np.sum(wt[:, None] * G, axis=0)
    return riesz.rgamma(alpha / 2.0) * float(np.dot(W, rad))


def frame_laplacian(field_fn, x, h: float = 0.02) -> float:
    """L g(x) = -sum_i Z_i^2 g(x) by central differences along exp(h Z_i), Richardson in h."""
    x = hgroup.as_point(x)
    q = x.shape[-1]
    g0 = float(field_fn(x[None, :])[0])

    def lap(step):
        acc = 0.0
        for i in range(q - 1):
            e = np.zeros(q)
            e[i] = step
            vals = field_fn(np.stack([hgroup.group_mul(x, e), hgroup.group_mul(x, -e)]))
            acc += (vals[0] + vals[1] - 2.0 * g0) / (step * step)
        return -acc

    return (4.0 * lap(h) - lap(2.0 * h)) / 3.0


@dataclass(frozen=True)
class SemigroupResult:
    lhs: float
    rhs: float
    gap: float
    evaluations: int


def semigroup_check(phi, s, p, x, spec: SpatialSpec = SpatialSpec(), fspec: FieldSpec = FieldSpec(),
                    moments: MomentTable | None = None) -> SemigroupResult:
    """Compare L^s(L^p phi)(x) with L^{s+p} phi(x) on H^1."""
    x = hgroup.as_point(x)
    if hgroup.dim_of(x) != 1:
        raise ValueError("semigroup check runs on H^1 (cost guard)")
    sf, pf = _as_fraction(s), _as_fraction(p)
    for v in (sf, pf, sf + pf):
        if not v > -2:
            raise ValueError("s, p and s + p must exceed -Q/2")
    inner = FieldCache(lambda y: frac_power(phi, pf, y, spec, moments=moments).value,
                       getattr(phi, "zu_radial", False), fspec.max_evals)
    if sf == 0:
        lhs = float(inner(x[None, :])[0])
    elif sf == 1:
        lhs = frame_laplacian(inner, x, fspec.fd_step)
    elif -1 < sf < 1:
        lhs = apply_to_field(inner, x, float(-2 * sf), fspec)
    else:
        raise ValueError("outer power must be 0, 1 or lie in (-1, 1)")
    rhs = frac_power(phi, sf + pf, x, spec, moments=moments).value
    gap = abs(lhs - rhs) / max(abs(rhs), 1e-300)
    return SemigroupResult(lhs, rhs, gap, inner.evaluations)
