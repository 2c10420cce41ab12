"""Heat kernel of the sub-Laplacian on H^n: evaluation, sampling, moments, semigroup.

The kernel is evaluated from its Fourier representation in the center variable

    h(t, (z, u)) = (1/pi) int_0^inf (lam / (4 pi sinh(lam t)))^n
                   exp(-(lam/4) |z|^2 coth(lam t)) cos(lam u) dlam,

normalized so that the horizontal coordinates have variance 2t.  Substituting
lam = mu/t gives h(t, (z, u)) = t^(-n-1) H(|z|^2/t, |u|/t), which makes the
dilation law exact up to roundoff.
"""

from __future__ import annotations

import functools
import hashlib
import json
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import ccnorm, hgroup, quad

_LOG4PI = math.log(4.0 * math.pi)
_TAIL_LOG = 42.0  # integrand envelope cut at exp(-42) relative to lam = 0
_CELL_BUDGET = 3_000_000


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class KernelEval:
    t: float
    point: tuple
    value: float
    method: str
    error: float


@dataclass(frozen=True)
class Estimate:
    """A scalar estimate with its standard error (0 for deterministic routes)."""

    value: float
    stderr: float
    method: str


# ------------------------------------------------------------ deterministic h


def _lambda_cutoff(a, n):
    """Smallest mu with n(mu - log 2mu) + a(mu-1)/4 >= _TAIL_LOG, vectorized by bisection."""
    a = np.asarray(a, dtype=float)
    lo = np.full(a.shape, 1.0)
    hi = np.full(a.shape, 2.0 * _TAIL_LOG / n + 10.0)

    def f(m):
        return n * (m - np.log(2.0 * m)) + 0.25 * a * (m - 1.0) - _TAIL_LOG

    for _ in range(48):
        mid = 0.5 * (lo + hi)
        ok = f(mid) >= 0
        hi = np.where(ok, mid, hi)
        lo = np.where(ok, lo, mid)
    return np.maximum(hi, 2.0)


def _log_env(lam, n):
    # n * log(lam / (4 pi sinh lam)) for complex lam with Re lam > 0, stable for large lam
    return n * (np.log(2.0 * lam) - lam - np.log(-np.expm1(-2.0 * lam)) - _LOG4PI)


def _lam_coth(lam):
    e = np.exp(-2.0 * lam)
    return lam * (1.0 + e) / -np.expm1(-2.0 * lam)


_SHIFT_LOSS = 4.0  # shift the contour once cancellation would cost more than e^4 in relative accuracy


def _shift(a, b, n):
    """Height c of the integration line Im lam = c (0 where the real axis is accurate).

    The phase -a lam coth(lam)/4 + i lam b is stationary on the imaginary axis
    at i theta, where theta solves the geodesic equation of the CC norm.  The
    shift is capped at pi - 1/(1+b) to stay clear of the pole at i pi.
    """
    _, theta = ccnorm.cc_norm_zu(np.sqrt(a), b)
    c = np.minimum(theta, np.pi - 1.0 / (1.0 + b))
    # log size of the integrand on the shifted line at s = 0, against the real-axis peak
    sc = np.where(c > 0, np.sin(c), 1.0)
    cc = np.where(c > 0, c, 1.0)
    cot = np.where(c > 0, c * np.cos(c) / sc, 1.0)
    shifted = n * np.log(cc / sc) - 0.25 * a * cot - c * b
    loss = -0.25 * a - shifted
    return np.where(loss > _SHIFT_LOSS, c, 0.0)


def _graded_edges(w0: float, width: float, end: float) -> np.ndarray:
    """Panel edges on [0, end]: widths w0, w0, 2 w0, 4 w0, ... up to ``width``, then uniform."""
    edges = [0.0]
    w = w0
    while w < width and edges[-1] < end:
        edges.append(edges[-1] + w)
        if len(edges) > 2:
            w = min(2.0 * w, width)
    while edges[-1] < end:
        edges.append(edges[-1] + width)
    edges[-1] = end
    return np.asarray(edges)


_TURN = 1.0  # real part where the shifted line turns upward
_RISE_LOG = 45.0  # the vertical leg stops once exp(-b y) has fallen by e^-45


def _integrand_log(lam, a, b, n):
    """log of (lam / (4 pi sinh lam))^n exp(-a lam coth(lam) / 4 + i b lam)."""
    return _log_env(lam, n) - 0.25 * a * _lam_coth(lam) + 1j * b * lam


def _H(a, b, n: int, m: int = 16, relative: bool = True) -> np.ndarray:
    """H(a, b) = h(1, (z, u)) with a = |z|^2, b = |u| (vectorized).

    Where the real-axis Fourier integral would cancel, it is taken along
    lam = s + i c with c from :func:`_shift`; there the integrand peaks at
    s = 0 with the size of the result.  When b dominates a, the shifted line
    turns upward at Re lam = 1, where exp(i b lam) decays, so a short vertical
    leg replaces many oscillation periods.  With ``relative=False`` the real
    axis is always used, which is cheaper and accurate to ~1e-17 absolute.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.abs(np.asarray(b, dtype=float).ravel())
    out = np.empty(a.shape)
    if a.size == 0:
        return out
    c = _shift(a, b, n) if relative else np.zeros(a.shape)
    lam_max = _lambda_cutoff(a, n)
    # along Re lam = 1 the kernel factor grows at most like exp(a y / 19)
    turn = (c > 0) & (b > 0.25 * a + 2.0) & (lam_max > _TURN)
    end = np.where(turn, _TURN, lam_max)
    width = np.minimum(1.0, np.pi / np.maximum(b, 1e-300))
    # near the pole the peak at s = 0 has width ~ pi - c; panels grow geometrically from there
    w0 = np.minimum(width, np.where(c > 0, 0.5 * (np.pi - c), width))
    # vertical leg: decay rate at least b - a/11; panels resolve exp(-b y) and the period pi of coth
    rise = _RISE_LOG / np.maximum(b - a / 11.0, 1e-300)
    ystep = np.minimum(8.0 / np.maximum(b, 1e-300), 1.0)
    need = (np.ceil(end / width) + np.ceil(np.log2(width / w0)) + turn * np.ceil(rise / ystep)).astype(int) * m
    mode = np.where(c == 0, 0, np.where(turn, 2, 1))
    for md in (0, 1, 2):
        sel = np.flatnonzero(mode == md)
        order = sel[np.argsort(need[sel], kind="stable")]
        i = 0
        N = order.size
        while i < N:
            k = max(1, _CELL_BUDGET // int(need[order[i]]))
            j = min(N, i + k)
            while j > i + 1 and (j - i) * int(need[order[j - 1]]) > _CELL_BUDGET:
                j = i + max(1, (j - i) // 2)
            idx = order[i:j]
            s, w = quad.panels(_graded_edges(float(w0[idx].min()), float(width[idx].min()),
                                             float(end[idx].max())), m)
            ai, bi = a[idx, None], b[idx, None]
            if md == 0:
                env = _log_env(s, n)
                mcoth = _lam_coth(s)
                E = np.exp(env[None, :] - 0.25 * ai * mcoth[None, :])
                E *= np.cos(bi * s[None, :])
                out[idx] = E @ w / math.pi
            else:
                lam = s[None, :] + 1j * c[idx, None]
                val = np.real(np.exp(_integrand_log(lam, ai, bi, n))) @ w
                if md == 2:
                    Y = float(rise[idx].max())
                    y, wy = quad.uniform_panels(0.0, Y, int(math.ceil(Y / float(ystep[idx].min()))), m)
                    lam_v = _TURN + 1j * (c[idx, None] + y[None, :])
                    # i * int_0^inf f(1 + i(c + y)) dy
                    val = val + np.real(1j * np.exp(_integrand_log(lam_v, ai, bi, n))) @ wy
                out[idx] = val / math.pi
            i = j
    return out


def hk_eval(t, x, m: int = 16, relative: bool = True) -> np.ndarray:
    """h(t, x) for t > 0 and a point or batch of points x of H^n.

    Values carry full relative accuracy unless ``relative=False``, which is
    enough inside quadratures weighted by the kernel.
    """
    x = hgroup.as_point(x)
    n = hgroup.dim_of(x)
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("heat kernel needs t > 0")
    z2 = np.sum(x[..., :-1] ** 2, axis=-1)
    u = x[..., -1]
    shape = np.broadcast(t, z2).shape
    tb = np.broadcast_to(t, shape)
    H = _H(np.broadcast_to(z2, shape) / tb, np.broadcast_to(u, shape) / tb, n, m, relative)
    return (H.reshape(shape) * tb ** (-(n + 1.0)))


def kernel_eval(t: float, x, tol: float = 1e-12) -> KernelEval:
    """Kernel value with an error estimate from two node densities."""
    x = hgroup.as_point(x)
    v1 = float(hk_eval(t, x, m=16))
    v2 = float(hk_eval(t, x, m=24))
    err = abs(v1 - v2)
    scale = float(t) ** (-(hgroup.dim_of(x) + 1.0))
    if err > tol * scale:
        raise QuadratureError(f"kernel quadrature did not converge: |dv| = {err:.3e}")
    return KernelEval(float(t), tuple(float(v) for v in x), v2, "quadrature", err)


def pde_residual(t: float, x, eps: float) -> float:
    """(d/dt + L) h at (t, x) with step eps in t and along each frame direction.

    Both derivatives are central differences, so the residual is O(eps^2).
    Z_i acts through right translation by exp(eps Z_i) = eps e_i.
    """
    x = hgroup.as_point(x)
    q = x.shape[-1]
    h0 = float(hk_eval(t, x))
    dt = float(hk_eval(t + eps, x) - hk_eval(t - eps, x)) / (2.0 * eps)
    shifts = []
    for i in range(q - 1):
        e = np.zeros(q)
        e[i] = eps
        shifts.append(hgroup.group_mul(x, e))
        shifts.append(hgroup.group_mul(x, -e))
    vals = hk_eval(t, np.stack(shifts))
    lap = -float(np.sum(vals) - 2.0 * (q - 1) * h0) / (eps * eps)
    return dt + lap


def hk_profile(t, z2, u, n: int, relative: bool = True) -> np.ndarray:
    """h(t, (z, u)) from |z|^2 and u directly (kernel depends on nothing else).

    ``relative=False`` trades tail accuracy (~1e-17 absolute) for speed; see :func:`_H`.
    """
    t = float(t)
    z2 = np.asarray(z2, dtype=float)
    u = np.asarray(u, dtype=float)
    shape = np.broadcast(z2, u).shape
    H = _H(np.broadcast_to(z2, shape) / t, np.broadcast_to(u, shape) / t, n, relative=relative)
    return H.reshape(shape) * t ** (-(n + 1.0))


# -------------------------------------------------------------------- sampler


@dataclass(frozen=True)
class SamplerSpec:
    """Monte Carlo configuration; identical specs give identical streams."""

    paths: int = 200_000
    steps: int = 2000
    seed: int = 0
    t: float = 1.0
    block: int = 10_000

    def __post_init__(self):
        for name in ("paths", "steps", "block"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if not isinstance(self.seed, (int, np.integer)) or not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if not self.t > 0:
            raise ValueError("time horizon must be positive")

    def digest(self, n: int) -> str:
        blob = json.dumps({"n": n, **asdict(self)}, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def nblocks(self) -> int:
        return -(-self.paths // self.block)


def _simulate_block(n: int, spec: SamplerSpec, b: int) -> np.ndarray:
    count = min(spec.block, spec.paths - b * spec.block)
    ss = np.random.SeedSequence([int(spec.seed), n, b])
    rng = np.random.Generator(np.random.Philox(ss))
    x = np.zeros((2 * n, count))
    u = np.zeros(count)
    sd = math.sqrt(2.0 * spec.t / spec.steps)
    chunk = max(1, 2_000_000 // (2 * n * count))
    done = 0
    while done < spec.steps:
        c = min(chunk, spec.steps - done)
        buf = rng.standard_normal((c, 2 * n, count))
        buf *= sd
        for k in range(c):
            d = buf[k]
            for i in range(n):
                # midpoint increment of the Levy area; the d*d terms cancel
                u += 0.5 * (x[i] * d[n + i] - x[n + i] * d[i])
            x += d
        done += c
    return np.concatenate([x, u[None, :]]).T


def sample_diffusion(spec: SamplerSpec, n: int, workers: int = 1):
    """Yield blocks of endpoints (shape (B, 2n+1)) of the diffusion at time spec.t.

    Each block has its own counter-based stream keyed by (seed, n, block), so
    the output does not depend on the number of workers.
    """
    hgroup.GroupConfig(n)
    blocks = range(spec.nblocks())
    if workers <= 1:
        for b in blocks:
            yield _simulate_block(n, spec, b)
        return
    with ProcessPoolExecutor(max_workers=workers) as ex:
        yield from ex.map(_simulate_block, [n] * len(blocks), [spec] * len(blocks), blocks)


_CLOUDS: dict = {}


def _atomic_save(path: str, arr: np.ndarray):
    d = os.path.dirname(path) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".npy.tmp")
    with os.fdopen(fd, "wb") as fh:
        np.save(fh, arr)
    os.replace(tmp, path)


def sample_cloud(n: int, spec: SamplerSpec, cache_dir: str | None = None, workers: int = 1) -> np.ndarray:
    """All endpoints as one (paths, 2n+1) array, memoized in memory and optionally on disk."""
    key = (n, spec)
    if key in _CLOUDS:
        return _CLOUDS[key]
    path = None
    if cache_dir:
        path = os.path.join(cache_dir, f"cloud-n{n}-{spec.digest(n)}.npy")
        if os.path.exists(path):
            arr = np.load(path)
            _CLOUDS[key] = arr
            return arr
    arr = np.concatenate(list(sample_diffusion(spec, n, workers)))
    arr.flags.writeable = False
    if path:
        _atomic_save(path, arr)
    _CLOUDS[key] = arr
    return arr


def _mc_mean(values, method="montecarlo") -> Estimate:
    values = np.asarray(values, dtype=float)
    N = values.size
    mean = float(np.mean(values))
    se = float(np.std(values, ddof=1) / math.sqrt(N)) if N > 1 else float("inf")
    return Estimate(mean, se, method)


def heat_semigroup(phi, t: float, x, spec: SamplerSpec, cache_dir: str | None = None) -> Estimate:
    """Monte Carlo e^{-tL} phi(x) = E[phi(x * W_t)]."""
    if not t > 0:
        raise ValueError("t must be positive")
    x = hgroup.as_point(x)
    n = hgroup.dim_of(x)
    Y = sample_cloud(n, spec, cache_dir)
    Y = hgroup.dilate(math.sqrt(t / spec.t), Y)
    return _mc_mean(phi(hgroup.group_mul(x, Y)))


# ------------------------------------------------------- n = 1 heat quadrature


@dataclass(frozen=True)
class HeatRuleSpec:
    rho_max: float = 16.0
    rho_panel: float = 2.0
    u_max: float = 26.0
    u_panel: float = 1.0
    nodes: int = 12
    n_theta: int = 32
    prune: float = 1e-40


class HeatRule:
    """Deterministic cubature for the probability measure h(1, y) dy on H^1.

    Cylindrical coordinates (rho, theta, u): Gauss-Legendre panels in rho and
    u, trapezoid in theta.  Expectations of any function of y reduce to a
    weighted sum over ``points``.
    """

    def __init__(self, spec: HeatRuleSpec = HeatRuleSpec()):
        self.spec = spec
        rho, wr = quad.uniform_panels(0.0, spec.rho_max, int(round(spec.rho_max / spec.rho_panel)), spec.nodes)
        u, wu = quad.uniform_panels(0.0, spec.u_max, int(round(spec.u_max / spec.u_panel)), spec.nodes)
        R, U = np.meshgrid(rho, u, indexing="ij")
        W = (wr * rho)[:, None] * wu[None, :]
        # weights are pruned relative to their maximum, so absolute accuracy suffices
        Hv = hk_profile(1.0, R**2, U, 1, relative=False)
        W = W * Hv
        keep = W > spec.prune * W.max()
        self.rho = np.concatenate([R[keep], R[keep]])
        self.u = np.concatenate([U[keep], -U[keep]])
        self.w2 = np.concatenate([W[keep], W[keep]])  # radial-center weight, theta not included
        th, wt = quad.trapezoid_circle(spec.n_theta)
        self.theta, self.wtheta = th, wt
        c, s = np.cos(th), np.sin(th)
        self.points = np.stack(
            [
                (self.rho[:, None] * c[None, :]).ravel(),
                (self.rho[:, None] * s[None, :]).ravel(),
                np.repeat(self.u, th.size),
            ],
            axis=-1,
        )
        self.weights = (self.w2[:, None] * wt[None, :]).ravel()

    def expect(self, values) -> float:
        return float(np.dot(self.weights, values))

    def expect_radial(self, f) -> float:
        """E[f(|z|, u)] for rotation-invariant integrands."""
        return float(2.0 * math.pi * np.dot(self.w2, f(self.rho, self.u)))

    def moment(self, gamma) -> float:
        g = tuple(int(v) for v in gamma)
        if len(g) != 3:
            raise ValueError("the heat rule lives on H^1")
        if any(v % 2 for v in g):
            return 0.0
        vals = self.points[:, 0] ** g[0] * self.points[:, 1] ** g[1] * self.points[:, 2] ** g[2]
        return self.expect(vals)


@functools.lru_cache(maxsize=4)
def heat_rule(spec: HeatRuleSpec = HeatRuleSpec()) -> HeatRule:
    return HeatRule(spec)


def heat_semigroup_quad(phi, ts, x, rule: HeatRule | None = None, gh_nodes: int = 20, t_switch: float = 1.0):
    """Deterministic e^{-tL} phi(x) on H^1 for an array of times.

    Small t uses the heat rule pushed by delta_sqrt(t); large t integrates
    phi(w) h(t, x^{-1} w) with a Gauss-Hermite rule adapted to phi.
    """
    x = hgroup.as_point(x, 1)
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    out = np.empty(ts.shape)
    rule = heat_rule() if rule is None else rule
    far = None
    for k, t in enumerate(ts):
        if t <= t_switch:
            pts = hgroup.group_mul(x, hgroup.dilate(math.sqrt(t), rule.points))
            out[k] = rule.expect(phi(pts))
        else:
            if far is None:
                gnodes, gweights = gauss_rule_for(phi, 3, gh_nodes)
                fw = phi(gnodes) * gweights
                keep = np.abs(fw) > 1e-18 * np.abs(fw).max()
                far = (fw[keep], hgroup.group_mul(hgroup.inverse(x), gnodes[keep]))
            out[k] = float(np.dot(far[0], hk_eval(t, far[1], relative=False)))
    return out


def gauss_rule_for(phi, q: int, m: int):
    """Tensor Gauss-Hermite nodes/weights for int f(w) dw, adapted to phi's bulk.

    Weights include the factor exp(+a|zeta|^2) so that the rule integrates f itself.
    """
    a = float(phi.gauss_scale())
    c = np.asarray(phi.gauss_center(q), dtype=float)
    x, w = quad.gauss_hermite(m)
    grids = np.meshgrid(*([x] * q), indexing="ij")
    Z = np.stack([g.ravel() for g in grids], axis=-1)
    W = np.ones(Z.shape[0])
    for g in np.meshgrid(*([w * np.exp(x * x)] * q), indexing="ij"):
        W = W * g.ravel()
    nodes = c + Z / math.sqrt(a)
    return nodes, W * a ** (-q / 2.0)


# -------------------------------------------------------------------- moments


def moment_weight(gamma) -> int:
    return hgroup.weight(gamma)


def hk_moment(gamma, t: float = 1.0, method: str = "quadrature", spec: SamplerSpec | None = None,
              rule: HeatRule | None = None, cache_dir: str | None = None) -> Estimate:
    """int x^gamma h(t, x) dx by Monte Carlo (any n) or cubature (n = 1)."""
    g = tuple(int(v) for v in gamma)
    q = len(g)
    n = hgroup.dim_of(np.zeros(q))
    if any(v < 0 for v in g):
        raise ValueError("multi-index entries must be non-negative")
    if not t > 0:
        raise ValueError("t must be positive")
    scale = t ** (moment_weight(g) / 2.0)
    if any(v % 2 for v in g):
        return Estimate(0.0, 0.0, "symmetry")
    if method == "quadrature":
        if n != 1:
            raise ValueError("deterministic moments are implemented for n = 1")
        r = heat_rule() if rule is None else rule
        return Estimate(scale * r.moment(g), 0.0, "quadrature")
    if method == "montecarlo":
        spec = SamplerSpec() if spec is None else spec
        Y = sample_cloud(n, spec, cache_dir)
        vals = np.prod(Y ** np.asarray(g, dtype=float), axis=1)
        est = _mc_mean(vals)
        s = scale / spec.t ** (moment_weight(g) / 2.0)
        return Estimate(est.value * s, est.stderr * s, "montecarlo")
    raise ValueError(f"unknown method {method!r}")
