"""Command-line driver.

    subfrac hk eval --t 1 --point 0,0,0
    subfrac riesz sigma --alpha 0
    subfrac psi eval --alpha -1 --phi "gaussian(a=1)" --point 0.3,0,0.1
    subfrac verify moments --n 1 --paths 2000000 --seed 7
    subfrac table sigma --alphas -4,-2,0,2

Every result is one JSON object per line carrying the value, its error
estimate, the full run configuration and its digest.  Tables are CSV.
Configuration precedence: command-line flag, then SUBFRAC_* environment
variable, then a key=value config file, then the built-in default.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass

import numpy as np

from . import ccnorm, fraclap, heatkernel, hgroup, jets, riesz
from .fnspec import DslError, build_fn

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFY = 2

ENV_PREFIX = "SUBFRAC_"


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ config


@dataclass(frozen=True)
class RunConfig:
    n: int = 1
    nodes: int = 16
    tol: float = 1e-12
    paths: int = 200_000
    steps: int = 2000
    seed: int = 0
    cache_dir: str = ""
    format: str = "json"

    def __post_init__(self):
        if self.n < 1:
            raise UsageError("n must be at least 1")
        if self.format not in ("json", "csv"):
            raise UsageError(f"unknown output format {self.format!r}")

    def sampler(self) -> heatkernel.SamplerSpec:
        return heatkernel.SamplerSpec(paths=self.paths, steps=self.steps, seed=self.seed)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _convert(name: str, raw):
    kind = type(_FIELDS[name].default)
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return str(raw)
    except ValueError as exc:
        raise UsageError(f"bad value for {name}: {raw!r}") from exc


def read_config_file(path: str) -> dict:
    """Parse 'key = value' lines; '#' starts a comment."""
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for no, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{no}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELDS:
            raise UsageError(f"{path}:{no}: unknown key {key!r}")
        out[key] = val
    return out


def resolve_config(flags: dict, env=None, config_path: str | None = None) -> RunConfig:
    env = os.environ if env is None else env
    config_path = config_path or env.get(ENV_PREFIX + "CONFIG")
    from_file = read_config_file(config_path) if config_path else {}
    vals = {}
    for name in _FIELDS:
        if flags.get(name) is not None:
            vals[name] = _convert(name, flags[name])
        elif ENV_PREFIX + name.upper() in env:
            vals[name] = _convert(name, env[ENV_PREFIX + name.upper()])
        elif name in from_file:
            vals[name] = _convert(name, from_file[name])
    return RunConfig(**vals)


# ------------------------------------------------------------------- cache


class ResultCache:
    """Content-addressed JSON records; writes go through a temp file and rename."""

    def __init__(self, root: str):
        self.root = root
        os.makedirs(root, exist_ok=True)

    @staticmethod
    def key(op: str, params: dict, digest: str) -> str:
        blob = json.dumps([op, params, digest], sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def _path(self, key: str) -> str:
        return os.path.join(self.root, key + ".json")

    def get(self, key: str):
        try:
            with open(self._path(key), encoding="utf-8") as fh:
                return json.load(fh)
        except FileNotFoundError:
            return None

    def put(self, key: str, record: dict):
        fd, tmp = tempfile.mkstemp(dir=self.root, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(record, fh, sort_keys=True)
            os.replace(tmp, self._path(key))
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


# ------------------------------------------------------------------ context


class Context:
    def __init__(self, cfg: RunConfig, out: str | None, use_cache: bool, force: bool, stream):
        self.cfg = cfg
        self.out = out
        self.force = force
        self.stream = stream
        self.cache = ResultCache(cfg.cache_dir) if (use_cache and cfg.cache_dir) else None
        self.cloud_dir = os.path.join(cfg.cache_dir, "clouds") if cfg.cache_dir else None

    def guard(self, n: int):
        if n > 2 and not self.force:
            raise UsageError(f"n = {n} exceeds desk scale; pass --force to run anyway")

    def compute(self, op: str, params: dict, fn) -> dict:
        """Run fn() -> result dict, consulting the cache."""
        key = ResultCache.key(op, params, self.cfg.digest())
        if self.cache is not None:
            hit = self.cache.get(key)
            if hit is not None:
                return hit["result"]
        result = fn()
        if self.cache is not None:
            self.cache.put(key, {"op": op, "params": params, "digest": self.cfg.digest(),
                                 "result": result, "timestamp": time.time()})
        return result

    def emit(self, op: str, params: dict, result: dict):
        rec = {"op": op, "params": params, **result, "config": self.cfg.to_dict(),
               "digest": self.cfg.digest(), "seed": self.cfg.seed}
        line = json.dumps(rec, sort_keys=True)
        print(line, file=self.stream)
        if self.out:
            with open(self.out, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
        return rec


# ----------------------------------------------------------------- parsing


def _floats(text: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from exc


def _point(text: str) -> np.ndarray:
    vals = _floats(text)
    try:
        return hgroup.as_point(vals)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _phi(text: str):
    try:
        return build_fn(text)
    except DslError as exc:
        raise UsageError(f"bad function {text!r}: {exc}") from exc


def _n_of_gamma(g):
    try:
        return hgroup.dim_of(np.zeros(len(g)))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


# ---------------------------------------------------------------- commands


def cmd_hk_eval(ctx, a):
    x = _point(a.point)
    ctx.guard(hgroup.dim_of(x))
    params = {"t": a.t, "point": x.tolist()}

    def run():
        r = heatkernel.kernel_eval(a.t, x, ctx.cfg.tol)
        return {"value": r.value, "stderr": r.error, "method": r.method}

    ctx.emit("hk eval", params, ctx.compute("hk eval", params, run))
    return EXIT_OK


def cmd_hk_moment(ctx, a):
    g = _ints(a.gamma)
    n = _n_of_gamma(g)
    ctx.guard(n)
    params = {"gamma": g, "t": a.t, "method": a.method}

    def run():
        r = heatkernel.hk_moment(g, a.t, a.method, spec=ctx.cfg.sampler(), cache_dir=ctx.cloud_dir)
        return {"value": r.value, "stderr": r.stderr, "method": r.method}

    ctx.emit("hk moment", params, ctx.compute("hk moment", params, run))
    return EXIT_OK


def cmd_ccnorm_eval(ctx, a):
    x = _point(a.point)
    params = {"point": x.tolist()}

    def run():
        r = ccnorm.cc_eval(x)
        return {"value": r.value, "stderr": 0.0, "theta": r.theta, "method": "bisection"}

    ctx.emit("ccnorm eval", params, ctx.compute("ccnorm eval", params, run))
    return EXIT_OK


def cmd_riesz(ctx, a):
    what = a.what
    if what == "palpha":
        x = _point(a.point)
        ctx.guard(hgroup.dim_of(x))
        params = {"alpha": a.alpha, "point": x.tolist(), "method": a.method}

        def run():
            return {"value": float(riesz.p_alpha(a.alpha, x, a.method)), "stderr": 0.0, "method": a.method}
    elif what in ("sigma", "dalpha", "bmoment"):
        n = ctx.cfg.n
        if what == "bmoment":
            g = _ints(a.gamma)
            n = _n_of_gamma(g)
        ctx.guard(n)
        method = a.method
        params = {"alpha": a.alpha, "n": n, "method": method}
        if what == "dalpha":
            params["i"] = a.i
        if what == "bmoment":
            params.update(gamma=g, symmetrize=a.symmetrize)

        def run():
            spec = ctx.cfg.sampler()
            if what == "sigma":
                r = riesz.sigma(a.alpha, n, method, spec, ctx.cloud_dir)
            elif what == "dalpha":
                r = riesz.d_alpha(a.alpha, a.i, n, method, spec, ctx.cloud_dir)
            else:
                r = riesz.boundary_moment(g, a.alpha, method, spec, cache_dir=ctx.cloud_dir, symmetrize=a.symmetrize)
            return {"value": r.value, "stderr": r.stderr, "method": r.method}
    elif what == "conv":
        x = _point(a.point)
        if hgroup.dim_of(x) != 1:
            raise UsageError("riesz conv runs on H^1 only")
        params = {"alpha": a.alpha, "beta": a.beta, "point": x.tolist(), "samples": a.samples}

        def run():
            r = riesz.convolution_check(a.alpha, a.beta, x, a.samples, ctx.cfg.seed)
            return {"value": r.rhs, "stderr": r.stderr, "lhs": r.lhs, "gap": r.gap, "method": "montecarlo"}
    else:  # pragma: no cover - argparse restricts choices
        raise UsageError(f"unknown riesz command {what!r}")
    ctx.emit(f"riesz {what}", params, ctx.compute(f"riesz {what}", params, run))
    return EXIT_OK


def _psi_record(r: fraclap.PsiResult) -> dict:
    return {"value": r.value, "stderr": r.stderr, "route": r.route, "flags": list(r.flags)}


def cmd_psi_eval(ctx, a):
    x = _point(a.point)
    ctx.guard(hgroup.dim_of(x))
    phi = _phi(a.phi)
    params = {"alpha": a.alpha, "phi": phi.descriptor(), "point": x.tolist(), "route": a.route}

    def run():
        st = fraclap.StripSelector.of(a.alpha)
        if st.at_pole or a.route == "pole":
            if not st.at_pole:
                raise UsageError(f"alpha = {a.alpha} is not a pole")
            return _psi_record(fraclap.psi_pole(phi, x, st.m if a.alpha < 0 else 0))
        if a.route == "time":
            return _psi_record(fraclap.psi_time(phi, x, a.alpha, cache_dir=ctx.cloud_dir))
        return _psi_record(fraclap.psi_spatial(phi, x, a.alpha))

    ctx.emit("psi eval", params, ctx.compute("psi eval", params, run))
    return EXIT_OK


def cmd_fraclap_apply(ctx, a):
    x = _point(a.point)
    ctx.guard(hgroup.dim_of(x))
    phi = _phi(a.phi)
    params = {"s": a.s, "phi": phi.descriptor(), "point": x.tolist(), "route": a.route}

    def run():
        return _psi_record(fraclap.frac_power(phi, a.s, x, route=a.route))

    ctx.emit("fraclap apply", params, ctx.compute("fraclap apply", params, run))
    return EXIT_OK


# ------------------------------------------------------------------- verify


def _check(ctx, suite, name, value, target, tol, relative=True, stderr=0.0):
    gap = abs(value - target) / (abs(target) if relative else 1.0)
    ok = bool(gap <= tol)
    ctx.emit(f"verify {suite}", {"check": name},
             {"value": value, "stderr": stderr, "target": target, "tol": tol, "gap": gap,
              "status": "PASS" if ok else "FAIL"})
    return ok


def _suite_moments(ctx, a):
    n = ctx.cfg.n
    ctx.guard(n)
    spec = ctx.cfg.sampler()
    q = 2 * n + 1

    def mom(g):
        params = {"gamma": list(g), "t": 1.0, "method": "montecarlo"}

        def run():
            r = heatkernel.hk_moment(g, 1.0, "montecarlo", spec=spec, cache_dir=ctx.cloud_dir)
            return {"value": r.value, "stderr": r.stderr}

        return ctx.compute("hk moment", params, run)

    def e(i, p, c=0):
        g = [0] * q
        g[i] = p
        g[-1] = c
        return tuple(g)

    ok = True
    total = sum(mom(e(i, 2))["value"] for i in range(2 * n))
    ok &= _check(ctx, "moments", "sum_i x_i^2", total, 4.0 * n, 0.01)
    r = mom(e(0, 4))
    ok &= _check(ctx, "moments", "x_1^4", r["value"], 12.0, 0.02, stderr=r["stderr"])
    r = mom(e(0, 0, 2))
    ok &= _check(ctx, "moments", "x_c^2", r["value"], float(n), 0.02, stderr=r["stderr"])
    r = mom(e(0, 6))
    ok &= _check(ctx, "moments", "x_1^6", r["value"], 120.0, 0.05, stderr=r["stderr"])
    r = mom(e(0, 2, 2))
    ok &= _check(ctx, "moments", "x_1^2 x_c^2", r["value"], 2.0 * (3 * n + 2) / 3.0, 0.05, stderr=r["stderr"])
    return ok


def _suite_kernel(ctx, a):
    rng = np.random.default_rng(ctx.cfg.seed)
    ok = True
    rule = heatkernel.heat_rule()
    ok &= _check(ctx, "kernel", "normalization", float(np.sum(rule.weights)), 1.0, 1e-4)
    worst = 0.0
    for _ in range(100):
        t, s = rng.uniform(0.3, 3.0), rng.uniform(0.5, 2.0)
        x = rng.normal(size=3)
        lhs = float(heatkernel.hk_eval(s * s * t, hgroup.dilate(s, x)))
        rhs = s ** -4 * float(heatkernel.hk_eval(t, x))
        worst = max(worst, abs(lhs - rhs) / abs(rhs))
    ok &= _check(ctx, "kernel", "homogeneity", worst, 0.0, 1e-10, relative=False)
    worst = 0.0
    for _ in range(100):
        t, x = rng.uniform(0.3, 3.0), rng.normal(size=3)
        a1, a2 = float(heatkernel.hk_eval(t, x)), float(heatkernel.hk_eval(t, hgroup.inverse(x)))
        worst = max(worst, abs(a1 - a2) / abs(a1))
    ok &= _check(ctx, "kernel", "symmetry", worst, 0.0, 1e-10, relative=False)
    eps = np.array([0.08, 0.04, 0.02, 0.01])
    for k in range(5):
        t, x = rng.uniform(0.5, 2.0), rng.normal(scale=0.7, size=3)
        res = np.array([abs(heatkernel.pde_residual(t, x, e)) for e in eps])
        slope = float(np.polyfit(np.log(eps), np.log(res), 1)[0])
        ok &= _check(ctx, "kernel", f"pde slope {k}", slope, 2.0, 0.3, relative=False)
    return ok


def _suite_sigma(ctx, a):
    ok = _check(ctx, "sigma", "sigma(0)", riesz.sigma(0.0, 1).value, 2.0, 1e-3)
    r = riesz.d_alpha(-2.0, 1, ctx.cfg.n, "montecarlo", ctx.cfg.sampler(), ctx.cloud_dir)
    ok &= _check(ctx, "sigma", "d(-2)", r.value, 4.0, 0.01, stderr=r.stderr)
    return ok


def _suite_collapse(ctx, a):
    n = ctx.cfg.n
    ctx.guard(n)
    phi = jets.Gaussian(1.0)
    x = hgroup.as_point(np.linspace(0.2, -0.3, 2 * n + 1))
    ref = fraclap.MomentTable.reference(n)
    ok = True
    for m in (1, 2, 3):
        v = fraclap.psi_pole(phi, x, m, ref).value
        ok &= _check(ctx, "collapse", f"pole m={m}", v, jets.sublaplacian_power(phi, m, x), 1e-10)
    return ok


_SUITES = {
    "moments": _suite_moments,
    "kernel": _suite_kernel,
    "sigma": _suite_sigma,
    "collapse": _suite_collapse,
}


def cmd_verify(ctx, a):
    ok = _SUITES[a.suite](ctx, a)
    return EXIT_OK if ok else EXIT_VERIFY


# -------------------------------------------------------------------- table


def cmd_table(ctx, a):
    alphas = _floats(a.alphas)
    rows = []
    for al in alphas:
        if a.what == "sigma":
            r = riesz.sigma(al, ctx.cfg.n, a.method, ctx.cfg.sampler(), ctx.cloud_dir)
            rows.append((al, r.value, r.stderr))
        elif a.what == "dalpha":
            r = riesz.d_alpha(al, 1, ctx.cfg.n, a.method, ctx.cfg.sampler(), ctx.cloud_dir)
            rows.append((al, r.value, r.stderr))
        else:
            if not (a.phi and a.point):
                raise UsageError("table psi needs --phi and --point")
            x = _point(a.point)
            ctx.guard(hgroup.dim_of(x))
            phi = _phi(a.phi)
            st = fraclap.StripSelector.of(al)
            r = fraclap.psi_pole(phi, x, st.m) if st.at_pole else fraclap.psi_spatial(phi, x, al)
            rows.append((al, r.value, r.stderr))
    if ctx.cfg.format == "json":
        for al, v, se in rows:
            ctx.emit(f"table {a.what}", {"alpha": al}, {"value": v, "stderr": se})
        return EXIT_OK
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["alpha", "value", "stderr"])
    for row in rows:
        w.writerow([repr(float(v)) for v in row])
    ctx.stream.write(buf.getvalue())
    if ctx.out:
        with open(ctx.out, "w", encoding="utf-8") as fh:
            fh.write(buf.getvalue())
    return EXIT_OK


# ------------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("run configuration")
    g.add_argument("--n", type=int, help="group dimension (H^n)")
    g.add_argument("--nodes", type=int, help="Gauss nodes per panel")
    g.add_argument("--tol", type=float, help="quadrature tolerance")
    g.add_argument("--paths", type=int, help="Monte Carlo paths")
    g.add_argument("--steps", type=int, help="time steps per path")
    g.add_argument("--seed", type=int, help="random seed")
    g.add_argument("--cache-dir", dest="cache_dir", help="result cache directory")
    g.add_argument("--format", choices=["json", "csv"], help="output format")
    g.add_argument("--config", help="key=value configuration file")
    g.add_argument("--out", help="also write the report to this file")
    g.add_argument("--no-cache", action="store_true", help="ignore the result cache")
    g.add_argument("--force", action="store_true", help="allow n > 2")

    p = _Parser(prog="subfrac", description="Fractional powers of the sub-Laplacian on H^n")
    top = p.add_subparsers(dest="group", required=True)

    hk = top.add_parser("hk", help="heat kernel").add_subparsers(dest="cmd", required=True)
    s = hk.add_parser("eval", parents=[common])
    s.add_argument("--t", type=float, default=1.0)
    s.add_argument("--point", required=True)
    s.set_defaults(func=cmd_hk_eval)
    s = hk.add_parser("moment", parents=[common])
    s.add_argument("--gamma", required=True)
    s.add_argument("--t", type=float, default=1.0)
    s.add_argument("--method", choices=["quadrature", "montecarlo"], default="quadrature")
    s.set_defaults(func=cmd_hk_moment)

    cc = top.add_parser("ccnorm", help="Carnot-Caratheodory norm").add_subparsers(dest="cmd", required=True)
    s = cc.add_parser("eval", parents=[common])
    s.add_argument("--point", required=True)
    s.set_defaults(func=cmd_ccnorm_eval)

    rz = top.add_parser("riesz", help="kernels and sphere integrals").add_subparsers(dest="what", required=True)
    for what in ("palpha", "sigma", "dalpha", "bmoment", "conv"):
        s = rz.add_parser(what, parents=[common])
        s.add_argument("--alpha", type=float, required=True)
        s.set_defaults(func=cmd_riesz)
        if what in ("palpha", "conv"):
            s.add_argument("--point", required=True)
        if what == "palpha":
            s.add_argument("--method", choices=["direct", "profile"], default="direct")
        if what in ("sigma", "dalpha", "bmoment"):
            s.add_argument("--method", choices=["quadrature", "montecarlo"],
                           default="montecarlo" if what == "dalpha" else "quadrature")
        if what == "dalpha":
            s.add_argument("--i", type=int, default=1)
        if what == "bmoment":
            s.add_argument("--gamma", required=True)
            s.add_argument("--symmetrize", action="store_true")
        if what == "conv":
            s.add_argument("--beta", type=float, required=True)
            s.add_argument("--samples", type=int, default=2_000_000)

    ps = top.add_parser("psi", help="continued map psi(x, alpha)").add_subparsers(dest="cmd", required=True)
    s = ps.add_parser("eval", parents=[common])
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--phi", required=True)
    s.add_argument("--point", required=True)
    s.add_argument("--route", choices=["spatial", "time", "pole"], default="spatial")
    s.set_defaults(func=cmd_psi_eval)

    fl = top.add_parser("fraclap", help="fractional powers").add_subparsers(dest="cmd", required=True)
    s = fl.add_parser("apply", parents=[common])
    s.add_argument("--s", required=True, help="exponent, parsed as an exact decimal")
    s.add_argument("--phi", required=True)
    s.add_argument("--point", required=True)
    s.add_argument("--route", choices=["spatial", "time"], default="spatial")
    s.set_defaults(func=cmd_fraclap_apply)

    s = top.add_parser("verify", parents=[common], help="run a verification suite")
    s.add_argument("suite", choices=sorted(_SUITES))
    s.set_defaults(func=cmd_verify)

    s = top.add_parser("table", parents=[common], help="tabulate a quantity over alpha")
    s.add_argument("what", choices=["sigma", "dalpha", "psi"])
    s.add_argument("--alphas", required=True)
    s.add_argument("--method", choices=["quadrature", "montecarlo"], default="quadrature")
    s.add_argument("--phi")
    s.add_argument("--point")
    s.set_defaults(func=cmd_table, table=True)
    return p


def main(argv=None, stream=None) -> int:
    stream = sys.stdout if stream is None else stream
    try:
        args = build_parser().parse_args(argv)
        flags = {k: getattr(args, k, None) for k in _FIELDS}
        if getattr(args, "table", False) and flags["format"] is None:
            flags["format"] = "csv"
        cfg = resolve_config(flags, config_path=args.config)
        ctx = Context(cfg, args.out, not args.no_cache, args.force, stream)
        return args.func(ctx, args)
    except UsageError as exc:
        print(f"subfrac: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, ArithmeticError) as exc:
        print(f"subfrac: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
