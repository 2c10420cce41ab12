"""Test-function descriptor language.

Grammar::

    call  := NAME '(' [arg (';' arg)*] ')'
    arg   := NAME '=' value
    value := NUMBER | '[' [NUMBER (',' NUMBER)*] ']' | call

Examples: ``gaussian(a=1.0)``, ``poly_gauss(gamma=[2,0,0];a=0.5)``,
``koranyi_gauss()``, ``translate(base=gaussian(a=1.0);z=[0.5,0.0,0.1])``.
Errors report the byte offset of the offending token.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from . import jets


class DslError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset
        self.reason = message


@dataclass(frozen=True)
class FnDescriptor:
    """Parsed descriptor: a family name plus canonical parameters."""

    name: str
    params: tuple  # ((key, value), ...) in schema order

    def as_dict(self):
        return dict(self.params)

    def __str__(self):
        return format_call(self.name, self.as_dict())

    def build(self) -> jets.TestFunction:
        p = self.as_dict()
        if self.name == "gaussian":
            return jets.Gaussian(a=p["a"])
        if self.name == "poly_gauss":
            return jets.PolyGauss(gamma=tuple(p["gamma"]), a=p["a"])
        if self.name == "koranyi_gauss":
            return jets.KoranyiGauss()
        if self.name == "translate":
            return jets.Translated(base=p["base"].build(), z=tuple(p["z"]))
        raise AssertionError(self.name)


# name -> ordered {key: (kind, default)}; default None means required
_SCHEMA = {
    "gaussian": {"a": ("float", 1.0)},
    "poly_gauss": {"gamma": ("intlist", None), "a": ("float", 1.0)},
    "koranyi_gauss": {},
    "translate": {"base": ("call", None), "z": ("floatlist", None)},
}

_TOKEN = re.compile(
    r"\s*(?:(?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<sym>[()\[\];=,]))"
)


def _fmt_value(v):
    if isinstance(v, FnDescriptor):
        return str(v)
    if isinstance(v, (list, tuple)):
        return "[" + ",".join(_fmt_value(x) for x in v) + "]"
    if isinstance(v, bool):
        raise TypeError("booleans are not part of the language")
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, str):
        return v
    raise TypeError(f"cannot format {v!r}")


def format_call(name: str, params: dict) -> str:
    return name + "(" + ";".join(f"{k}={_fmt_value(v)}" for k, v in params.items()) + ")"


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.raw = text.encode("utf-8")

    def offset(self, pos=None) -> int:
        pos = self.pos if pos is None else pos
        return len(self.text[:pos].encode("utf-8"))

    def error(self, msg, pos=None):
        raise DslError(msg, self.offset(pos))

    def peek(self):
        m = _TOKEN.match(self.text, self.pos)
        if m is None:
            rest = self.text[self.pos:]
            stripped = len(rest) - len(rest.lstrip())
            if self.pos + stripped >= len(self.text):
                return None, None, len(self.text)
            self.error(f"unexpected character {rest.lstrip()[0]!r}", self.pos + stripped)
        kind = m.lastgroup
        return kind, m.group(kind), m.start(kind)

    def take(self):
        kind, val, start = self.peek()
        if kind is not None:
            self.pos = _TOKEN.match(self.text, self.pos).end()
        return kind, val, start

    def expect(self, sym):
        kind, val, start = self.take()
        if kind != "sym" or val != sym:
            self.error(f"expected {sym!r}", start)
        return start

    def call(self) -> FnDescriptor:
        kind, name, start = self.take()
        if kind != "name":
            self.error("expected a function name", start)
        if name not in _SCHEMA:
            self.error(f"unknown function {name!r}", start)
        schema = _SCHEMA[name]
        self.expect("(")
        got = {}
        kind, val, s = self.peek()
        if not (kind == "sym" and val == ")"):
            while True:
                kind, key, kstart = self.take()
                if kind != "name":
                    self.error("expected a parameter name", kstart)
                if key not in schema:
                    self.error(f"unknown parameter {key!r} for {name}", kstart)
                if key in got:
                    self.error(f"duplicate parameter {key!r}", kstart)
                self.expect("=")
                got[key] = self.value(schema[key][0])
                kind, val, s = self.take()
                if kind == "sym" and val == ";":
                    continue
                if kind == "sym" and val == ")":
                    break
                self.error("expected ';' or ')'", s)
        else:
            self.take()
        params = []
        for key, (_, default) in schema.items():
            if key in got:
                params.append((key, got[key]))
            elif default is None:
                self.error(f"missing required parameter {key!r} for {name}", start)
            else:
                params.append((key, default))
        return FnDescriptor(name, tuple(params))

    def number(self, kind_wanted):
        kind, val, start = self.take()
        if kind != "num":
            self.error("expected a number", start)
        if kind_wanted == "int":
            if re.fullmatch(r"[-+]?\d+", val) is None:
                self.error("expected an integer", start)
            return int(val)
        return float(val)

    def value(self, kind):
        k, v, start = self.peek()
        if kind == "float":
            return self.number("float")
        if kind in ("intlist", "floatlist"):
            self.expect("[")
            out = []
            k, v, s = self.peek()
            if k == "sym" and v == "]":
                self.take()
                return tuple(out)
            while True:
                out.append(self.number("int" if kind == "intlist" else "float"))
                k, v, s = self.take()
                if k == "sym" and v == ",":
                    continue
                if k == "sym" and v == "]":
                    return tuple(out)
                self.error("expected ',' or ']'", s)
        if kind == "call":
            return self.call()
        raise AssertionError(kind)


def parse_fn(text: str) -> FnDescriptor:
    """Parse a descriptor string; raises :class:`DslError` with a byte offset."""
    p = _Parser(text)
    d = p.call()
    kind, val, start = p.peek()
    if kind is not None:
        p.error("trailing input", start)
    _validate(d, p)
    return d


def _validate(d: FnDescriptor, p: _Parser):
    try:
        d.build()
    except ValueError as exc:
        raise DslError(f"invalid parameters for {d.name}: {exc}", 0) from exc


def build_fn(text: str) -> jets.TestFunction:
    return parse_fn(text).build()
