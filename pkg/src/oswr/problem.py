"""Problem definition: coefficient expressions, subdomain decomposition,
transmission parameters, and the text configuration format.

Coefficients (diffusion nu, advection b, reaction c, porosity omega,
initial data u0, source f) are closed-form expression trees over the
variables x, y, t.  Subdomains are axis-aligned boxes tiling the global
domain; interfaces between neighbors are flat (axis-aligned) faces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ConfigError",
    "EvalError",
    "CoefficientExpression",
    "SubdomainSpec",
    "TransmissionParams",
    "ExperimentConfig",
    "Diagnostic",
    "parse_expression",
    "parse_config",
    "serialize_config",
    "validate_problem",
    "find_interfaces",
]


class ConfigError(Exception):
    """Raised for malformed configuration text (carries line/column)."""

    def __init__(self, message, line=None, col=None):
        self.line = line
        self.col = col
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", col {col}" if col is not None else "") + ")"
        super().__init__(message + loc)


class EvalError(Exception):
    """Raised when expression evaluation hits a domain error."""


# ---------------------------------------------------------------------------
# Expression language: variables {x, y, t}, literals, + - * / ^, unary -,
# functions {sin, cos, sqrt, exp, abs}.
# ---------------------------------------------------------------------------

_FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "sqrt": np.sqrt,
    "exp": np.exp,
    "abs": np.abs,
    # internal nodes produced by differentiation only (not parseable)
    "sign": np.sign,
}

_VARS = ("x", "y", "t")


class _Tokenizer:
    def __init__(self, text):
        self.text = text
        self.pos = 0

    def error(self, msg):
        raise ConfigError(msg, col=self.pos + 1)

    def peek(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1
        if self.pos >= len(self.text):
            return None
        return self.text[self.pos]

    def next_token(self):
        ch = self.peek()
        if ch is None:
            return None
        start = self.pos
        if ch in "+-*/^()":
            self.pos += 1
            return ("op", ch, start)
        if ch.isdigit() or ch == ".":
            j = self.pos
            seen_e = False
            while j < len(self.text):
                c = self.text[j]
                if c.isdigit() or c == ".":
                    j += 1
                elif c in "eE" and not seen_e and j + 1 < len(self.text) and (
                    self.text[j + 1].isdigit() or self.text[j + 1] in "+-"
                ):
                    seen_e = True
                    j += 2 if self.text[j + 1] in "+-" else 1
                else:
                    break
            tok = self.text[self.pos : j]
            try:
                val = float(tok)
            except ValueError:
                self.error(f"bad number {tok!r}")
            self.pos = j
            return ("num", val, start)
        if ch.isalpha() or ch == "_":
            j = self.pos
            while j < len(self.text) and (self.text[j].isalnum() or self.text[j] == "_"):
                j += 1
            name = self.text[self.pos : j]
            self.pos = j
            return ("name", name, start)
        self.error(f"unexpected character {ch!r}")


class _Parser:
    """Recursive descent; ^ binds tightest (right assoc.), then unary -,
    then * /, then + -."""

    def __init__(self, text):
        self.tz = _Tokenizer(text)
        self.tok = self.tz.next_token()

    def advance(self):
        self.tok = self.tz.next_token()

    def expect_op(self, op):
        if self.tok is None or self.tok[0] != "op" or self.tok[1] != op:
            self.error(f"expected {op!r}")
        self.advance()

    def error(self, msg):
        col = self.tok[2] + 1 if self.tok is not None else self.tz.pos + 1
        raise ConfigError(msg, col=col)

    def parse(self):
        node = self.expr()
        if self.tok is not None:
            self.error(f"trailing input at {self.tok[1]!r}")
        return node

    def expr(self):
        node = self.term()
        while self.tok is not None and self.tok[0] == "op" and self.tok[1] in "+-":
            op = self.tok[1]
            self.advance()
            rhs = self.term()
            node = ("add" if op == "+" else "sub", node, rhs)
        return node

    def term(self):
        node = self.factor()
        while self.tok is not None and self.tok[0] == "op" and self.tok[1] in "*/":
            op = self.tok[1]
            self.advance()
            rhs = self.factor()
            node = ("mul" if op == "*" else "div", node, rhs)
        return node

    def factor(self):
        if self.tok is not None and self.tok[0] == "op" and self.tok[1] == "-":
            self.advance()
            return ("neg", self.factor())
        if self.tok is not None and self.tok[0] == "op" and self.tok[1] == "+":
            self.advance()
            return self.factor()
        return self.power()

    def power(self):
        base = self.atom()
        if self.tok is not None and self.tok[0] == "op" and self.tok[1] == "^":
            self.advance()
            expo = self.factor()  # right associative, allows 2^-x
            return ("pow", base, expo)
        return base

    def atom(self):
        tok = self.tok
        if tok is None:
            self.error("unexpected end of expression")
        kind, val, _ = tok
        if kind == "num":
            self.advance()
            return ("num", val)
        if kind == "name":
            self.advance()
            if val in _VARS:
                return ("var", val)
            if val in ("pi",):
                return ("num", math.pi)
            if val in _FUNCTIONS and val != "sign":
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return ("call", val, arg)
            self.error(f"unknown name {val!r}")
        if kind == "op" and val == "(":
            self.advance()
            node = self.expr()
            self.expect_op(")")
            return node
        self.error(f"unexpected token {val!r}")


def _eval_node(node, x, y, t):
    tag = node[0]
    if tag == "num":
        return node[1]
    if tag == "var":
        return {"x": x, "y": y, "t": t}[node[1]]
    if tag == "neg":
        return -_eval_node(node[1], x, y, t)
    if tag == "add":
        return _eval_node(node[1], x, y, t) + _eval_node(node[2], x, y, t)
    if tag == "sub":
        return _eval_node(node[1], x, y, t) - _eval_node(node[2], x, y, t)
    if tag == "mul":
        return _eval_node(node[1], x, y, t) * _eval_node(node[2], x, y, t)
    if tag == "div":
        den = _eval_node(node[2], x, y, t)
        if np.any(np.asarray(den) == 0.0):
            raise EvalError(_domain_error_msg("division by zero", den == 0.0, x, y, t))
        return _eval_node(node[1], x, y, t) / den
    if tag == "pow":
        return _eval_node(node[1], x, y, t) ** _eval_node(node[2], x, y, t)
    if tag == "call":
        arg = _eval_node(node[2], x, y, t)
        if node[1] == "sqrt" and np.any(np.asarray(arg) < 0.0):
            raise EvalError(_domain_error_msg("sqrt of negative value", np.asarray(arg) < 0.0, x, y, t))
        return _FUNCTIONS[node[1]](arg)
    raise ValueError(f"bad node {tag!r}")


def _domain_error_msg(what, mask, x, y, t):
    mask = np.broadcast_to(mask, np.broadcast(np.asarray(x), np.asarray(y), np.asarray(t)).shape)
    idx = np.argwhere(mask)
    pt = tuple(
        float(np.broadcast_to(np.asarray(v, dtype=float), mask.shape)[tuple(idx[0])])
        for v in (x, y, t)
    ) if idx.size else None
    return f"{what} at point (x, y, t) = {pt}"


def _diff_node(node, var):
    tag = node[0]
    if tag == "num":
        return ("num", 0.0)
    if tag == "var":
        return ("num", 1.0 if node[1] == var else 0.0)
    if tag == "neg":
        return ("neg", _diff_node(node[1], var))
    if tag in ("add", "sub"):
        return (tag, _diff_node(node[1], var), _diff_node(node[2], var))
    if tag == "mul":
        u, v = node[1], node[2]
        return ("add", ("mul", _diff_node(u, var), v), ("mul", u, _diff_node(v, var)))
    if tag == "div":
        u, v = node[1], node[2]
        num = ("sub", ("mul", _diff_node(u, var), v), ("mul", u, _diff_node(v, var)))
        return ("div", num, ("mul", v, v))
    if tag == "pow":
        base, expo = node[1], node[2]
        if expo[0] != "num":
            raise ValueError("differentiation of non-constant exponents is unsupported")
        n = expo[1]
        return ("mul", ("num", n), ("mul", ("pow", base, ("num", n - 1.0)), _diff_node(base, var)))
    if tag == "call":
        fname, arg = node[1], node[2]
        da = _diff_node(arg, var)
        if fname == "sin":
            return ("mul", ("call", "cos", arg), da)
        if fname == "cos":
            return ("neg", ("mul", ("call", "sin", arg), da))
        if fname == "exp":
            return ("mul", node, da)
        if fname == "sqrt":
            return ("div", da, ("mul", ("num", 2.0), node))
        if fname == "abs":
            return ("mul", ("call", "sign", arg), da)
        if fname == "sign":
            return ("num", 0.0)
    raise ValueError(f"bad node {tag!r}")


def _simplify(node):
    tag = node[0]
    if tag in ("num", "var"):
        return node
    if tag == "neg":
        a = _simplify(node[1])
        if a[0] == "num":
            return ("num", -a[1])
        return ("neg", a)
    if tag == "call":
        a = _simplify(node[2])
        return ("call", node[1], a)
    a, b = _simplify(node[1]), _simplify(node[2])
    if tag == "add":
        if a == ("num", 0.0):
            return b
        if b == ("num", 0.0):
            return a
    if tag == "sub" and b == ("num", 0.0):
        return a
    if tag == "mul":
        if a == ("num", 0.0) or b == ("num", 0.0):
            return ("num", 0.0)
        if a == ("num", 1.0):
            return b
        if b == ("num", 1.0):
            return a
    if tag == "div" and a == ("num", 0.0):
        return ("num", 0.0)
    if tag == "pow" and b == ("num", 1.0):
        return a
    if a[0] == "num" and b[0] == "num" and tag in ("add", "sub", "mul"):
        op = {"add": lambda u, v: u + v, "sub": lambda u, v: u - v, "mul": lambda u, v: u * v}[tag]
        return ("num", op(a[1], b[1]))
    return (tag, a, b)


_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4}


def _to_string(node, parent_prec=0):
    tag = node[0]
    if tag == "num":
        v = node[1]
        if v == int(v) and abs(v) < 1e16:
            return repr(int(v))
        return repr(v)
    if tag == "var":
        return node[1]
    if tag == "call":
        return f"{node[1]}({_to_string(node[2])})"
    if tag == "neg":
        s = "-" + _to_string(node[1], _PREC["neg"])
        return f"({s})" if parent_prec > _PREC["neg"] else s
    op = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}[tag]
    prec = _PREC[tag]
    left = _to_string(node[1], prec)
    # - and / are left associative; ^ is right associative
    right = _to_string(node[2], prec + (1 if tag in ("sub", "div") else 0))
    if tag == "pow":
        left = _to_string(node[1], prec + 1)
        right = _to_string(node[2], prec)
    s = f"{left}{op}{right}"
    return f"({s})" if parent_prec > prec else s


@dataclass(frozen=True)
class CoefficientExpression:
    """A closed-form scalar field over (x, y, t)."""

    ast: tuple
    source: str = ""

    def __call__(self, x, y=0.0, t=0.0):
        """Evaluate at points; numpy arrays broadcast elementwise."""
        val = _eval_node(self.ast, x, y, t)
        out = np.asarray(val, dtype=float)
        if not np.all(np.isfinite(out)):
            raise EvalError(_domain_error_msg("non-finite value", ~np.isfinite(out), x, y, t))
        shape = np.broadcast(np.asarray(x), np.asarray(y), np.asarray(t)).shape
        if out.shape != shape:
            out = np.broadcast_to(out, shape).copy()
        return out if shape else float(out)

    def diff(self, var):
        return CoefficientExpression(_simplify(_diff_node(self.ast, var)))

    def depends_on(self, var):
        def walk(node):
            if node[0] == "var":
                return node[1] == var
            if node[0] in ("num",):
                return False
            return any(walk(c) for c in node[1:] if isinstance(c, tuple))

        return walk(self.ast)

    def is_zero(self):
        return _simplify(self.ast) == ("num", 0.0)

    def __str__(self):
        return _to_string(self.ast)


def parse_expression(text):
    """Parse an expression string into a CoefficientExpression."""
    node = _Parser(text).parse()
    return CoefficientExpression(node, source=text)


def const_expr(v):
    return CoefficientExpression(("num", float(v)))


# ---------------------------------------------------------------------------
# Decomposition data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SubdomainSpec:
    """Geometry, coefficients and grid sizes for one subdomain.

    box is (x0, x1) in 1D or (x0, x1, y0, y1) in 2D; grids are uniform
    with nx (and ny) cells and nt time intervals per window.
    """

    id: int
    box: tuple
    nu: CoefficientExpression
    b: tuple  # (bx,) in 1D, (bx, by) in 2D
    c: CoefficientExpression
    omega: CoefficientExpression
    nx: int
    ny: int | None
    nt: int
    degree: int

    @property
    def dim(self):
        return 1 if len(self.box) == 2 else 2

    def div_b(self):
        """Analytic divergence of the advection field."""
        d = self.b[0].diff("x")
        if self.dim == 2:
            d = CoefficientExpression(_simplify(("add", d.ast, self.b[1].diff("y").ast)))
        return d


@dataclass(frozen=True)
class TransmissionParams:
    """Robin/Ventcell coefficients for one directed interface (i, j)."""

    p: float
    q: float = 0.0
    r: CoefficientExpression = field(default_factory=lambda: const_expr(0.0))
    s: float = 1.0

    @property
    def kind(self):
        return "robin" if self.q == 0.0 else "order2"


@dataclass(frozen=True)
class Interface:
    """Geometric flat interface between subdomains i and j.

    axis is the coordinate normal to the interface (0 for x, 1 for y);
    position its coordinate; span the extent along the interface (2D).
    Normal n_i points from subdomain i toward subdomain j.
    """

    i: int
    j: int
    axis: int
    position: float
    span: tuple | None
    normal_i: tuple


@dataclass
class ExperimentConfig:
    domain_box: tuple
    T: float
    subdomains: list
    transmission: dict  # (i, j) -> TransmissionParams, both directions
    u0: CoefficientExpression
    f: CoefficientExpression
    windows: int = 1
    tolerance: float = 1e-8
    max_iterations: int = 100
    initial_guess: str = "from_u0"

    @property
    def dim(self):
        return 1 if len(self.domain_box) == 2 else 2

    def subdomain(self, sid):
        for s in self.subdomains:
            if s.id == sid:
                return s
        raise KeyError(sid)

    def interfaces(self):
        return find_interfaces(self.subdomains)


def find_interfaces(subdomains):
    """Shared flat faces between subdomain boxes, one Interface per
    unordered pair with i < j."""
    out = []
    geom_tol = 1e-12
    for a in subdomains:
        for b in subdomains:
            if a.id >= b.id:
                continue
            if a.dim == 1:
                # touching endpoints
                if abs(a.box[1] - b.box[0]) < geom_tol:
                    out.append(Interface(a.id, b.id, 0, a.box[1], None, (1.0,)))
                elif abs(b.box[1] - a.box[0]) < geom_tol:
                    out.append(Interface(a.id, b.id, 0, a.box[0], None, (-1.0,)))
                continue
            ax0, ax1, ay0, ay1 = a.box
            bx0, bx1, by0, by1 = b.box
            # shared vertical face
            for pos, na in ((ax1, 1.0), (ax0, -1.0)):
                other = bx0 if na > 0 else bx1
                if abs(pos - other) < geom_tol:
                    lo, hi = max(ay0, by0), min(ay1, by1)
                    if hi - lo > geom_tol:
                        out.append(Interface(a.id, b.id, 0, pos, (lo, hi), (na, 0.0)))
            # shared horizontal face
            for pos, na in ((ay1, 1.0), (ay0, -1.0)):
                other = by0 if na > 0 else by1
                if abs(pos - other) < geom_tol:
                    lo, hi = max(ax0, bx0), min(ax1, bx1)
                    if hi - lo > geom_tol:
                        out.append(Interface(a.id, b.id, 1, pos, (lo, hi), (0.0, na)))
    return out


# ---------------------------------------------------------------------------
# Configuration text format
# ---------------------------------------------------------------------------

_DOMAIN_KEYS = {
    "box", "t", "windows", "tolerance", "max_iterations", "initial_guess", "u0", "f",
}
_SUBDOMAIN_KEYS = {"id", "box", "nu", "bx", "by", "c", "omega", "nx", "ny", "nt", "degree"}
_TRANSMISSION_KEYS = {"from", "to", "p", "q", "r", "s"}


def _strip_quotes(v):
    v = v.strip()
    if len(v) >= 2 and v[0] == v[-1] and v[0] in "\"'":
        return v[1:-1]
    return v


def parse_config(text):
    """Parse the line-oriented configuration document into a config.

    Sections are introduced by bracketed headers [domain], [subdomain],
    [transmission]; keys use ``key = value``; ``#`` begins a comment.
    """
    sections = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        stripped = line.strip()
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ConfigError("malformed section header", line=lineno)
            name = stripped[1:-1].strip().lower()
            if name not in ("domain", "subdomain", "transmission"):
                raise ConfigError(f"unknown section [{name}]", line=lineno)
            current = {"__name__": name, "__line__": lineno}
            sections.append(current)
            continue
        if "=" not in stripped:
            raise ConfigError("expected 'key = value'", line=lineno, col=len(line) + 1)
        if current is None:
            raise ConfigError("key outside of any section", line=lineno)
        key, value = stripped.split("=", 1)
        key = key.strip().lower()
        allowed = {
            "domain": _DOMAIN_KEYS,
            "subdomain": _SUBDOMAIN_KEYS,
            "transmission": _TRANSMISSION_KEYS,
        }[current["__name__"]]
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in [{current['__name__']}]", line=lineno)
        if key in current:
            raise ConfigError(f"duplicate key {key!r}", line=lineno)
        current[key] = (value.strip(), lineno)
    domains = [s for s in sections if s["__name__"] == "domain"]
    subs = [s for s in sections if s["__name__"] == "subdomain"]
    trans = [s for s in sections if s["__name__"] == "transmission"]
    if len(domains) != 1:
        raise ConfigError("exactly one [domain] section is required")
    if not subs:
        raise ConfigError("missing [subdomain] sections")
    if not trans and len(subs) > 1:
        raise ConfigError("missing [transmission] sections")
    dom = domains[0]

    def need(sec, key, what):
        if key not in sec:
            raise ConfigError(f"missing mandatory key {key!r} in [{what}]", line=sec["__line__"])
        return sec[key]

    def as_float(sec, key, default=None):
        if key not in sec:
            return default
        v, ln = sec[key]
        try:
            return float(v)
        except ValueError:
            raise ConfigError(f"bad number for {key!r}: {v!r}", line=ln) from None

    def as_int(sec, key, default=None):
        if key not in sec:
            return default
        v, ln = sec[key]
        try:
            return int(v)
        except ValueError:
            raise ConfigError(f"bad integer for {key!r}: {v!r}", line=ln) from None

    def as_expr(sec, key, default=None):
        if key not in sec:
            return const_expr(default) if default is not None else None
        v, ln = sec[key]
        try:
            return parse_expression(_strip_quotes(v))
        except ConfigError as e:
            raise ConfigError(f"in expression for {key!r}: {e}", line=ln) from None

    box_text, box_line = need(dom, "box", "domain")
    try:
        box = tuple(float(v) for v in box_text.split())
    except ValueError:
        raise ConfigError("bad box coordinates", line=box_line) from None
    if len(box) not in (2, 4):
        raise ConfigError("domain box needs 2 (1D) or 4 (2D) coordinates", line=box_line)
    dim = 1 if len(box) == 2 else 2

    T = as_float(dom, "t")
    if T is None:
        raise ConfigError("missing mandatory key 'T' in [domain]", line=dom["__line__"])

    guess = dom.get("initial_guess", ("from_u0", dom["__line__"]))
    guess_val = guess[0].strip().lower()
    if guess_val not in ("zero", "from_u0"):
        raise ConfigError("initial_guess must be 'zero' or 'from_u0'", line=guess[1])

    subdomains = []
    for sec in subs:
        sid = as_int(sec, "id")
        if sid is None:
            raise ConfigError("missing 'id' in [subdomain]", line=sec["__line__"])
        sbox_text, sbox_line = need(sec, "box", "subdomain")
        try:
            sbox = tuple(float(v) for v in sbox_text.split())
        except ValueError:
            raise ConfigError("bad box coordinates", line=sbox_line) from None
        if len(sbox) != len(box):
            raise ConfigError(
                f"subdomain {sid}: box dimension does not match domain", line=sbox_line
            )
        bx = as_expr(sec, "bx", 0.0)
        by = as_expr(sec, "by", None)
        if dim == 1 and by is not None:
            raise ConfigError(f"subdomain {sid}: 'by' given for a 1D problem (dimension mismatch in b)",
                              line=sec["by"][1])
        if dim == 2 and by is None:
            by = const_expr(0.0)
        b = (bx,) if dim == 1 else (bx, by)
        ny = as_int(sec, "ny", None)
        if dim == 2 and ny is None:
            raise ConfigError(f"subdomain {sid}: missing 'ny'", line=sec["__line__"])
        subdomains.append(
            SubdomainSpec(
                id=sid,
                box=sbox,
                nu=as_expr(sec, "nu", 1.0),
                b=b,
                c=as_expr(sec, "c", 0.0),
                omega=as_expr(sec, "omega", 1.0),
                nx=as_int(sec, "nx", 1),
                ny=ny,
                nt=as_int(sec, "nt", 1),
                degree=as_int(sec, "degree", 1),
            )
        )
    ids = [s.id for s in subdomains]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate subdomain ids")

    transmission = {}
    for sec in trans:
        i = as_int(sec, "from")
        j = as_int(sec, "to")
        if i is None or j is None:
            raise ConfigError("transmission section needs 'from' and 'to'", line=sec["__line__"])
        tp = TransmissionParams(
            p=as_float(sec, "p", 0.0),
            q=as_float(sec, "q", 0.0),
            r=as_expr(sec, "r", 0.0),
            s=as_float(sec, "s", 1.0),
        )
        transmission[(i, j)] = tp
    # mirror missing reverse directions
    for (i, j), tp in list(transmission.items()):
        transmission.setdefault((j, i), tp)

    return ExperimentConfig(
        domain_box=box,
        T=T,
        subdomains=subdomains,
        transmission=transmission,
        u0=as_expr(dom, "u0", 0.0),
        f=as_expr(dom, "f", 0.0),
        windows=as_int(dom, "windows", 1),
        tolerance=as_float(dom, "tolerance", 1e-8),
        max_iterations=as_int(dom, "max_iterations", 100),
        initial_guess=guess_val,
    )


def serialize_config(cfg):
    """Canonical text form; parse_config(serialize_config(c)) == c up to
    expression formatting."""
    out = []
    out.append("[domain]")
    out.append("box = " + " ".join(repr(v) for v in cfg.domain_box))
    out.append(f"T = {cfg.T!r}")
    out.append(f"windows = {cfg.windows}")
    out.append(f"tolerance = {cfg.tolerance!r}")
    out.append(f"max_iterations = {cfg.max_iterations}")
    out.append(f"initial_guess = {cfg.initial_guess}")
    out.append(f'u0 = "{cfg.u0}"')
    out.append(f'f = "{cfg.f}"')
    for s in sorted(cfg.subdomains, key=lambda s: s.id):
        out.append("")
        out.append("[subdomain]")
        out.append(f"id = {s.id}")
        out.append("box = " + " ".join(repr(v) for v in s.box))
        out.append(f'nu = "{s.nu}"')
        out.append(f'bx = "{s.b[0]}"')
        if s.dim == 2:
            out.append(f'by = "{s.b[1]}"')
        out.append(f'c = "{s.c}"')
        out.append(f'omega = "{s.omega}"')
        out.append(f"nx = {s.nx}")
        if s.dim == 2:
            out.append(f"ny = {s.ny}")
        out.append(f"nt = {s.nt}")
        out.append(f"degree = {s.degree}")
    for (i, j) in sorted(cfg.transmission):
        tp = cfg.transmission[(i, j)]
        out.append("")
        out.append("[transmission]")
        out.append(f"from = {i}")
        out.append(f"to = {j}")
        out.append(f"p = {tp.p!r}")
        out.append(f"q = {tp.q!r}")
        out.append(f'r = "{tp.r}"')
        out.append(f"s = {tp.s!r}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    message: str


def _sample_lattice(box, n=16):
    """Cell-center lattice, strictly interior (sign conditions hold a.e.;
    boundary-touching zeros such as sqrt(y) at y=0 must not trip them)."""
    if len(box) == 2:
        x = box[0] + (np.arange(n) + 0.5) / n * (box[1] - box[0])
        return x, np.zeros_like(x)
    x = box[0] + (np.arange(n) + 0.5) / n * (box[1] - box[0])
    y = box[2] + (np.arange(n) + 0.5) / n * (box[3] - box[2])
    X, Y = np.meshgrid(x, y)
    return X.ravel(), Y.ravel()


def _box_measure(box):
    if len(box) == 2:
        return box[1] - box[0]
    return (box[1] - box[0]) * (box[3] - box[2])


def _boxes_overlap(a, b):
    tol = 1e-12
    if len(a) == 2:
        return min(a[1], b[1]) - max(a[0], b[0]) > tol
    ox = min(a[1], b[1]) - max(a[0], b[0])
    oy = min(a[3], b[3]) - max(a[2], b[2])
    return ox > tol and oy > tol


def validate_problem(cfg):
    """Check hard constraints (errors) and theory hypotheses (warnings)."""
    diags = []

    def err(msg):
        diags.append(Diagnostic("error", msg))

    def warn(msg):
        diags.append(Diagnostic("warning", msg))

    if cfg.T <= 0:
        err("final time T must be positive")
    if cfg.windows < 1:
        err("window count must be >= 1")
    if cfg.tolerance <= 0:
        err("tolerance must be positive")

    degrees = {s.degree for s in cfg.subdomains}
    if len(degrees) > 1:
        err("mixed DG degrees across subdomains are unsupported")
    for d in degrees:
        if d not in (0, 1):
            err(f"unsupported DG degree {d} (only 0 and 1)")

    # tiling: total measure matches and no pairwise overlap
    total = sum(_box_measure(s.box) for s in cfg.subdomains)
    if abs(total - _box_measure(cfg.domain_box)) > 1e-10 * max(1.0, _box_measure(cfg.domain_box)):
        err("subdomain boxes do not tile the global domain")
    for a in cfg.subdomains:
        for b in cfg.subdomains:
            if a.id < b.id and _boxes_overlap(a.box, b.box):
                err(f"subdomains {a.id} and {b.id} overlap")

    for s in cfg.subdomains:
        if s.nx < 1 or (s.dim == 2 and s.ny < 1) or s.nt < 1:
            err(f"subdomain {s.id}: grid counts must be >= 1")
        x, y = _sample_lattice(s.box)
        try:
            nu = s.nu(x, y, 0.0)
            om = s.omega(x, y, 0.0)
        except EvalError as e:
            err(f"subdomain {s.id}: coefficient evaluation failed: {e}")
            continue
        if np.any(nu <= 0):
            err(f"subdomain {s.id}: diffusion nu <= 0 on the sample lattice")
        if np.any(om <= 0):
            err(f"subdomain {s.id}: porosity omega <= 0 on the sample lattice")
        try:
            shift = s.c(x, y, 0.0) + 0.5 * s.div_b()(x, y, 0.0)
            if np.any(shift <= 0):
                warn(
                    f"subdomain {s.id}: c + div(b)/2 <= 0 somewhere; "
                    "convergence theory is not guaranteed but the run proceeds"
                )
        except ValueError:
            warn(f"subdomain {s.id}: could not differentiate b; skipping reaction-shift check")

    interfaces = cfg.interfaces()
    if len(cfg.subdomains) > 1 and not interfaces:
        err("no interfaces found between subdomains")
    for itf in interfaces:
        for (i, j) in ((itf.i, itf.j), (itf.j, itf.i)):
            if (i, j) not in cfg.transmission:
                err(f"missing transmission parameters for directed interface ({i}, {j})")
        tij = cfg.transmission.get((itf.i, itf.j))
        tji = cfg.transmission.get((itf.j, itf.i))
        if tij and tji:
            if tij.p + tji.p <= 0:
                err(f"interface ({itf.i}, {itf.j}): p_ij + p_ji must be positive")
            for tp, lab in ((tij, (itf.i, itf.j)), (tji, (itf.j, itf.i))):
                if tp.q < 0:
                    err(f"interface {lab}: q must be nonnegative")
                if tp.q > 0 and tp.s <= 0:
                    err(f"interface {lab}: s must be positive when q > 0")
    return diags
