"""Symbolic probability expressions and exact evaluation on joint tables.

Expressions refer to variables by name. A lower-case value symbol in the
printed form stands for the value of the upper-case variable, so ``P(y|a)``
is the atom ``Atom(("Y",), ("A",))``.

Scoping is lexical. ``Sum`` binds its variables inside its body only, so a
variable may be free in one factor and summed in another. A bound variable
that does not occur free in the body is vacuous and contributes no sum.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

MAX_VARIABLES = 12
MAX_DOMAIN = 6
NORMALIZATION_TOL = 1e-12


class ExprError(ValueError):
    pass


class ZeroDenominator(ExprError, ZeroDivisionError):
    def __init__(self, context: str):
        self.context = context
        super().__init__(f"zero denominator (positivity violation) in {context}")


class UnboundVariable(ExprError):
    pass


class UnknownVariable(ExprError):
    pass


class TableError(ExprError):
    pass


# -- expression tree ----------------------------------------------------------


class Expr:
    """Base class for expression nodes."""

    def free_variables(self) -> frozenset[str]:
        raise NotImplementedError

    def children(self) -> tuple["Expr", ...]:
        return ()

    def __mul__(self, other: "Expr") -> "Product":
        return Product(_factors(self) + _factors(other))

    def __truediv__(self, other: "Expr") -> "Quotient":
        return Quotient(self, other)

    def __str__(self):
        return to_text(self)


def _factors(e: Expr) -> tuple[Expr, ...]:
    return e.factors if isinstance(e, Product) else (e,)


@dataclass(frozen=True, eq=False)
class Atom(Expr):
    """P(targets | given) read off the observational distribution."""

    targets: tuple[str, ...]
    given: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        object.__setattr__(self, "given", tuple(self.given))
        if not self.targets:
            raise ExprError("atom needs at least one target variable")
        if len(set(self.targets)) != len(self.targets) or len(set(self.given)) != len(self.given):
            raise ExprError(f"repeated variable in atom {self.targets}|{self.given}")
        if set(self.targets) & set(self.given):
            raise ExprError(f"atom targets and conditioners overlap: {self.targets}|{self.given}")

    def free_variables(self):
        return frozenset(self.targets) | frozenset(self.given)

    def _key(self):
        return (frozenset(self.targets), frozenset(self.given))

    def __eq__(self, other):
        return isinstance(other, Atom) and self._key() == other._key()

    def __hash__(self):
        return hash(("Atom",) + self._key())


@dataclass(frozen=True)
class Product(Expr):
    factors: tuple[Expr, ...]

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))

    def free_variables(self):
        return frozenset().union(*(f.free_variables() for f in self.factors))

    def children(self):
        return self.factors


@dataclass(frozen=True)
class Quotient(Expr):
    num: Expr
    den: Expr

    def free_variables(self):
        return self.num.free_variables() | self.den.free_variables()

    def children(self):
        return (self.num, self.den)


@dataclass(frozen=True)
class Sum(Expr):
    over: tuple[str, ...]
    body: Expr

    def __post_init__(self):
        object.__setattr__(self, "over", tuple(self.over))
        if len(set(self.over)) != len(self.over):
            raise ExprError(f"repeated bound variable in {self.over}")

    def free_variables(self):
        return self.body.free_variables() - frozenset(self.over)

    def children(self):
        return (self.body,)


@dataclass(frozen=True)
class Indicator(Expr):
    var: str
    value: object

    def free_variables(self):
        return frozenset([self.var])


@dataclass(frozen=True)
class Constant(Expr):
    value: Union[int, float, Fraction]

    def free_variables(self):
        return frozenset()


ONE = Constant(1)


def P(targets: str | Sequence[str], given: str | Sequence[str] = ()) -> Atom:
    """Shorthand: ``P("Y", ["C1", "A"])`` or ``P("Y", "C1,A")``."""
    return Atom(_names(targets), _names(given))


def _names(v: str | Sequence[str]) -> tuple[str, ...]:
    if isinstance(v, str):
        return tuple(s.strip() for s in v.split(",") if s.strip())
    return tuple(v)


def prod(*factors: Expr) -> Expr:
    flat: list[Expr] = []
    for f in factors:
        flat.extend(_factors(f))
    return flat[0] if len(flat) == 1 else Product(tuple(flat))


def summation(over: str | Sequence[str], body: Expr) -> Expr:
    over = _names(over)
    return Sum(over, body) if over else body


def free_variables(e: Expr) -> frozenset[str]:
    return e.free_variables()


def walk(e: Expr):
    yield e
    for c in e.children():
        yield from walk(c)


def canonical(e: Expr) -> Expr:
    """Order-normalized copy: sorted conditioners, sorted bound variables, sorted product factors."""
    if isinstance(e, Atom):
        return Atom(tuple(sorted(e.targets)), tuple(sorted(e.given)))
    if isinstance(e, Product):
        fs = [canonical(f) for f in e.factors]
        return Product(tuple(sorted(fs, key=_sort_key)))
    if isinstance(e, Quotient):
        return Quotient(canonical(e.num), canonical(e.den))
    if isinstance(e, Sum):
        return Sum(tuple(sorted(e.over)), canonical(e.body))
    return e


def _sort_key(e: Expr):
    rank = {Constant: 0, Indicator: 1, Atom: 2, Sum: 3, Quotient: 4, Product: 5}[type(e)]
    if isinstance(e, Atom):
        return (rank, e.targets, e.given, "")
    return (rank, (), (), to_text(e))


# -- joint tables -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class JointTable:
    """Dense joint distribution over finite-domain variables (row-major)."""

    variables: tuple[str, ...]
    domains: tuple[tuple, ...]
    probs: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "domains", tuple(tuple(d) for d in self.domains))
        probs = np.array(self.probs, dtype=float)
        shape = tuple(len(d) for d in self.domains)
        if probs.size == math.prod(shape):
            probs = probs.reshape(shape)
        object.__setattr__(self, "probs", probs)
        probs.setflags(write=False)
        if len(self.variables) != len(self.domains):
            raise TableError("one domain per variable required")
        if len(set(self.variables)) != len(self.variables):
            raise TableError("duplicate variable names")
        if len(self.variables) > MAX_VARIABLES:
            raise TableError(f"at most {MAX_VARIABLES} variables supported")
        for v, d in zip(self.variables, self.domains):
            if not 1 <= len(d) <= MAX_DOMAIN:
                raise TableError(f"domain of {v} must have 1..{MAX_DOMAIN} values")
            if len(set(d)) != len(d):
                raise TableError(f"repeated value in domain of {v}")
        if probs.shape != shape:
            raise TableError(f"table shape {probs.shape} does not match domains {shape}")
        if np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise TableError("probabilities must be finite and non-negative")
        total = probs.sum()
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise TableError(f"probabilities sum to {total!r}, not 1")

    @classmethod
    def uniform(cls, variables: Sequence[str], domains: Sequence[Sequence]) -> "JointTable":
        shape = tuple(len(d) for d in domains)
        return cls(tuple(variables), tuple(map(tuple, domains)), np.full(shape, 1.0 / math.prod(shape)))

    @classmethod
    def from_array(cls, variables, domains, weights) -> "JointTable":
        """Normalize non-negative ``weights`` into a table."""
        w = np.asarray(weights, dtype=float)
        return cls(tuple(variables), tuple(map(tuple, domains)), w / w.sum())

    def axis(self, var: str) -> int:
        try:
            return self.variables.index(var)
        except ValueError:
            raise UnknownVariable(f"variable {var!r} not in table {self.variables}") from None

    def domain(self, var: str) -> tuple:
        return self.domains[self.axis(var)]

    def value_index(self, var: str, value) -> int:
        try:
            return self.domain(var).index(value)
        except ValueError:
            raise ExprError(f"value {value!r} outside domain of {var}") from None

    def marginal_array(self, keep: Iterable[str]) -> np.ndarray:
        """Marginal as a full-rank array (summed axes kept with size 1)."""
        keep = frozenset(keep)
        key = ("m", keep)
        if key not in self._cache:
            axes = tuple(i for i, v in enumerate(self.variables) if v not in keep)
            for v in keep:
                self.axis(v)
            self._cache[key] = self.probs.sum(axis=axes, keepdims=True)
        return self._cache[key]

    def marginal(self, keep: Sequence[str]) -> "JointTable":
        keep = list(keep)
        arr = np.squeeze(self.marginal_array(keep), axis=tuple(
            i for i, v in enumerate(self.variables) if v not in keep))
        order = [v for v in self.variables if v in keep]
        arr = np.transpose(arr, [order.index(v) for v in keep])
        return JointTable(tuple(keep), tuple(self.domain(v) for v in keep), arr)

    def conditional_array(self, targets: Iterable[str], given: Iterable[str]) -> np.ndarray:
        """P(targets | given) as a full-rank array; NaN where P(given) = 0."""
        targets, given = frozenset(targets), frozenset(given)
        key = ("c", targets, given)
        if key not in self._cache:
            joint = self.marginal_array(targets | given)
            den = self.marginal_array(given)
            with np.errstate(divide="ignore", invalid="ignore"):
                out = np.where(den > 0, joint / np.where(den > 0, den, 1.0), np.nan)
            self._cache[key] = out
        return self._cache[key]

    def prob(self, assignment: Mapping[str, object], given: Mapping[str, object] | None = None) -> float:
        """P(assignment | given) for partial assignments."""
        given = dict(given or {})
        both = {**given, **assignment}
        num = self._at(self.marginal_array(both), both)
        if not given:
            return num
        den = self._at(self.marginal_array(given), given)
        if den == 0:
            raise ZeroDenominator(f"P({_fmt_assign(given)})")
        return num / den

    def expectation(self, var: str, given: Mapping[str, object] | None = None) -> float:
        given = dict(given or {})
        return sum(float(v) * self.prob({var: v}, given) for v in self.domain(var))

    def _at(self, arr: np.ndarray, assignment: Mapping[str, object]) -> float:
        idx = []
        for i, v in enumerate(self.variables):
            idx.append(self.value_index(v, assignment[v]) if v in assignment and arr.shape[i] > 1 else 0)
        return float(arr[tuple(idx)])

    def __eq__(self, other):
        return (
            isinstance(other, JointTable)
            and self.variables == other.variables
            and self.domains == other.domains
            and np.array_equal(self.probs, other.probs)
        )

    def allclose(self, other: "JointTable", atol: float = 1e-12) -> bool:
        if set(self.variables) != set(other.variables):
            return False
        o = other.marginal(self.variables)
        return self.domains == o.domains and np.allclose(self.probs, o.probs, atol=atol, rtol=0)

    def configurations(self):
        """Yield (assignment dict, probability) for every cell."""
        for idx in itertools.product(*(range(len(d)) for d in self.domains)):
            yield {v: d[i] for v, d, i in zip(self.variables, self.domains, idx)}, float(self.probs[idx])

    # -- CSV ------------------------------------------------------------------

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([*self.variables, "prob"])
        for assign, p in self.configurations():
            w.writerow([*(assign[v] for v in self.variables), repr(p)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source: str | Path) -> "JointTable":
        """Load a table written by :meth:`to_csv`; integer-looking values become ints."""
        text = Path(source).read_text() if isinstance(source, Path) or "\n" not in str(source) else str(source)
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], [r for r in rows[1:] if r]
        if header[-1] != "prob":
            raise TableError("last CSV column must be 'prob'")
        variables = tuple(header[:-1])
        parsed = [[_parse_value(x) for x in r[:-1]] + [float(r[-1])] for r in body]
        domains = []
        for i in range(len(variables)):
            seen = dict.fromkeys(r[i] for r in parsed)
            domains.append(tuple(sorted(seen, key=_value_order)))
        shape = tuple(len(d) for d in domains)
        probs = np.zeros(shape)
        filled = set()
        for r in parsed:
            idx = tuple(domains[i].index(r[i]) for i in range(len(variables)))
            if idx in filled:
                raise TableError(f"duplicate configuration {r[:-1]}")
            filled.add(idx)
            probs[idx] = r[-1]
        return cls(variables, tuple(domains), probs)


def _parse_value(s: str):
    try:
        return int(s)
    except ValueError:
        try:
            return float(s)
        except ValueError:
            return s


def _value_order(v):
    return (0, v, "") if isinstance(v, (int, float)) else (1, 0, str(v))


def _fmt_assign(a: Mapping[str, object]) -> str:
    return ",".join(f"{k}={v}" for k, v in a.items())


# -- evaluation ---------------------------------------------------------------


def evaluate_array(e: Expr, j: JointTable) -> np.ndarray:
    """Evaluate ``e`` for every assignment of its free variables at once.

    The result is a full-rank array over ``j.variables``; axes of variables
    not free in ``e`` have size 1. Cells whose value needs a zero
    denominator hold NaN.
    """
    for v in free_variables(e):
        j.axis(v)
    return _eval(e, j, [])


def _eval(e: Expr, j: JointTable, nan_sources: list) -> np.ndarray:
    if isinstance(e, Atom):
        arr = j.conditional_array(e.targets, e.given)
        if np.isnan(arr).any():
            nan_sources.append(e)
        return arr
    if isinstance(e, Product):
        out = np.ones((1,) * len(j.variables))
        for f in e.factors:
            out = out * _eval(f, j, nan_sources)
        return out
    if isinstance(e, Quotient):
        num = _eval(e.num, j, nan_sources)
        den = _eval(e.den, j, nan_sources)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(den != 0, num / np.where(den != 0, den, 1.0), np.nan)
        if (den == 0).any():
            nan_sources.append(e)
        return out
    if isinstance(e, Sum):
        arr = _eval(e.body, j, nan_sources)
        axes = tuple(j.axis(v) for v in e.over if v in j.variables and arr.shape[j.axis(v)] > 1)
        return arr.sum(axis=axes, keepdims=True) if axes else arr
    if isinstance(e, Indicator):
        ax = j.axis(e.var)
        shape = [1] * len(j.variables)
        shape[ax] = len(j.domains[ax])
        arr = np.zeros(shape)
        if e.value in j.domains[ax]:
            arr.reshape(-1)[j.domains[ax].index(e.value)] = 1.0
        return arr
    if isinstance(e, Constant):
        return np.full((1,) * len(j.variables), float(e.value))
    raise TypeError(f"not an expression: {e!r}")


def eval_expr(e: Expr, j: JointTable, bind: Mapping[str, object] | None = None) -> float:
    """Value of ``e`` on table ``j`` with free variables set by ``bind``."""
    bind = dict(bind or {})
    missing = free_variables(e) - set(bind)
    if missing:
        raise UnboundVariable(f"unbound variables: {sorted(missing)}")
    for v in free_variables(e):
        j.axis(v)
    sources: list = []
    arr = _eval(e, j, sources)
    idx = tuple(
        j.value_index(v, bind[v]) if arr.shape[i] > 1 else 0 for i, v in enumerate(j.variables)
    )
    val = float(arr[idx])
    if math.isnan(val):
        raise ZeroDenominator(to_text(sources[0]) if sources else to_text(e))
    return val


# -- printing -----------------------------------------------------------------


def value_symbol(name: str) -> str:
    return name.lower()


def _latex_symbol(name: str) -> str:
    m = re.fullmatch(r"([A-Za-z]+)_?(\d+)", name)
    if m:
        return f"{m.group(1).lower()}_{{{m.group(2)}}}" if len(m.group(2)) > 1 else f"{m.group(1).lower()}_{m.group(2)}"
    return name.lower().replace("_", r"\_")


def _const_text(c: Constant) -> str:
    v = c.value
    if isinstance(v, Fraction):
        return str(v)
    if float(v).is_integer():
        return str(int(v))
    return repr(float(v))


def to_text(e: Expr) -> str:
    """Plain-text form, e.g. ``Σ_{c1} P(a|c1,c2) P(c1)``.

    Factor order and conditioner order are kept as built; bound variables
    are listed sorted. Apply :func:`canonical` first for a normal form.
    """
    if isinstance(e, Atom):
        t = ",".join(map(value_symbol, e.targets))
        if e.given:
            return f"P({t}|{','.join(map(value_symbol, e.given))})"
        return f"P({t})"
    if isinstance(e, Constant):
        return _const_text(e)
    if isinstance(e, Indicator):
        return f"I({value_symbol(e.var)}={e.value})"
    if isinstance(e, Product):
        if not e.factors:
            return "1"
        return " ".join(_text_factor(f) for f in e.factors)
    if isinstance(e, Quotient):
        return f"{_text_operand(e.num)} / {_text_operand(e.den)}"
    if isinstance(e, Sum):
        names = ",".join(value_symbol(v) for v in sorted(e.over))
        return f"Σ_{{{names}}} {to_text(e.body)}"
    raise TypeError(f"not an expression: {e!r}")


def _text_factor(e: Expr) -> str:
    if isinstance(e, (Sum, Quotient, Product)):
        return f"[{to_text(e)}]"
    return to_text(e)


def _text_operand(e: Expr) -> str:
    if isinstance(e, (Atom, Constant, Indicator)):
        return to_text(e)
    return f"({to_text(e)})"


def to_latex(e: Expr) -> str:
    if isinstance(e, Atom):
        t = ", ".join(map(_latex_symbol, e.targets))
        if e.given:
            return f"P({t} \\mid {', '.join(map(_latex_symbol, e.given))})"
        return f"P({t})"
    if isinstance(e, Constant):
        return _const_text(e)
    if isinstance(e, Indicator):
        return f"\\mathbb{{1}}[{_latex_symbol(e.var)} = {e.value}]"
    if isinstance(e, Product):
        parts = []
        for f in e.factors:
            s = to_latex(f)
            parts.append(f"\\left[ {s} \\right]" if isinstance(f, (Sum, Product)) else s)
        return " ".join(parts) or "1"
    if isinstance(e, Quotient):
        return f"\\frac{{{to_latex(e.num)}}}{{{to_latex(e.den)}}}"
    if isinstance(e, Sum):
        names = ", ".join(_latex_symbol(v) for v in sorted(e.over))
        return f"\\sum_{{{names}}} {to_latex(e.body)}"
    raise TypeError(f"not an expression: {e!r}")


# -- parsing the text form ----------------------------------------------------

_EXPR_TOKEN = re.compile(
    r"\s*(?:(?P<atom>P\()|(?P<ind>I\()|(?P<sum>Σ_\{)|(?P<num>\d+(?:\.\d*)?(?:[eE][-+]?\d+)?(?:/\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<punct>[()\[\]{}|,/=]))"
)


def parse_expr(text: str, variables: Iterable[str] | None = None) -> Expr:
    """Parse the output of :func:`to_text` back into an expression.

    Value symbols are mapped to variable names case-insensitively through
    ``variables``; without it they are upper-cased.
    """
    lookup = {v.lower(): v for v in variables} if variables is not None else None
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _EXPR_TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ExprError(f"unexpected character at {pos}: {text[pos:pos + 10]!r}")
        tokens.append((m.lastgroup, m.group(m.lastgroup)))
        pos = m.end()
    return _ExprParser(tokens, lookup).parse()


class _ExprParser:
    def __init__(self, tokens, lookup):
        self.toks = tokens
        self.i = 0
        self.lookup = lookup

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None)

    def take(self, value=None):
        tok = self.peek()
        if tok[0] is None or (value is not None and tok[1] != value):
            raise ExprError(f"expected {value or 'token'} at token {self.i}, found {tok[1]!r}")
        self.i += 1
        return tok

    def var(self):
        kind, word = self.take()
        if kind != "name":
            raise ExprError(f"expected a variable name, found {word!r}")
        if self.lookup is None:
            return word.upper()
        try:
            return self.lookup[word.lower()]
        except KeyError:
            raise UnknownVariable(f"unknown variable symbol {word!r}") from None

    def parse(self):
        e = self.expr()
        if self.peek()[0] is not None:
            raise ExprError(f"trailing input at token {self.i}: {self.peek()[1]!r}")
        return e

    def expr(self):
        num = self.product()
        if self.peek()[1] == "/":
            self.take("/")
            return Quotient(num, self.product())
        return num

    def product(self):
        factors = []
        while True:
            kind, word = self.peek()
            if kind is None or word in (")", "]", "/", "}"):
                break
            factors.append(self.factor())
        if not factors:
            raise ExprError(f"empty product at token {self.i}")
        return factors[0] if len(factors) == 1 else Product(tuple(factors))

    def factor(self):
        kind, word = self.peek()
        if kind == "atom":
            self.take()
            targets = [self.var()]
            while self.peek()[1] == ",":
                self.take(",")
                targets.append(self.var())
            given = []
            if self.peek()[1] == "|":
                self.take("|")
                given.append(self.var())
                while self.peek()[1] == ",":
                    self.take(",")
                    given.append(self.var())
            self.take(")")
            return Atom(tuple(targets), tuple(given))
        if kind == "ind":
            self.take()
            v = self.var()
            self.take("=")
            _, raw = self.take()
            self.take(")")
            return Indicator(v, _parse_value(raw))
        if kind == "sum":
            self.take()
            over = [self.var()]
            while self.peek()[1] == ",":
                self.take(",")
                over.append(self.var())
            self.take("}")
            return Sum(tuple(over), self.expr())
        if kind == "num":
            self.take()
            return Constant(Fraction(word) if "/" in word else (int(word) if word.isdigit() else float(word)))
        if word in ("(", "["):
            self.take()
            e = self.expr()
            self.take(")" if word == "(" else "]")
            return e
        raise ExprError(f"unexpected token {word!r}")
