"""Causal effect identification over ADMGs.

:func:`identify` runs the recursive c-component (ID) algorithm and returns a
:class:`~causalcheck.expr.Expr` for ``P(outcomes | do(treatments))`` in
terms of the observational distribution. :func:`trapdoor_formula` and
:func:`complex_frontdoor_formula` build two closed-form identification
formulas term by term, used as references for the algorithm's output.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

from .expr import (
    ONE,
    Atom,
    Constant,
    Expr,
    Indicator,
    JointTable,
    Product,
    Quotient,
    Sum,
    canonical,
    eval_expr,
    free_variables,
    prod,
    summation,
    to_text,
)
from .graph import GraphError, MixedGraph, ancestors, topological_order


class NotADMG(GraphError):
    pass


class EmptyQuery(GraphError):
    pass


# -- simplification -----------------------------------------------------------


def simplify(e: Expr) -> Expr:
    """Apply a terminating rewrite set until nothing changes.

    Rewrites:
      * drop bound variables that do not occur free in the sum body;
      * sum out a variable that only one factor mentions, when that factor is
        an atom with the variable among its targets: ``Σ_v P(v,T|W) f → P(T|W) f``;
        factors not mentioning any bound variable are moved out of the sum;
      * cancel identical factors across a quotient;
      * flatten nested products and fold constants.

    Every rewrite preserves the value on tables where no denominator is zero.
    """
    for _ in range(1000):
        nxt = _step(e)
        if nxt == e:
            return nxt
        e = nxt
    raise RuntimeError("simplify did not reach a fixed point")


def _step(e: Expr) -> Expr:
    if isinstance(e, Product):
        return _simplify_product([_step(f) for f in e.factors])
    if isinstance(e, Quotient):
        return _simplify_quotient(_step(e.num), _step(e.den))
    if isinstance(e, Sum):
        body = _step(e.body)
        # a rewrite that makes a bound variable vacuous would change the sum
        if (set(e.over) & free_variables(e.body)) - free_variables(body):
            body = e.body
        return _simplify_sum(e.over, body)
    return e


def _simplify_product(factors: list[Expr]) -> Expr:
    flat: list[Expr] = []
    const: int | float | Fraction = 1
    for f in factors:
        for g in (f.factors if isinstance(f, Product) else (f,)):
            if isinstance(g, Constant):
                const = const * g.value
            else:
                flat.append(g)
    if const != 1 or not flat:
        flat.insert(0, Constant(const))
    return flat[0] if len(flat) == 1 else Product(tuple(flat))


def _factor_list(e: Expr) -> list[Expr]:
    if isinstance(e, Product):
        return list(e.factors)
    return [] if e == ONE else [e]


def _simplify_quotient(num: Expr, den: Expr) -> Expr:
    nf, df = _factor_list(num), _factor_list(den)
    keep_den = []
    for d in df:
        for i, n in enumerate(nf):
            if n == d:
                del nf[i]
                break
        else:
            keep_den.append(d)
    num2 = _simplify_product(nf) if nf else ONE
    if not keep_den:
        return num2
    den2 = _simplify_product(keep_den)
    return Quotient(num2, den2)


def _simplify_sum(over: tuple[str, ...], body: Expr) -> Expr:
    free = free_variables(body)
    over = tuple(v for v in over if v in free)
    if not over:
        return body
    if isinstance(body, Sum):
        return Sum(over + body.over, body.body)
    factors = _factor_list(body)
    remaining = list(over)
    for v in over:
        mentioning = [i for i, f in enumerate(factors) if v in free_variables(f)]
        if len(mentioning) != 1:
            continue
        f = factors[mentioning[0]]
        if isinstance(f, Atom) and v in f.targets:
            targets = tuple(t for t in f.targets if t != v)
            reduced = Atom(targets, f.given) if targets else ONE
            trial = factors[: mentioning[0]] + [reduced] + factors[mentioning[0] + 1 :]
            still = frozenset().union(*(free_variables(t) for t in trial))
            if any(u not in still for u in remaining if u != v):
                continue
            factors = trial
            remaining.remove(v)
    bound = set(remaining)
    inside = [f for f in factors if free_variables(f) & bound]
    outside = [f for f in factors if not free_variables(f) & bound and f != ONE]
    if not remaining:
        return _simplify_product(outside + inside) if outside or inside else ONE
    inner = Sum(tuple(remaining), _simplify_product(inside))
    return _simplify_product(outside + [inner]) if outside else inner


# -- identification -----------------------------------------------------------


@dataclass
class IdentResult:
    outcomes: tuple[str, ...]
    treatments: tuple[str, ...]
    expr: Expr | None = None
    context: tuple[str, ...] = ()
    witness: str = ""
    trace: list[str] = field(default_factory=list)

    @property
    def identified(self) -> bool:
        return self.expr is not None

    def text(self) -> str:
        return to_text(self.expr) if self.expr is not None else f"NOT IDENTIFIABLE: {self.witness}"


class _Hedge(Exception):
    def __init__(self, whole: list[str], part: list[str]):
        self.whole, self.part = whole, part
        super().__init__(f"hedge: F={{{', '.join(whole)}}}, F'={{{', '.join(part)}}}")


@dataclass(frozen=True)
class _Dist:
    """The distribution an ID call works with.

    ``expr`` is None while it is still the observational distribution
    restricted to ``variables``; conditionals are then plain atoms.
    """

    variables: tuple[str, ...]
    expr: Expr | None = None

    def as_expr(self) -> Expr:
        return Atom(self.variables) if self.expr is None else self.expr

    def marginal(self, keep: Iterable[str]) -> "_Dist":
        keep = set(keep)
        kept = tuple(v for v in self.variables if v in keep)
        if self.expr is None:
            return _Dist(kept)
        drop = [v for v in self.variables if v not in keep]
        return _Dist(kept, simplify(summation(drop, self.expr)))

    def conditional(self, v: str, given: list[str]) -> Expr:
        if self.expr is None:
            return Atom((v,), tuple(given))
        inside = set(given) | {v}
        num = summation([u for u in self.variables if u not in inside], self.expr)
        den = summation([u for u in self.variables if u not in given], self.expr)
        return simplify(Quotient(num, den))


def identify(g: MixedGraph, treatments: Iterable[str], outcomes: Iterable[str]) -> IdentResult:
    """Identify P(outcomes | do(treatments)) on the ADMG ``g``.

    Variables that the algorithm intervenes on beyond ``treatments`` stay free
    in the result (``context``); the value of the effect does not depend on
    them, and any value with positive probability may be plugged in.
    """
    x, y = _as_tuple(treatments), _as_tuple(outcomes)
    if not x or not y:
        raise EmptyQuery("treatments and outcomes must be non-empty")
    if set(x) & set(y):
        raise EmptyQuery("treatments and outcomes overlap")
    if not g.is_admg():
        raise NotADMG("identification needs an acyclic graph with directed/bidirected edges only")
    if g.latents:
        raise NotADMG(f"graph has latent nodes {g.latents}; latent-project it first")
    for v in (*x, *y):
        g.node(v)
    trace: list[str] = []
    res = IdentResult(outcomes=y, treatments=x, trace=trace)
    try:
        raw = _id(set(y), set(x), _Dist(tuple(topological_order(g))), g, trace, 0)
    except _Hedge as h:
        res.witness = str(h)
        trace.append(f"FAIL {h}")
        return res
    res.expr = canonical(simplify(raw))
    res.context = tuple(sorted(free_variables(res.expr) - set(x) - set(y)))
    return res


def _as_tuple(v) -> tuple[str, ...]:
    return (v,) if isinstance(v, str) else tuple(v)


def _fmt(names) -> str:
    return "{" + ", ".join(names) + "}"


def _id(y: set, x: set, P: _Dist, g: MixedGraph, trace: list, depth: int) -> Expr:
    pad = "  " * depth
    V = set(g.names)
    order = topological_order(g)
    trace.append(f"{pad}ID(y={_fmt(g.sort(y))}, x={_fmt(g.sort(x))}, V={_fmt(order)})")

    if not x:
        trace.append(f"{pad}line 1: no intervention, marginalize to {_fmt(g.sort(y))}")
        return P.marginal(y).as_expr()

    an = ancestors(g, y)
    if an != V:
        trace.append(f"{pad}line 2: restrict to ancestors of y {_fmt(g.sort(an))}")
        return _id(y, x & an, P.marginal(an), g.subgraph(an), trace, depth + 1)

    w = (V - x) - ancestors(g.without_incoming(x), y)
    if w:
        trace.append(f"{pad}line 3: add non-ancestors {_fmt(g.sort(w))} to the intervention")
        return _id(y, x | w, P, g, trace, depth + 1)

    comps = g.subgraph(V - x).districts()
    if len(comps) > 1:
        trace.append(f"{pad}line 4: districts of G\\X: " + ", ".join(_fmt(c) for c in comps))
        terms = [_id(set(s), V - set(s), P, g, trace, depth + 1) for s in comps]
        bound = [v for v in order if v not in y | x]
        return summation(bound, prod(*terms))

    S = comps[0]
    districts = g.districts()
    if len(districts) == 1:
        raise _Hedge(order, S)

    if any(set(S) == set(d) for d in districts):
        trace.append(f"{pad}line 6: {_fmt(S)} is a district of G")
        factors = [P.conditional(v, order[: order.index(v)]) for v in order if v in S]
        return summation([v for v in order if v in S and v not in y], prod(*factors))

    big = next(d for d in districts if set(S) <= set(d))
    trace.append(f"{pad}line 7: {_fmt(S)} inside district {_fmt(big)}")
    factors = [P.conditional(v, order[: order.index(v)]) for v in order if v in big]
    sub = _Dist(tuple(v for v in order if v in big), prod(*factors))
    return _id(y, x & set(big), sub, g.subgraph(big), trace, depth + 1)


def evaluate_effect(
    res: IdentResult,
    table: JointTable,
    values: Mapping[str, object],
    context: Mapping[str, object] | None = None,
) -> float:
    """Evaluate an identified expression at outcome/treatment ``values``.

    Context variables default to the first value of their domain.
    """
    if not res.identified:
        raise ValueError(res.witness)
    bind = dict(values)
    for c in res.context:
        bind[c] = (context or {}).get(c, table.domain(c)[0])
    return eval_expr(res.expr, table, bind)


# -- closed-form reference formulas --------------------------------------------


def trapdoor_formula(y: str = "Y", a: str = "A", c1: str = "C1", c2: str = "C2") -> Expr:
    """P(Y(a)=y) with trapdoor variable ``c2`` held at a fixed value."""
    num = Sum((c1,), Product((Atom((y,), (c1, c2, a)), Atom((a,), (c1, c2)), Atom((c1,)))))
    den = Sum((c1,), Product((Atom((a,), (c1, c2)), Atom((c1,)))))
    return Quotient(num, den)


def frontdoor_helpers(
    y: str = "Y", a: str = "A", z: str = "Z", c1: str = "C1", c2: str = "C2", c3: str = "C3"
) -> dict[str, Expr]:
    def over_c1(*atoms):
        return Sum((c1,), Product(tuple(atoms)))

    return {
        "g1": over_c1(Atom((a,), (c1, c2)), Atom((c1,))),
        "g2": over_c1(Atom((z,), (c1, c2, a)), Atom((a,), (c1, c2)), Atom((c1,))),
        "g3": over_c1(
            Atom((z,), (c1, c2, c3, a)), Atom((a,), (c1, c2, c3)), Atom((c3,), (c1, c2)), Atom((c1,))
        ),
        "g4": over_c1(Atom((a,), (c1, c2, c3)), Atom((c3,), (c1, c2)), Atom((c1,))),
        "g5": over_c1(
            Atom((y,), (c1, c2, c3, a, z)),
            Atom((z,), (c1, c2, c3, a)),
            Atom((a,), (c1, c2, c3)),
            Atom((c3,), (c1, c2)),
            Atom((c1,)),
        ),
    }


def complex_frontdoor_formula(
    y: str = "Y", a: str = "A", z: str = "Z", c1: str = "C1", c2: str = "C2", c3: str = "C3"
) -> Expr:
    """(1/g1) Σ_{z,c3} { g2 Σ_a [ g5 g4 / g3 ] }.

    The inner sum rebinds the treatment variable: g5, g4 and g3 see the
    summed value while g1 and g2 see the free treatment value.
    """
    g = frontdoor_helpers(y, a, z, c1, c2, c3)
    inner = Sum((a,), Quotient(Product((g["g5"], g["g4"])), g["g3"]))
    return Product((Quotient(ONE, g["g1"]), Sum((z, c3), Product((g["g2"], inner)))))

