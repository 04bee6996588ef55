import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from causalcheck.expr import (
    ONE,
    Atom,
    Constant,
    ExprError,
    Indicator,
    JointTable,
    P,
    Product,
    Quotient,
    Sum,
    TableError,
    UnboundVariable,
    UnknownVariable,
    ZeroDenominator,
    canonical,
    eval_expr,
    free_variables,
    parse_expr,
    to_latex,
    to_text,
)
from causalcheck.ident import frontdoor_helpers, trapdoor_formula
from causalcheck.repro import random_expression, random_table


def table(seed, variables=("A", "B", "C"), cards=None):
    rng = np.random.Generator(np.random.Philox(seed))
    return random_table(rng, list(variables), cards or [2] * len(variables))


def brute_prob(j, assign, given=None):
    """P(assign | given) by looping over every cell."""
    given = given or {}
    num = den = 0.0
    for cell, p in j.configurations():
        if all(cell[k] == v for k, v in given.items()):
            den += p
            if all(cell[k] == v for k, v in assign.items()):
                num += p
    return num / den


def test_atom_matches_cellwise_conditional():
    j = table(1)
    for a, b, c in itertools.product((0, 1), repeat=3):
        got = eval_expr(P("A", ["B", "C"]), j, {"A": a, "B": b, "C": c})
        assert got == pytest.approx(brute_prob(j, {"A": a}, {"B": b, "C": c}), abs=1e-14)


def test_sum_product_quotient_semantics():
    j = table(2)
    e = Sum(("B",), P("A", "B") * P("B"))
    for a in (0, 1):
        assert eval_expr(e, j, {"A": a}) == pytest.approx(brute_prob(j, {"A": a}), abs=1e-14)
    q = Quotient(P(["A", "B"]), P("B"))
    assert eval_expr(q, j, {"A": 1, "B": 0}) == pytest.approx(brute_prob(j, {"A": 1}, {"B": 0}), abs=1e-14)


def test_vacuous_sum_contributes_no_factor():
    j = table(3)
    assert eval_expr(Sum(("C",), P("A")), j, {"A": 0}) == pytest.approx(brute_prob(j, {"A": 0}), abs=1e-15)


def test_sum_shadows_free_variable_only_in_its_body():
    j = table(4)
    e = P("A") * Sum(("A",), P("A", "B"))
    # the inner sum is 1 for each b, the outer factor keeps the free a
    assert eval_expr(e, j, {"A": 1, "B": 0}) == pytest.approx(brute_prob(j, {"A": 1}), abs=1e-14)
    assert free_variables(e) == {"A", "B"}


def test_indicator_and_constant():
    j = table(5)
    e = Sum(("A",), Product((Indicator("A", 1), P("A"))))
    assert eval_expr(e, j) == pytest.approx(brute_prob(j, {"A": 1}), abs=1e-15)
    assert eval_expr(Constant(Fraction(1, 3)), j) == pytest.approx(1 / 3)


def test_zero_denominator_raises():
    probs = np.array([[0.5, 0.5], [0.0, 0.0]])  # P(A=1) = 0
    j = JointTable(("A", "Y"), ((0, 1), (0, 1)), probs)
    with pytest.raises(ZeroDenominator) as err:
        eval_expr(P("Y", "A"), j, {"Y": 1, "A": 1})
    assert "P(y|a)" in str(err.value)
    assert isinstance(err.value, ZeroDivisionError)
    assert eval_expr(P("Y", "A"), j, {"Y": 1, "A": 0}) == pytest.approx(0.5)
    with pytest.raises(ZeroDenominator):
        eval_expr(Quotient(ONE, P("A")), j, {"A": 1})


def test_zero_denominator_in_trapdoor_region():
    # A is never 1 when C1 = C2 = 0, so P(a|c1,c2) vanishes in the denominator
    w = np.ones((2, 2, 2, 2))
    w[0, 0, 1, :] = 0.0
    w[1, 0, 1, :] = 0.0
    j = JointTable.from_array(("C1", "C2", "A", "Y"), [(0, 1)] * 4, w)
    with pytest.raises(ZeroDenominator):
        eval_expr(trapdoor_formula(), j, {"Y": 1, "A": 1, "C2": 0})
    assert math.isfinite(eval_expr(trapdoor_formula(), j, {"Y": 1, "A": 1, "C2": 1}))


def test_unbound_and_unknown_variables():
    j = table(6)
    with pytest.raises(UnboundVariable):
        eval_expr(P("A", "B"), j, {"A": 0})
    with pytest.raises(UnknownVariable):
        eval_expr(P("Q"), j, {"Q": 0})
    with pytest.raises(ExprError):
        eval_expr(P("A"), j, {"A": 7})


def test_atom_invariants():
    with pytest.raises(ExprError):
        Atom(("A",), ("A",))
    with pytest.raises(ExprError):
        Atom((), ())


def test_g1_text():
    g1 = frontdoor_helpers()["g1"]
    assert to_text(g1) == "Σ_{c1} P(a|c1,c2) P(c1)"
    assert to_latex(g1) == r"\sum_{c_1} P(a \mid c_1, c_2) P(c_1)"


def test_g3_text():
    assert to_text(frontdoor_helpers()["g3"]) == "Σ_{c1} P(z|c1,c2,c3,a) P(a|c1,c2,c3) P(c3|c1,c2) P(c1)"


def test_text_of_quotients_and_nesting():
    e = Quotient(Sum(("B",), P("A", "B") * P("B")), P("A"))
    assert to_text(e) == "(Σ_{b} P(a|b) P(b)) / P(a)"
    assert to_text(Product((P("A"), Sum(("B",), P("B"))))) == "P(a) [Σ_{b} P(b)]"
    assert to_text(Indicator("A", 1)) == "I(a=1)"


def test_parse_round_trip_on_fixed_forms():
    for e in [trapdoor_formula(), *frontdoor_helpers().values()]:
        again = parse_expr(to_text(e), ["Y", "A", "Z", "C1", "C2", "C3"])
        assert to_text(again) == to_text(e)


def test_parse_errors():
    with pytest.raises(ExprError):
        parse_expr("P(a|")
    with pytest.raises(ExprError):
        parse_expr("P(a) )")
    with pytest.raises(UnknownVariable):
        parse_expr("P(q)", ["A"])


def test_table_validation():
    with pytest.raises(TableError):
        JointTable(("A",), ((0, 1),), [0.5, 0.6])
    with pytest.raises(TableError):
        JointTable(("A",), ((0, 1),), [1.5, -0.5])
    with pytest.raises(TableError):
        JointTable(("A", "A"), ((0, 1), (0, 1)), np.full((2, 2), 0.25))
    with pytest.raises(TableError):
        JointTable(("A",), (tuple(range(7)),), np.full(7, 1 / 7))
    with pytest.raises(TableError):
        JointTable.uniform([f"V{i}" for i in range(13)], [(0,)] * 13)
    JointTable(("A",), ((0, 1),), [0.5, 0.5 + 5e-13])


def test_table_csv_round_trip(tmp_path):
    j = table(7, ("A", "B"), [2, 3])
    text = j.to_csv()
    assert text.splitlines()[0] == "A,B,prob"
    assert len(text.splitlines()) == 1 + 6
    assert JointTable.from_csv(text) == j
    path = tmp_path / "t.csv"
    j.to_csv(path)
    assert JointTable.from_csv(path) == j


def test_table_csv_rejects_bad_input():
    with pytest.raises(TableError):
        JointTable.from_csv("A,p\n0,0.5\n1,0.5\n")
    with pytest.raises(TableError):
        JointTable.from_csv("A,prob\n0,0.5\n0,0.5\n")
    with pytest.raises(TableError):
        JointTable.from_csv("A,prob\n0,0.5\n1,0.4\n")


def test_marginal_and_prob():
    j = table(8)
    m = j.marginal(["C", "A"])
    assert m.variables == ("C", "A")
    assert m.prob({"C": 1, "A": 0}) == pytest.approx(brute_prob(j, {"C": 1, "A": 0}), abs=1e-15)
    assert j.prob({"A": 1}, {"B": 0}) == pytest.approx(brute_prob(j, {"A": 1}, {"B": 0}), abs=1e-15)


@pytest.mark.parametrize("seed", range(20))
def test_sum_of_conditional_over_targets_is_one(seed):
    rng = np.random.Generator(np.random.Philox(seed))
    names = ["A", "B", "C", "D"]
    cards = list(rng.integers(1, 4, size=4))
    j = random_table(rng, names, cards)
    for r in range(1, 4):
        for s in itertools.combinations(names, r):
            rest = tuple(v for v in names if v not in s)
            e = Sum(s, Atom(s, rest))
            for cell in itertools.product(*(j.domain(v) for v in rest)):
                assert abs(eval_expr(e, j, dict(zip(rest, cell))) - 1.0) < 1e-12


def assignments(j, e):
    free = sorted(free_variables(e))
    for cell in itertools.product(*(j.domain(v) for v in free)):
        yield dict(zip(free, cell))


def safe_eval(e, j, bind):
    try:
        return eval_expr(e, j, bind)
    except ZeroDenominator:
        return None


def reorder(e, rng):
    """Shuffle Product children and Sum bound variables recursively."""
    if isinstance(e, Product):
        fs = [reorder(f, rng) for f in e.factors]
        rng.shuffle(fs)
        return Product(tuple(fs))
    if isinstance(e, Quotient):
        return Quotient(reorder(e.num, rng), reorder(e.den, rng))
    if isinstance(e, Sum):
        over = list(e.over)
        rng.shuffle(over)
        return Sum(tuple(over), reorder(e.body, rng))
    return e


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=150, deadline=None)
def test_evaluation_invariant_to_child_order(seed):
    rng = np.random.Generator(np.random.Philox(seed))
    names = ["A", "B", "C", "D"]
    j = random_table(rng, names, [2, 3, 2, 2])
    e = random_expression(rng, names)
    shuffled = reorder(e, rng)
    for bind in assignments(j, e):
        a, b = safe_eval(e, j, bind), safe_eval(shuffled, j, bind)
        assert (a is None) == (b is None)
        if a is not None:
            assert abs(a - b) <= 1e-12 * max(1.0, abs(a))


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=150, deadline=None)
def test_text_round_trip_preserves_value(seed):
    rng = np.random.Generator(np.random.Philox(seed))
    names = ["A", "B", "C", "D"]
    j = random_table(rng, names, [2, 2, 3, 2])
    e = random_expression(rng, names)
    again = parse_expr(to_text(e), names)
    assert to_text(again) == to_text(e)
    for bind in assignments(j, e):
        a, b = safe_eval(e, j, bind), safe_eval(again, j, bind)
        assert (a is None) == (b is None)
        if a is not None:
            assert abs(a - b) <= 1e-12 * max(1.0, abs(a))


def test_canonical_is_order_insensitive():
    a = Product((P("B"), P("A", ["C", "B"])))
    b = Product((P("A", ["B", "C"]), P("B")))
    assert to_text(canonical(a)) == to_text(canonical(b))
    assert canonical(canonical(a)) == canonical(a)


def test_printing_is_deterministic():
    e = trapdoor_formula()
    assert to_text(e) == to_text(trapdoor_formula())
    assert to_text(e) == "(Σ_{c1} P(y|c1,c2,a) P(a|c1,c2) P(c1)) / (Σ_{c1} P(a|c1,c2) P(c1))"
