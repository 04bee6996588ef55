import itertools

import numpy as np
import pytest

from causalcheck.expr import (
    Atom,
    Constant,
    JointTable,
    P,
    Product,
    Quotient,
    Sum,
    ZeroDenominator,
    eval_expr,
    free_variables,
    to_text,
)
from causalcheck.graph import Edge, EdgeKind, MixedGraph, Node, latent_project, parse_graph
from causalcheck.ident import (
    EmptyQuery,
    NotADMG,
    complex_frontdoor_formula,
    evaluate_effect,
    frontdoor_helpers,
    identify,
    simplify,
    trapdoor_formula,
)
from causalcheck.repro import random_admg, random_table
from causalcheck.scm import TableCpd, Scm, exact_joint, figure, random_binary_scm

N_SCMS = 50


def interventional(s, x_values, outcomes):
    return exact_joint(s.intervene(x_values), list(outcomes))


def worst_error(g_full, x, y, seeds):
    """Largest |identified - oracle| over seeded binary SCMs and all cells."""
    res = identify(latent_project(g_full), x, y)
    assert res.identified, res.witness
    worst = 0.0
    for seed in seeds:
        s = random_binary_scm(g_full, seed)
        obs = exact_joint(s)
        for xv in itertools.product((0, 1), repeat=len(x)):
            truth = interventional(s, dict(zip(x, xv)), y)
            for yv in itertools.product((0, 1), repeat=len(y)):
                target = truth.prob(dict(zip(y, yv)))
                for cv in itertools.product((0, 1), repeat=len(res.context)):
                    got = evaluate_effect(res, obs, {**dict(zip(x, xv)), **dict(zip(y, yv))},
                                          dict(zip(res.context, cv)))
                    worst = max(worst, abs(got - target))
    return worst


@pytest.mark.parametrize("name", ["2a", "2b", "2c", "3a", "3b", "3c"])
def test_identify_matches_enumeration_oracle(name):
    assert worst_error(figure(name), ["A"], ["Y"], range(N_SCMS)) < 1e-10


def with_latents(g):
    """Replace each bidirected edge by a latent common parent."""
    nodes = list(g.nodes)
    edges = [e for e in g.edges if e.kind is EdgeKind.DIRECTED]
    for e in g.edges_of(EdgeKind.BIDIRECTED):
        u = f"U_{e.tail}_{e.head}"
        nodes.append(Node(len(nodes), u, latent=True))
        edges += [Edge(u, e.tail, EdgeKind.DIRECTED), Edge(u, e.head, EdgeKind.DIRECTED)]
    return MixedGraph(nodes, edges)


def test_identify_sound_on_random_admgs():
    rng = np.random.Generator(np.random.Philox(17))
    identified = hedges = 0
    for i in range(60):
        g = random_admg(rng, max_nodes=5)
        names = list(g.names)
        rng.shuffle(names)
        x, y = [names[0]], [names[1]]
        if len(names) > 3 and rng.random() < 0.3:
            y.append(names[2])
        res = identify(g, x, y)
        if not res.identified:
            hedges += 1
            assert res.witness.startswith("hedge")
            continue
        identified += 1
        assert worst_error(with_latents(g), x, y, [i, i + 1000]) < 1e-10
    assert identified > 20 and hedges > 3


@pytest.mark.parametrize("text", ["A -> Y; A <-> Y", "A -> Z; Z -> Y; A <-> Z", "A -> Z; Z -> Y; A <-> Z; Z <-> Y"])
def test_hedge_graphs_are_not_identifiable(text):
    res = identify(parse_graph(text), ["A"], ["Y"])
    assert not res.identified and res.expr is None
    assert "hedge" in res.witness
    assert res.text().startswith("NOT IDENTIFIABLE")
    assert res.trace[-1].startswith("FAIL")


def test_bow_witness():
    res = identify(parse_graph("A -> Y; A <-> Y"), ["A"], ["Y"])
    assert res.witness == "hedge: F={A, Y}, F'={Y}"


def test_input_validation():
    with pytest.raises(NotADMG):
        identify(figure("1a"), ["A"], ["Y"])
    with pytest.raises(NotADMG):
        identify(figure("2a"), ["A"], ["Y"])
    with pytest.raises(EmptyQuery):
        identify(figure("3a"), [], ["Y"])
    with pytest.raises(EmptyQuery):
        identify(figure("3a"), ["A"], ["A"])


def test_frontdoor_equals_textbook_form():
    g = figure("3b")
    res = identify(latent_project(g), ["A"], ["Y"])
    textbook = Sum(("Z",), Product((P("Z", "A"), Sum(("A",), Product((P("Y", ["Z", "A"]), P("A")))))))
    for seed in range(N_SCMS):
        obs = exact_joint(random_binary_scm(g, seed))
        for a, y in itertools.product((0, 1), repeat=2):
            want = eval_expr(textbook, obs, {"A": a, "Y": y})
            assert abs(evaluate_effect(res, obs, {"A": a, "Y": y}) - want) < 1e-10


def test_backdoor_graph_gives_adjustment_formula():
    res = identify(figure("3a"), ["A"], ["Y"])
    assert res.text() == "Σ_{c} P(c) P(y|a,c)"
    assert res.context == ()
    assert free_variables(res.expr) == {"A", "Y"}


def test_identify_is_deterministic():
    g = latent_project(figure("2c"))
    texts = {identify(g, ["A"], ["Y"]).text() for _ in range(3)}
    assert len(texts) == 1
    a, b = identify(g, ["A"], ["Y"]), identify(g, ["A"], ["Y"])
    assert a.trace == b.trace


def test_trace_records_recursion():
    res = identify(latent_project(figure("2b")), ["A"], ["Y"])
    assert res.trace[0].startswith("ID(")
    assert any("line" in t for t in res.trace)


def test_free_variables_are_query_plus_context():
    for name in ("2a", "2b", "2c", "3a", "3b", "3c"):
        res = identify(latent_project(figure(name)), ["A"], ["Y"])
        assert free_variables(res.expr) == {"A", "Y", *res.context}


# -- fixed formulas ------------------------------------------------------------


def test_trapdoor_formula_structure():
    e = trapdoor_formula()
    assert isinstance(e, Quotient)
    assert free_variables(e) == {"Y", "A", "C2"}
    assert to_text(e.den) == "Σ_{c1} P(a|c1,c2) P(c1)"
    assert to_text(e.num) == "Σ_{c1} P(y|c1,c2,a) P(a|c1,c2) P(c1)"


def constant_c2_table(seed, independent=False):
    rng = np.random.Generator(np.random.Philox(seed))
    j = random_table(rng, ["C1", "A", "Y"], [2, 2, 2])
    probs = j.probs
    if independent:
        pa = probs.sum(axis=(0, 2))
        pc_y = probs.sum(axis=1)
        ya = probs / probs.sum(axis=2, keepdims=True)
        probs = np.einsum("c,a,cay->cay", pc_y.sum(axis=1), pa, ya)
    return JointTable(("C1", "C2", "A", "Y"), ((0, 1), (0,), (0, 1), (0, 1)), probs[:, None, :, :])


def test_trapdoor_with_constant_c2_reduces_to_crude_conditional():
    # with C2 fixed the numerator sums to P(y, a) and the denominator to P(a)
    for seed in range(20):
        j = constant_c2_table(seed)
        for a, y in itertools.product((0, 1), repeat=2):
            got = eval_expr(trapdoor_formula(), j, {"Y": y, "A": a, "C2": 0})
            assert abs(got - j.prob({"Y": y}, {"A": a})) < 1e-12


def test_trapdoor_with_constant_c2_and_independent_treatment_is_backdoor():
    backdoor = Sum(("C1",), Product((P("Y", ["C1", "A"]), P("C1"))))
    for seed in range(20):
        j = constant_c2_table(seed, independent=True)
        for a, y in itertools.product((0, 1), repeat=2):
            got = eval_expr(trapdoor_formula(), j, {"Y": y, "A": a, "C2": 0})
            assert abs(got - eval_expr(backdoor, j, {"Y": y, "A": a})) < 1e-12


def test_trapdoor_with_independent_treatment_matches_hand_reduction():
    # A independent of (C1, C2): P(a|c1,c2) = P(a)
    rng = np.random.Generator(np.random.Philox(3))
    cc = random_table(rng, ["C1", "C2"], [2, 2]).probs
    pa = np.array([0.3, 0.7])
    ycond = rng.dirichlet([1, 1], size=(2, 2, 2))
    j = JointTable(("C1", "C2", "A", "Y"), [(0, 1)] * 4, np.einsum("cd,a,cday->cday", cc, pa, ycond))
    hand = Quotient(Sum(("C1",), Product((P("Y", ["C1", "C2", "A"]), P("A"), P("C1")))), P("A"))
    for a, y, c2 in itertools.product((0, 1), repeat=3):
        bind = {"Y": y, "A": a, "C2": c2}
        assert abs(eval_expr(trapdoor_formula(), j, bind) - eval_expr(hand, j, bind)) < 1e-12


def test_trapdoor_invariant_in_c2_on_compatible_scms():
    g = figure("2b")
    for seed in range(N_SCMS):
        s = random_binary_scm(g, seed)
        obs = exact_joint(s)
        for a, y in itertools.product((0, 1), repeat=2):
            v0, v1 = (eval_expr(trapdoor_formula(), obs, {"Y": y, "A": a, "C2": c}) for c in (0, 1))
            assert abs(v0 - v1) < 1e-10
            truth = interventional(s, {"A": a}, ["Y"]).prob({"Y": y})
            assert abs(v0 - truth) < 1e-10


def test_complex_frontdoor_structure():
    g = frontdoor_helpers()
    assert to_text(g["g3"]) == "Σ_{c1} P(z|c1,c2,c3,a) P(a|c1,c2,c3) P(c3|c1,c2) P(c1)"
    e = complex_frontdoor_formula()
    assert free_variables(e) == {"Y", "A", "C2"}
    inner = e.factors[1].body.factors[1]
    assert isinstance(inner, Sum) and inner.over == ("A",)


def test_complex_frontdoor_exact_without_c1_c2_confounding():
    g = parse_graph(
        "latent U1; latent U3; latent U4; C3 -> A; A -> Z; Z -> Y; C1 -> C2; C2 -> C3;"
        "U1 -> C1; U1 -> Z; U3 -> C3; U3 -> A; U4 -> A; U4 -> Y"
    )
    for seed in range(10):
        s = random_binary_scm(g, seed)
        obs = exact_joint(s)
        for a, y, c2 in itertools.product((0, 1), repeat=3):
            truth = interventional(s, {"A": a}, ["Y"]).prob({"Y": y})
            got = eval_expr(complex_frontdoor_formula(), obs, {"Y": y, "A": a, "C2": c2})
            assert abs(got - truth) < 1e-10


def test_evaluate_effect_context_default_and_override():
    g = figure("2b")
    res = identify(latent_project(g), ["A"], ["Y"])
    assert res.context == ("C2",)
    obs = exact_joint(random_binary_scm(g, 0))
    a = evaluate_effect(res, obs, {"A": 1, "Y": 1})
    b = evaluate_effect(res, obs, {"A": 1, "Y": 1}, {"C2": 0})
    c = evaluate_effect(res, obs, {"A": 1, "Y": 1}, {"C2": 1})
    assert a == b and abs(b - c) < 1e-10


def test_positivity_violation_surfaces():
    g = parse_graph("C -> A; C -> Y; A -> Y")
    s = Scm(g, {
        "C": TableCpd((), np.array([0.5, 0.5])),
        "A": TableCpd(("C",), np.array([[1.0, 0.0], [0.5, 0.5]])),
        "Y": TableCpd(("C", "A"), np.full((2, 2, 2), 0.5)),
    })
    res = identify(g, ["A"], ["Y"])
    with pytest.raises(ZeroDenominator):
        evaluate_effect(res, exact_joint(s), {"A": 1, "Y": 1})


# -- simplify -------------------------------------------------------------------


def test_simplify_normalization():
    assert simplify(Sum(("V",), P("V"))) == Constant(1)
    assert simplify(Sum(("V", "W"), P(["V", "W"]))) == Constant(1)


def test_simplify_drops_sum_over_unmentioned_factor():
    e = Sum(("C1",), Product((P("Y", "A"), P("C1"))))
    assert to_text(simplify(e)) == "P(y|a)"


def test_simplify_vacuous_sum():
    assert to_text(simplify(Sum(("B",), P("A")))) == "P(a)"


def test_simplify_cancels_quotient_factors():
    e = Quotient(Product((P("A"), P("B", "A"))), P("A"))
    assert to_text(simplify(e)) == "P(b|a)"


def test_simplify_flattens_products():
    e = Product((P("A"), Product((P("B"), Product((P("C"),))))))
    assert to_text(simplify(e)) == "P(a) P(b) P(c)"


def test_simplify_keeps_sums_that_bind_other_factors():
    # summing out v here is not a normalization, so the sum must stay
    e = Sum(("V",), Product((P("X"), P("V"), Quotient(Constant(1), P("V")))))
    j = random_table(np.random.Generator(np.random.Philox(1)), ["X", "V"], [2, 3])
    s = simplify(e)
    assert abs(eval_expr(e, j, {"X": 0}) - eval_expr(s, j, {"X": 0})) < 1e-12
    e = Sum(("V",), Sum(("W",), P("W", "V")))
    j = random_table(np.random.Generator(np.random.Philox(2)), ["V", "W"], [3, 2])
    # the inner sum is 1 for each v, so the outer sum counts the domain of V
    assert abs(eval_expr(simplify(e), j) - eval_expr(e, j)) < 1e-12


def test_simplify_backdoor_output_equal_on_random_tables():
    res = identify(figure("3a"), ["A"], ["Y"])
    raw = Sum(("C",), Product((P("C"), P("Y", ["A", "C"]), P("A", "C"), Quotient(Constant(1), P("A", "C")))))
    for seed in range(20):
        j = random_table(np.random.Generator(np.random.Philox(seed)), ["A", "C", "Y"], [2, 3, 2])
        for a, y in itertools.product((0, 1), repeat=2):
            assert abs(eval_expr(raw, j, {"A": a, "Y": y}) - eval_expr(simplify(raw), j, {"A": a, "Y": y})) < 1e-12
            assert abs(eval_expr(res.expr, j, {"A": a, "Y": y}) - eval_expr(raw, j, {"A": a, "Y": y})) < 1e-12


def test_simplify_is_idempotent_on_identified_outputs():
    for name in ("2a", "2b", "2c", "3a", "3b", "3c"):
        e = identify(latent_project(figure(name)), ["A"], ["Y"]).expr
        assert to_text(simplify(e)) == to_text(simplify(simplify(e)))


def test_atom_order_irrelevant_for_cancellation():
    e = Quotient(Atom(("A", "B")), Atom(("B", "A")))
    assert simplify(e) == Constant(1)
