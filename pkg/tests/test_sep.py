import itertools

import numpy as np
import pytest

from causalcheck.graph import latent_project, parse_graph
from causalcheck.repro import all_dags, random_admg
from causalcheck.scm import figure
from causalcheck.sep import (
    OverlappingSets,
    SepQuery,
    TooManyCandidates,
    UndirectedEdgePresent,
    all_paths,
    d_separated,
    d_separated_bruteforce,
    enumerate_adjustment_sets,
    is_valid_backdoor,
    open_path,
)


def test_mbias_latents_separated_marginally():
    g = figure("2a")
    assert d_separated(g, "U1", "U2")
    assert d_separated(g, SepQuery.of("U1", "U2"))


def test_conditioning_on_collider_opens_path():
    g = figure("2a")
    assert not d_separated(g, "U1", "U2", ["C2"])
    assert str(open_path(g, "U1", "U2", ["C2"])) == "U1 -> C2 <- U2"


def test_conditioning_on_descendant_of_collider_opens_path():
    g = parse_graph("X -> C; Y -> C; C -> D")
    assert d_separated(g, "X", "Y")
    assert not d_separated(g, "X", "Y", ["D"])


def test_deterministic_covariates_are_d_connected():
    g = figure("1c")
    assert not d_separated(g, "C1", "C4")
    assert d_separated(g, "C2", "C3")
    assert not d_separated(g, "C2", "C3", ["C1"])


def test_undirected_edges_rejected():
    with pytest.raises(UndirectedEdgePresent):
        d_separated(figure("1a"), "A", "Y", ["C1"])


def test_overlapping_or_empty_sets_rejected():
    g = figure("3a")
    with pytest.raises(OverlappingSets):
        d_separated(g, "A", "A")
    with pytest.raises(OverlappingSets):
        d_separated(g, "A", "Y", ["A"])
    with pytest.raises(OverlappingSets):
        d_separated(g, [], "Y")
    with pytest.raises(OverlappingSets):
        is_valid_backdoor(g, "A", "Y", ["Y"])


def test_backdoor_on_clustered_graph():
    v = is_valid_backdoor(figure("1d"), "A", "Y", ["C"])
    assert v.valid and v.witness is None
    v = is_valid_backdoor(figure("1d"), "A", "Y", [])
    assert not v.valid
    assert str(v.witness) == "A <- C -> Y"


def test_backdoor_on_projected_mbias_graph():
    m = latent_project(figure("2a"))
    assert is_valid_backdoor(m, "A", "Y", []).valid
    bad = is_valid_backdoor(m, "A", "Y", ["C2"])
    assert not bad.valid
    assert str(bad.witness) == "A <-> C2 <-> Y"
    assert bad.witness.nodes[0] == "A" and bad.witness.nodes[-1] == "Y"


def test_backdoor_rejects_descendants_of_treatment():
    g = parse_graph("C -> A; C -> Y; A -> M; M -> Y")
    v = is_valid_backdoor(g, "A", "Y", ["C", "M"])
    assert not v.valid and "descendants" in v.reason


def test_enumerate_adjustment_sets():
    assert enumerate_adjustment_sets(figure("3a"), "A", "Y", ["C"]) == [frozenset({"C"})]
    m = latent_project(figure("2a"))
    assert enumerate_adjustment_sets(m, "A", "Y", ["C2"]) == [frozenset()]
    trap = latent_project(figure("2b"))
    assert enumerate_adjustment_sets(trap, "A", "Y", ["C1", "C2"]) == []
    for z in ([], ["C1"], ["C2"], ["C1", "C2"]):
        assert not is_valid_backdoor(trap, "A", "Y", z).valid


def test_enumeration_order_is_by_size_then_name():
    g = parse_graph("C -> A; C -> Y; A -> Y; D; E; D -> C")
    sets = enumerate_adjustment_sets(g, "A", "Y", ["E", "D", "C"])
    assert sets == [
        frozenset({"C"}),
        frozenset({"C", "D"}), frozenset({"C", "E"}),
        frozenset({"C", "D", "E"}),
    ]


def test_too_many_candidates():
    g = parse_graph("A -> Y; " + "; ".join(f"N{i}" for i in range(21)))
    with pytest.raises(TooManyCandidates):
        enumerate_adjustment_sets(g, "A", "Y", [f"N{i}" for i in range(21)])


def test_all_paths_oracle_counts():
    g = parse_graph("A -> B; B -> C; A -> C; A <-> C")
    assert len(all_paths(g, "A", "C")) == 3


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_exhaustive_small_dags_match_path_oracle(n):
    for g in all_dags(n):
        for x, y in itertools.combinations(g.names, 2):
            rest = [v for v in g.names if v not in (x, y)]
            for r in range(len(rest) + 1):
                for z in itertools.combinations(rest, r):
                    assert d_separated(g, x, y, z) == d_separated_bruteforce(g, x, y, z)


def test_dag_enumeration_counts():
    # edge subsets of a fixed order: 2^(n choose 2)
    assert [sum(1 for _ in all_dags(n)) for n in range(1, 5)] == [1, 2, 8, 64]


def test_random_admgs_match_path_oracle():
    rng = np.random.Generator(np.random.Philox(11))
    for _ in range(150):
        g = random_admg(rng)
        names = g.names
        for x, y in itertools.combinations(names, 2):
            rest = [v for v in names if v not in (x, y)]
            for r in range(len(rest) + 1):
                for z in itertools.combinations(rest, r):
                    got = d_separated(g, x, y, z)
                    assert got == d_separated_bruteforce(g, x, y, z)
                    assert got == d_separated(g, y, x, z)


def test_set_valued_queries_match_oracle_and_decompose():
    rng = np.random.Generator(np.random.Philox(5))
    checked = 0
    for _ in range(200):
        g = random_admg(rng)
        if len(g) < 4:
            continue
        names = list(g.names)
        rng.shuffle(names)
        x, y, w, *rest = names
        z = [v for v in rest if rng.random() < 0.5]
        joint = d_separated(g, [x], [y, w], z)
        assert joint == d_separated_bruteforce(g, [x], [y, w], z)
        if joint:
            assert d_separated(g, x, y, z) and d_separated(g, x, w, z)
            checked += 1
    assert checked > 10


def test_witness_is_deterministic_and_open():
    g = latent_project(figure("2c"))
    p1 = open_path(g, "A", "Y", ["Z"])
    p2 = open_path(g, "A", "Y", ["Z"])
    assert p1 == p2
    assert str(p1) == "A <-> Y"
    assert open_path(g, "C1", "Y", ["A", "Z", "C3"]) is not None
