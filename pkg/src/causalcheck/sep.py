"""d-/m-separation and back-door adjustment over DAGs and ADMGs."""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass
from typing import Iterable

from .graph import EdgeKind, Edge, GraphError, MixedGraph, ancestors, descendants


class UndirectedEdgePresent(GraphError):
    pass


class OverlappingSets(GraphError):
    pass


class TooManyCandidates(GraphError):
    pass


MAX_CANDIDATES = 20


@dataclass(frozen=True)
class SepQuery:
    x: frozenset[str]
    y: frozenset[str]
    z: frozenset[str] = frozenset()

    @classmethod
    def of(cls, x, y, z=()) -> "SepQuery":
        as_set = lambda v: frozenset([v]) if isinstance(v, str) else frozenset(v)
        return cls(as_set(x), as_set(y), as_set(z))


@dataclass(frozen=True)
class PathStep:
    node: str
    edge: Edge | None = None  # edge used to leave ``node``; None at the end


@dataclass(frozen=True)
class Path:
    steps: tuple[PathStep, ...]

    @property
    def nodes(self) -> list[str]:
        return [s.node for s in self.steps]

    def __str__(self):
        out = []
        for s in self.steps:
            out.append(s.node)
            if s.edge is not None:
                out.append(_edge_symbol(s.edge, s.node))
        return " ".join(out)


@dataclass(frozen=True)
class AdjustmentVerdict:
    valid: bool
    witness: Path | None = None
    reason: str = ""

    def __bool__(self):
        return self.valid


def _edge_symbol(e: Edge, at: str) -> str:
    if e.kind is EdgeKind.DIRECTED:
        return "->" if e.tail == at else "<-"
    return e.kind.value


def _arrowhead_at(e: Edge, node: str) -> bool:
    if e.kind is EdgeKind.BIDIRECTED:
        return True
    return e.kind is EdgeKind.DIRECTED and e.head == node


def _check(g: MixedGraph, x, y, z):
    if any(e.kind is EdgeKind.UNDIRECTED for e in g.edges):
        raise UndirectedEdgePresent("separation needs a DAG or ADMG; cluster or project undirected parts first")
    x, y, z = set(x), set(y), set(z)
    if not x or not y:
        raise OverlappingSets("x and y must be non-empty")
    if x & y or x & z or y & z:
        raise OverlappingSets("x, y and z must be pairwise disjoint")
    for n in x | y | z:
        g.node(n)
    return x, y, z


def d_separated(g: MixedGraph, x, y=None, z=()) -> bool:
    """m-separation of ``x`` and ``y`` given ``z``.

    Reachability over (node, arrived-with-arrowhead) states: a walk may pass
    a collider only if it is an ancestor of ``z`` and a non-collider only if
    it is outside ``z``. ``x`` may also be a :class:`SepQuery`.
    """
    if isinstance(x, SepQuery):
        x, y, z = x.x, x.y, x.z
    x, y, z = _check(g, _as_set(x), _as_set(y), _as_set(z))
    return not _reachable(g, x, z) & y


def _as_set(v) -> set[str]:
    return {v} if isinstance(v, str) else set(v)


def _reachable(g: MixedGraph, x: set[str], z: set[str]) -> set[str]:
    anz = ancestors(g, z)
    seen: set[tuple[str, bool]] = set()
    queue = deque()
    for s in g.sort(x):
        for e in g.incident(s):
            w = e.other(s)
            queue.append((w, _arrowhead_at(e, w)))
    found = set()
    while queue:
        v, into = queue.popleft()
        if (v, into) in seen:
            continue
        seen.add((v, into))
        found.add(v)
        for e in g.incident(v):
            nxt_into_v = _arrowhead_at(e, v)
            collider = into and nxt_into_v
            if collider:
                if v not in anz:
                    continue
            elif v in z:
                continue
            w = e.other(v)
            queue.append((w, _arrowhead_at(e, w)))
    return found


def _blocks(g: MixedGraph, path_edges: list[Edge], nodes: list[str], z: set[str], anz: set[str]) -> bool:
    for i in range(1, len(nodes) - 1):
        v = nodes[i]
        collider = _arrowhead_at(path_edges[i - 1], v) and _arrowhead_at(path_edges[i], v)
        if collider and v not in anz:
            return True
        if not collider and v in z:
            return True
    return False


def open_path(g: MixedGraph, x, y, z=(), first_edge=None) -> Path | None:
    """First d-connecting path from ``x`` to ``y`` given ``z`` in BFS order.

    Expansion follows node-index order so the result is reproducible.
    ``first_edge`` optionally filters the edge that leaves the start node.
    """
    x, y, z = _check(g, _as_set(x), _as_set(y), _as_set(z))
    anz = ancestors(g, z)
    queue = deque([([s], []) for s in g.sort(x)])
    while queue:
        nodes, used = queue.popleft()
        v = nodes[-1]
        for e in g.incident(v):
            w = e.other(v)
            if w in nodes or w in x:
                continue
            if not used and first_edge is not None and not first_edge(e, v):
                continue
            if used:
                prev = used[-1]
                collider = _arrowhead_at(prev, v) and _arrowhead_at(e, v)
                if collider and v not in anz:
                    continue
                if not collider and v in z:
                    continue
            if w in y:
                steps = [PathStep(n, ed) for n, ed in zip(nodes, used + [e])]
                return Path(tuple(steps + [PathStep(w)]))
            queue.append((nodes + [w], used + [e]))
    return None


def all_paths(g: MixedGraph, a: str, b: str) -> list[tuple[list[str], list[Edge]]]:
    """Every simple path between ``a`` and ``b`` as (nodes, edges)."""
    out = []

    def walk(nodes, used):
        v = nodes[-1]
        for e in g.incident(v):
            w = e.other(v)
            if w == b:
                out.append((nodes + [w], used + [e]))
            elif w not in nodes:
                walk(nodes + [w], used + [e])

    walk([a], [])
    return out


def d_separated_bruteforce(g: MixedGraph, x, y, z=()) -> bool:
    """Reference oracle: enumerate all simple paths and test each position."""
    x, y, z = _check(g, _as_set(x), _as_set(y), _as_set(z))
    # collider opened by a descendant in z == collider is an ancestor of z
    opened = {v for v in g.names if descendants(g, [v]) & z}
    for a in x:
        for b in y:
            for nodes, used in all_paths(g, a, b):
                if set(nodes[1:-1]) & (x | y):
                    continue
                if not _blocks(g, used, nodes, z, opened):
                    return False
    return True


def is_valid_backdoor(g: MixedGraph, a: str, y: str, z: Iterable[str] = ()) -> AdjustmentVerdict:
    """Back-door criterion for the effect of ``a`` on ``y`` with adjustment set ``z``."""
    z = set(z)
    if a in z or y in z:
        raise OverlappingSets("treatment and outcome cannot be in the adjustment set")
    _check(g, {a}, {y}, z)
    bad = descendants(g, [a]) & z
    if bad:
        return AdjustmentVerdict(False, None, f"adjustment set contains descendants of {a}: {sorted(bad)}")
    cut = g.without_outgoing([a])
    if d_separated(cut, {a}, {y}, z):
        return AdjustmentVerdict(True)
    witness = open_path(g, {a}, {y}, z, first_edge=lambda e, v: _arrowhead_at(e, v))
    return AdjustmentVerdict(False, witness, "open back-door path")


def enumerate_adjustment_sets(g: MixedGraph, a: str, y: str, candidates: Iterable[str]) -> list[frozenset[str]]:
    """All valid back-door sets within ``candidates``, by size then name order."""
    cands = sorted(set(candidates) - {a, y})
    if len(cands) > MAX_CANDIDATES:
        raise TooManyCandidates(f"{len(cands)} candidates exceeds {MAX_CANDIDATES}")
    out = []
    for k in range(len(cands) + 1):
        for combo in itertools.combinations(cands, k):
            if is_valid_backdoor(g, a, y, combo).valid:
                out.append(frozenset(combo))
    return out
