"""Mixed graphs: data model, a small text DSL, and structural operations.

A :class:`MixedGraph` holds directed (``X -> Y``), bidirected (``X <-> Y``)
and undirected (``X -- Y``) edges. Graphs are immutable; every operation
returns a new graph.

DSL grammar::

    program    := (statement (';' | NEWLINE))* statement?
    statement  := NAME '->' NAME | NAME '<->' NAME | NAME '--' NAME
                | 'latent' NAME | 'deterministic' NAME | NAME
    NAME       := [A-Za-z_][A-Za-z0-9_]*
    comment    := '#' to end of line
"""

from __future__ import annotations

import heapq
import re
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable


class GraphError(ValueError):
    pass


class GraphSyntaxError(GraphError):
    def __init__(self, line: int, col: int, expected: str, found: str = ""):
        self.line = line
        self.col = col
        self.expected = expected
        self.found = found
        got = f", found {found!r}" if found else ""
        super().__init__(f"line {line}, col {col}: expected {expected}{got}")


class DuplicateEdge(GraphError):
    pass


class UnknownNode(GraphError):
    pass


class SelfLoop(GraphError):
    pass


class NonExogenousLatent(GraphError):
    pass


class EmptyCluster(GraphError):
    pass


class LabelCollision(GraphError):
    pass


class CycleDetected(GraphError):
    def __init__(self, cycle: list[str]):
        self.cycle = cycle
        super().__init__("directed cycle: " + " -> ".join(cycle))


class EdgeKind(Enum):
    DIRECTED = "->"
    BIDIRECTED = "<->"
    UNDIRECTED = "--"

    @property
    def symmetric(self) -> bool:
        return self is not EdgeKind.DIRECTED


@dataclass(frozen=True)
class Node:
    index: int
    name: str
    latent: bool = False
    deterministic: bool = False


@dataclass(frozen=True, eq=False)
class Edge:
    tail: str
    head: str
    kind: EdgeKind

    @staticmethod
    def make(tail: str, head: str, kind: EdgeKind) -> "Edge":
        if kind.symmetric and head < tail:
            tail, head = head, tail
        return Edge(tail, head, kind)

    def key(self) -> tuple[str, str, str]:
        return (self.tail, self.head, self.kind.value)

    def __eq__(self, other):
        return isinstance(other, Edge) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __lt__(self, other):
        return self.key() < other.key()

    def other(self, node: str) -> str:
        return self.head if node == self.tail else self.tail

    def __str__(self):
        return f"{self.tail} {self.kind.value} {self.head}"


class MixedGraph:
    """Immutable graph with directed, bidirected and undirected edges.

    Node indices follow first appearance and are used for deterministic
    tie-breaking. Equality compares names, node flags and edges only.
    """

    def __init__(self, nodes: Iterable[Node] = (), edges: Iterable[Edge] = ()):
        self._nodes: dict[str, Node] = {}
        for i, n in enumerate(sorted(nodes, key=lambda n: n.index)):
            self._nodes[n.name] = replace(n, index=i)
        self._edges = frozenset(edges)
        self._out: dict[str, list[Edge]] = {n: [] for n in self._nodes}
        for e in self._edges:
            for end in (e.tail, e.head):
                if end not in self._nodes:
                    raise UnknownNode(f"edge {e} references unknown node {end!r}")
            if e.tail == e.head:
                raise SelfLoop(f"self loop on {e.tail!r}")
            self._out[e.tail].append(e)
            self._out[e.head].append(e)
        for name in self._out:
            self._out[name].sort(key=lambda e: (self.index(e.other(name)), e.kind.value))

    # -- construction -------------------------------------------------------

    @classmethod
    def build(
        cls,
        directed: Iterable[tuple[str, str]] = (),
        bidirected: Iterable[tuple[str, str]] = (),
        undirected: Iterable[tuple[str, str]] = (),
        nodes: Iterable[str] = (),
        latent: Iterable[str] = (),
        deterministic: Iterable[str] = (),
    ) -> "MixedGraph":
        order: dict[str, None] = {}
        edges = []
        for kind, pairs in (
            (EdgeKind.DIRECTED, directed),
            (EdgeKind.BIDIRECTED, bidirected),
            (EdgeKind.UNDIRECTED, undirected),
        ):
            for a, b in pairs:
                order.setdefault(a)
                order.setdefault(b)
                edges.append(Edge.make(a, b, kind))
        for n in (*nodes, *latent, *deterministic):
            order.setdefault(n)
        latent, deterministic = set(latent), set(deterministic)
        if len(set(edges)) != len(edges):
            raise DuplicateEdge("duplicate edge")
        return cls(
            [Node(i, n, n in latent, n in deterministic) for i, n in enumerate(order)],
            edges,
        )

    # -- basic accessors ----------------------------------------------------

    @property
    def nodes(self) -> list[Node]:
        return list(self._nodes.values())

    @property
    def names(self) -> list[str]:
        return list(self._nodes)

    @property
    def edges(self) -> frozenset[Edge]:
        return self._edges

    def __contains__(self, name: str) -> bool:
        return name in self._nodes

    def __len__(self) -> int:
        return len(self._nodes)

    def node(self, name: str) -> Node:
        try:
            return self._nodes[name]
        except KeyError:
            raise UnknownNode(f"unknown node {name!r}") from None

    def index(self, name: str) -> int:
        return self.node(name).index

    def sort(self, names: Iterable[str]) -> list[str]:
        return sorted(names, key=self.index)

    @property
    def observed(self) -> list[str]:
        return [n.name for n in self._nodes.values() if not n.latent]

    @property
    def latents(self) -> list[str]:
        return [n.name for n in self._nodes.values() if n.latent]

    def incident(self, name: str) -> list[Edge]:
        """Edges touching ``name``, ordered by the index of the other end."""
        return self._out[name]

    def parents(self, name: str) -> list[str]:
        return [e.tail for e in self._out[name] if e.kind is EdgeKind.DIRECTED and e.head == name]

    def children(self, name: str) -> list[str]:
        return [e.head for e in self._out[name] if e.kind is EdgeKind.DIRECTED and e.tail == name]

    def spouses(self, name: str) -> list[str]:
        return [e.other(name) for e in self._out[name] if e.kind is EdgeKind.BIDIRECTED]

    def neighbors(self, name: str) -> list[str]:
        return [e.other(name) for e in self._out[name] if e.kind is EdgeKind.UNDIRECTED]

    def has_edge(self, tail: str, head: str, kind: EdgeKind = EdgeKind.DIRECTED) -> bool:
        return Edge.make(tail, head, kind) in self._edges

    def edges_of(self, kind: EdgeKind) -> list[Edge]:
        return sorted(e for e in self._edges if e.kind is kind)

    def __eq__(self, other):
        if not isinstance(other, MixedGraph):
            return NotImplemented
        mine = {n.name: (n.latent, n.deterministic) for n in self.nodes}
        theirs = {n.name: (n.latent, n.deterministic) for n in other.nodes}
        return mine == theirs and self._edges == other._edges

    def __hash__(self):
        return hash((frozenset(self._nodes), self._edges))

    def __repr__(self):
        return f"MixedGraph({render_graph(self)!r})"

    # -- predicates ---------------------------------------------------------

    def is_dag(self) -> bool:
        if any(e.kind is not EdgeKind.DIRECTED for e in self._edges):
            return False
        return self._directed_acyclic()

    def is_admg(self) -> bool:
        if any(e.kind is EdgeKind.UNDIRECTED for e in self._edges):
            return False
        return self._directed_acyclic()

    def _directed_acyclic(self) -> bool:
        try:
            topological_order(self)
        except CycleDetected:
            return False
        return True

    # -- derived graphs -----------------------------------------------------

    def subgraph(self, names: Iterable[str]) -> "MixedGraph":
        keep = set(names)
        for n in keep:
            self.node(n)
        return MixedGraph(
            [n for n in self.nodes if n.name in keep],
            [e for e in self._edges if e.tail in keep and e.head in keep],
        )

    def without_incoming(self, names: Iterable[str]) -> "MixedGraph":
        """Drop directed edges into ``names`` and bidirected edges touching them."""
        cut = set(names)
        keep = []
        for e in self._edges:
            if e.kind is EdgeKind.DIRECTED and e.head in cut:
                continue
            if e.kind is EdgeKind.BIDIRECTED and (e.tail in cut or e.head in cut):
                continue
            keep.append(e)
        return MixedGraph(self.nodes, keep)

    def without_outgoing(self, names: Iterable[str]) -> "MixedGraph":
        """Drop directed edges out of ``names``."""
        cut = set(names)
        return MixedGraph(
            self.nodes,
            [e for e in self._edges if not (e.kind is EdgeKind.DIRECTED and e.tail in cut)],
        )

    def with_flags(self, name: str, *, latent: bool | None = None, deterministic: bool | None = None) -> "MixedGraph":
        node = self.node(name)
        node = replace(
            node,
            latent=node.latent if latent is None else latent,
            deterministic=node.deterministic if deterministic is None else deterministic,
        )
        return MixedGraph([node if n.name == name else n for n in self.nodes], self._edges)

    def districts(self) -> list[list[str]]:
        """Connected components under bidirected edges (c-components)."""
        seen: set[str] = set()
        out = []
        for start in self._nodes:
            if start in seen:
                continue
            comp, stack = [], [start]
            seen.add(start)
            while stack:
                v = stack.pop()
                comp.append(v)
                for w in self.spouses(v):
                    if w not in seen:
                        seen.add(w)
                        stack.append(w)
            out.append(self.sort(comp))
        return out


# -- reachability -----------------------------------------------------------


def ancestors(g: MixedGraph, names: Iterable[str]) -> set[str]:
    """Nodes with a directed path into ``names``; includes ``names``."""
    out = set(names)
    stack = list(out)
    while stack:
        for p in g.parents(stack.pop()):
            if p not in out:
                out.add(p)
                stack.append(p)
    return out


def descendants(g: MixedGraph, names: Iterable[str]) -> set[str]:
    """Nodes reachable from ``names`` along directed edges; includes ``names``."""
    out = set(names)
    stack = list(out)
    while stack:
        for c in g.children(stack.pop()):
            if c not in out:
                out.add(c)
                stack.append(c)
    return out


def topological_order(g: MixedGraph) -> list[str]:
    """Kahn's algorithm over directed edges, smallest index first among ties."""
    indeg = {n: len(g.parents(n)) for n in g.names}
    heap = [(g.index(n), n) for n, d in indeg.items() if d == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        _, v = heapq.heappop(heap)
        order.append(v)
        for c in g.children(v):
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(heap, (g.index(c), c))
    if len(order) != len(g):
        raise CycleDetected(_find_cycle(g, set(g.names) - set(order)))
    return order


def _find_cycle(g: MixedGraph, candidates: set[str]) -> list[str]:
    # every node left over by Kahn has a parent among the leftovers
    start = g.sort(candidates)[0]
    path, seen = [start], {start: 0}
    v = start
    while True:
        v = next(p for p in g.sort(g.parents(v)) if p in candidates)
        if v in seen:
            cyc = path[seen[v]:] + [v]
            return list(reversed(cyc))
        seen[v] = len(path)
        path.append(v)


# -- structural operations --------------------------------------------------


def latent_project(g: MixedGraph, latents: Iterable[str] | None = None) -> MixedGraph:
    """Replace exogenous latent nodes by bidirected edges among their children.

    ``latents`` defaults to the nodes flagged latent in ``g``.
    """
    latents = set(g.latents if latents is None else latents)
    for u in g.sort(latents):
        for e in g.incident(u):
            if not (e.kind is EdgeKind.DIRECTED and e.tail == u):
                raise NonExogenousLatent(f"latent {u!r} has non-outgoing edge {e}")
    keep = [n for n in g.nodes if n.name not in latents]
    edges = {e for e in g.edges if e.tail not in latents and e.head not in latents}
    for u in g.sort(latents):
        kids = g.children(u)
        for i, x in enumerate(kids):
            for y in kids[i + 1:]:
                edges.add(Edge.make(x, y, EdgeKind.BIDIRECTED))
    return MixedGraph(keep, edges)


def cluster_nodes(g: MixedGraph, members: Iterable[str], label: str) -> MixedGraph:
    """Collapse ``members`` into one node called ``label``.

    Edges between a member and an outside node are redirected to the cluster
    with kind and orientation kept; member-member edges are dropped.
    """
    members = set(members)
    if not members:
        raise EmptyCluster("cluster needs at least one member")
    for m in members:
        g.node(m)
    if label in g and label not in members:
        raise LabelCollision(f"label {label!r} already names a node outside the cluster")
    first = min(g.index(m) for m in members)
    flags = [g.node(m) for m in members]
    cluster = Node(
        first,
        label,
        latent=all(n.latent for n in flags),
        deterministic=all(n.deterministic for n in flags),
    )
    nodes = [n for n in g.nodes if n.name not in members] + [cluster]
    edges = set()
    for e in g.edges:
        t = label if e.tail in members else e.tail
        h = label if e.head in members else e.head
        if t == label and h == label:
            continue
        edges.add(Edge.make(t, h, e.kind))
    return MixedGraph(nodes, edges)


# -- DSL ----------------------------------------------------------------------

_TOKEN = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<comment>#[^\n]*)|(?P<nl>\n)|(?P<semi>;)"
    r"|(?P<arrow><->|->|--)|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
)
_KEYWORDS = ("latent", "deterministic")
_KINDS = {"->": EdgeKind.DIRECTED, "<->": EdgeKind.BIDIRECTED, "--": EdgeKind.UNDIRECTED}


def _tokenize(text: str):
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise GraphSyntaxError(line, col, "name, edge token, ';' or newline", text[pos])
        kind = m.lastgroup
        if kind == "nl":
            yield ("end", "\n", line, col)
            line += 1
            line_start = m.end()
        elif kind == "semi":
            yield ("end", ";", line, col)
        elif kind in ("name", "arrow"):
            yield (kind, m.group(), line, col)
        pos = m.end()
    yield ("end", "", line, pos - line_start + 1)


def parse_graph(text: str, strict: bool = False) -> MixedGraph:
    """Parse the graph DSL.

    In lenient mode (default) nodes first seen in an edge are created as
    observed, non-deterministic nodes. With ``strict=True`` every node must be
    declared first (bare ``X``, ``latent X`` or ``deterministic X``).
    """
    order: dict[str, None] = {}
    latent: set[str] = set()
    deterministic: set[str] = set()
    edges: dict[Edge, None] = {}

    def use(tok):
        _, name, line, col = tok
        if name not in order:
            if strict:
                raise UnknownNode(f"line {line}, col {col}: undeclared node {name!r}")
            order[name] = None

    stmt: list = []
    for tok in _tokenize(text):
        if tok[0] != "end":
            stmt.append(tok)
            continue
        if not stmt:
            continue
        kinds = [t[0] for t in stmt]
        words = [t[1] for t in stmt]
        reserved = [t for t in stmt if t[0] == "name" and t[1] in _KEYWORDS]
        if reserved and not (kinds == ["name", "name"] and stmt[0] is reserved[0]):
            _, word, line, col = reserved[-1]
            raise GraphSyntaxError(line, col, "node name (keywords are reserved)", word)
        if kinds == ["name"]:
            order.setdefault(words[0])
        elif kinds == ["name", "name"] and words[0] in ("latent", "deterministic"):
            order.setdefault(words[1])
            (latent if words[0] == "latent" else deterministic).add(words[1])
        elif kinds == ["name", "arrow", "name"]:
            use(stmt[0])
            use(stmt[2])
            if words[0] == words[2]:
                raise SelfLoop(f"line {stmt[0][2]}: self loop on {words[0]!r}")
            e = Edge.make(words[0], words[2], _KINDS[words[1]])
            if e in edges:
                raise DuplicateEdge(f"line {stmt[0][2]}: duplicate edge {e}")
            edges[e] = None
        else:
            _raise_statement_error(stmt, kinds)
        stmt = []
    nodes = [Node(i, n, n in latent, n in deterministic) for i, n in enumerate(order)]
    return MixedGraph(nodes, edges)


def _raise_statement_error(stmt, kinds):
    keyword = stmt[0][1] in ("latent", "deterministic")
    for i, (kind, word, line, col) in enumerate(stmt):
        if i == 0:
            want = "name" if kind != "name" else None
        elif i == 1:
            want = None if kind == "arrow" or (keyword and kind == "name") else "edge token"
        elif i == 2:
            want = None if kinds[1] == "arrow" and kind == "name" else (
                "name" if kinds[1] == "arrow" else "';' or newline")
        else:
            want = "';' or newline"
        if want:
            raise GraphSyntaxError(line, col, want, word)
    kind, word, line, col = stmt[-1]
    raise GraphSyntaxError(line, col + len(word), "name")


def render_graph(g: MixedGraph) -> str:
    """Canonical DSL text: node declarations sorted by name, then sorted edges."""
    lines = []
    for n in sorted(g.nodes, key=lambda n: n.name):
        if n.latent:
            lines.append(f"latent {n.name};")
        if n.deterministic:
            lines.append(f"deterministic {n.name};")
        if not (n.latent or n.deterministic):
            lines.append(f"{n.name};")
    lines.extend(f"{e};" for e in sorted(g.edges))
    return "\n".join(lines) + ("\n" if lines else "")
