"""Structural causal models: mechanisms, sampling, exact enumeration and
closed-form moments, plus builders for the six worked examples."""

from __future__ import annotations

import ast
import csv
import io
import itertools
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
from scipy.special import expit

from .expr import JointTable
from .graph import Edge, EdgeKind, MixedGraph, Node, parse_graph, topological_order
from .rng import GENERATOR, CounterStreams

MAX_STATES = 2**21
SINGULAR_TOL = 1e-10


class ScmError(ValueError):
    pass


class BadParameter(ScmError):
    pass


class CyclicUnsolvable(ScmError):
    pass


class NonLinearMechanism(ScmError):
    pass


class NonDiscreteMechanism(ScmError):
    pass


class StateSpaceTooLarge(ScmError):
    pass


# -- linear forms over independent standard normal sources ---------------------


@dataclass(frozen=True)
class LinearForm:
    const: float = 0.0
    coefs: Mapping[str, float] = field(default_factory=dict)

    def __add__(self, other):
        other = _lin(other)
        coefs = dict(self.coefs)
        for k, v in other.coefs.items():
            coefs[k] = coefs.get(k, 0.0) + v
        return LinearForm(self.const + other.const, coefs)

    __radd__ = __add__

    def __neg__(self):
        return LinearForm(-self.const, {k: -v for k, v in self.coefs.items()})

    def __sub__(self, other):
        return self + (-_lin(other))

    def __rsub__(self, other):
        return _lin(other) + (-self)

    def __mul__(self, other):
        if isinstance(other, LinearForm):
            if other.coefs and self.coefs:
                raise NonLinearMechanism("product of two random terms")
            if not other.coefs:
                other = other.const
            else:
                return other * self.const
        return LinearForm(self.const * other, {k: v * other for k, v in self.coefs.items()})

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, LinearForm):
            if other.coefs:
                raise NonLinearMechanism("division by a random term")
            other = other.const
        return self * (1.0 / other)

    def __mod__(self, other):
        raise NonLinearMechanism("modulo is not linear")

    __rmod__ = __mod__


def _lin(v) -> LinearForm:
    return v if isinstance(v, LinearForm) else LinearForm(float(v))


# -- mechanisms ---------------------------------------------------------------


class Mechanism:
    """One structural assignment. Block mechanisms assign several nodes."""


    def parents(self) -> tuple[str, ...]:
        return ()

    def parents_of(self, node: str) -> tuple[str, ...]:
        return self.parents()

    def sample(self, node: str, env: dict, rng: CounterStreams, start: int, stop: int) -> dict:
        raise NotImplementedError

    def domain(self, node: str, parent_domains: Mapping[str, Sequence]) -> tuple:
        raise NonDiscreteMechanism(f"{type(self).__name__} for {node} is not finite-discrete")

    def distribution(self, node: str, parent_values: Mapping[str, Any]) -> dict:
        raise NonDiscreteMechanism(f"{type(self).__name__} for {node} is not finite-discrete")

    def linear(self, node: str, forms: Mapping[str, LinearForm]) -> dict[str, LinearForm]:
        raise NonLinearMechanism(f"{type(self).__name__} for {node} is not linear-Gaussian")


@dataclass(frozen=True)
class ExogGaussian(Mechanism):
    mean: float = 0.0
    variance: float = 1.0

    def __post_init__(self):
        if self.variance < 0:
            raise BadParameter("variance must be non-negative")

    def sample(self, node, env, rng, start, stop):
        return {node: self.mean + math.sqrt(self.variance) * rng.normal(node, start, stop)}

    def linear(self, node, forms):
        return {node: LinearForm(self.mean, {node: math.sqrt(self.variance)})}


@dataclass(frozen=True)
class ExogBernoulli(Mechanism):
    p: float

    def __post_init__(self):
        if not 0 <= self.p <= 1:
            raise BadParameter("p must lie in [0, 1]")

    def sample(self, node, env, rng, start, stop):
        return {node: (rng.uniform(node, start, stop) < self.p).astype(np.int64)}

    def domain(self, node, parent_domains):
        return (0, 1)

    def distribution(self, node, parent_values):
        return {0: 1.0 - self.p, 1: self.p}


@dataclass(frozen=True)
class PointMass(Mechanism):
    """Constant assignment; used for interventions."""

    value: Any

    def sample(self, node, env, rng, start, stop):
        return {node: np.full(stop - start, self.value)}

    def domain(self, node, parent_domains):
        return (self.value,)

    def distribution(self, node, parent_values):
        return {self.value: 1.0}

    def linear(self, node, forms):
        return {node: LinearForm(float(self.value))}


def _psd_factor(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(cov)
        if w.min() < -1e-10:
            raise BadParameter("covariance matrix is not positive semi-definite") from None
        return v * np.sqrt(np.clip(w, 0, None))


@dataclass(frozen=True)
class MvNormalBlock(Mechanism):
    """Jointly Gaussian exogenous block with no parents."""

    outputs: tuple[str, ...]
    mean: tuple[float, ...]
    cov: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        cov = np.asarray(self.cov, dtype=float)
        k = len(self.outputs)
        if cov.shape != (k, k) or len(self.mean) != k:
            raise BadParameter("mean/covariance shape does not match block members")
        if not np.allclose(cov, cov.T, atol=1e-12):
            raise BadParameter("covariance matrix must be symmetric")
        _psd_factor(cov)

    @property
    def factor(self) -> np.ndarray:
        return _psd_factor(np.asarray(self.cov, dtype=float))

    def sample(self, node, env, rng, start, stop):
        z = np.stack([rng.normal(m, start, stop) for m in self.outputs])
        x = np.asarray(self.mean)[:, None] + self.factor @ z
        return dict(zip(self.outputs, x))

    def linear(self, node, forms):
        L = self.factor
        return {
            m: LinearForm(self.mean[i], {f"{self.outputs[j]}": L[i, j] for j in range(len(self.outputs))})
            for i, m in enumerate(self.outputs)
        }


@dataclass(frozen=True)
class LinearEq(Mechanism):
    intercept: float
    coefficients: Mapping[str, float]
    noise: str | None = None

    def parents(self):
        return tuple(self.coefficients) + ((self.noise,) if self.noise else ())

    def _value(self, env):
        out = self.intercept + sum(c * env[p] for p, c in self.coefficients.items())
        return out + env[self.noise] if self.noise else out

    def sample(self, node, env, rng, start, stop):
        return {node: np.broadcast_to(self._value(env), (stop - start,)).astype(float)}

    def linear(self, node, forms):
        return {node: _lin(self._value(forms))}


@dataclass(frozen=True)
class LogisticBernoulli(Mechanism):
    intercept: float
    coefficients: Mapping[str, float]

    def parents(self):
        return tuple(self.coefficients)

    def probability(self, env):
        return expit(self.intercept + sum(c * env[p] for p, c in self.coefficients.items()))

    def sample(self, node, env, rng, start, stop):
        return {node: (rng.uniform(node, start, stop) < self.probability(env)).astype(np.int64)}

    def domain(self, node, parent_domains):
        return (0, 1)

    def distribution(self, node, parent_values):
        p = float(self.probability(parent_values))
        return {0: 1.0 - p, 1: p}


_ALLOWED_AST = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Name, ast.Constant, ast.Load,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Mod, ast.USub, ast.UAdd,
)


@dataclass(frozen=True)
class DeterministicFn(Mechanism):
    """Arithmetic assignment such as ``"C2 + C3"`` or ``"(U1 + U2) mod 2"``."""

    formula: str

    def __post_init__(self):
        self._tree()

    def _tree(self) -> ast.Expression:
        src = re.sub(r"\bmod\b", "%", self.formula)
        try:
            tree = ast.parse(src, mode="eval")
        except SyntaxError as e:
            raise BadParameter(f"cannot parse formula {self.formula!r}: {e.msg}") from None
        for n in ast.walk(tree):
            if not isinstance(n, _ALLOWED_AST):
                raise BadParameter(f"unsupported syntax {type(n).__name__} in {self.formula!r}")
        return tree

    def parents(self):
        names = [n.id for n in ast.walk(self._tree()) if isinstance(n, ast.Name)]
        return tuple(dict.fromkeys(names))

    def evaluate(self, env):
        def ev(n):
            if isinstance(n, ast.Expression):
                return ev(n.body)
            if isinstance(n, ast.Constant):
                return n.value
            if isinstance(n, ast.Name):
                return env[n.id]
            if isinstance(n, ast.UnaryOp):
                v = ev(n.operand)
                return -v if isinstance(n.op, ast.USub) else v
            a, b = ev(n.left), ev(n.right)
            op = type(n.op)
            if op is ast.Add:
                return a + b
            if op is ast.Sub:
                return a - b
            if op is ast.Mult:
                return a * b
            if op is ast.Div:
                return a / b
            return a % b

        return ev(self._tree())

    def sample(self, node, env, rng, start, stop):
        return {node: np.broadcast_to(self.evaluate(env), (stop - start,)).copy()}

    def domain(self, node, parent_domains):
        ps = self.parents()
        vals = {
            self.evaluate(dict(zip(ps, combo)))
            for combo in itertools.product(*(parent_domains[p] for p in ps))
        }
        return tuple(sorted(vals))

    def distribution(self, node, parent_values):
        return {self.evaluate(parent_values): 1.0}

    def linear(self, node, forms):
        return {node: _lin(self.evaluate(forms))}


@dataclass(frozen=True)
class TableCpd(Mechanism):
    """Discrete CPD; ``table[parent values..., value]`` with values 0..k-1."""

    parent_names: tuple[str, ...]
    table: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float)
        object.__setattr__(self, "table", t)
        object.__setattr__(self, "parent_names", tuple(self.parent_names))
        if t.ndim != len(self.parent_names) + 1:
            raise BadParameter("table needs one axis per parent plus one for the value")
        if np.any(t < 0) or not np.allclose(t.sum(axis=-1), 1.0, atol=1e-12, rtol=0):
            raise BadParameter("CPD rows must be non-negative and sum to 1")

    def parents(self):
        return self.parent_names

    @property
    def card(self) -> int:
        return self.table.shape[-1]

    def sample(self, node, env, rng, start, stop):
        idx = tuple(np.asarray(env[p], dtype=np.int64) for p in self.parent_names)
        rows = self.table[idx] if idx else np.broadcast_to(self.table, (stop - start, self.card))
        rows = np.broadcast_to(rows, (stop - start, self.card))
        u = rng.uniform(node, start, stop)
        cum = np.cumsum(rows, axis=1)
        cum[:, -1] = 1.0
        return {node: (u[:, None] > cum).sum(axis=1).astype(np.int64)}

    def domain(self, node, parent_domains):
        return tuple(range(self.card))

    def distribution(self, node, parent_values):
        row = self.table[tuple(int(parent_values[p]) for p in self.parent_names)]
        return {k: float(row[k]) for k in range(self.card)}


def solve_cyclic(B, intercepts, noise) -> np.ndarray:
    """Unique solution ``x = B x + intercepts + noise`` of a linear cycle.

    ``noise`` may be a vector or an ``(n, k)`` array of draws.
    """
    B = np.asarray(B, dtype=float)
    M = np.eye(B.shape[0]) - B
    if np.linalg.svd(M, compute_uv=False).min() < SINGULAR_TOL:
        raise CyclicUnsolvable("I - B is singular")
    rhs = np.asarray(intercepts, dtype=float) + np.asarray(noise, dtype=float)
    return np.linalg.solve(M, rhs.T).T


def condition_number(B) -> float:
    B = np.asarray(B, dtype=float)
    return float(np.linalg.cond(np.eye(B.shape[0]) - B))


@dataclass(frozen=True)
class CyclicLinearBlock(Mechanism):
    """Simultaneous linear equations ``x = B x + intercepts + noise``."""

    outputs: tuple[str, ...]
    B: tuple[tuple[float, ...], ...]
    noise: tuple[str, ...]
    intercepts: tuple[float, ...] | None = None

    def __post_init__(self):
        k = len(self.outputs)
        B = np.asarray(self.B, dtype=float)
        if B.shape != (k, k) or len(self.noise) != k:
            raise BadParameter("coefficient matrix / noise do not match block members")
        solve_cyclic(B, np.zeros(k), np.zeros(k))

    def parents(self):
        return tuple(self.noise)

    def parents_of(self, node):
        i = self.outputs.index(node)
        row = np.asarray(self.B, dtype=float)[i]
        return tuple(self.outputs[j] for j in range(len(row)) if row[j] != 0) + (self.noise[i],)

    def _intercepts(self):
        return np.zeros(len(self.outputs)) if self.intercepts is None else np.asarray(self.intercepts, float)

    def sample(self, node, env, rng, start, stop):
        eps = np.stack([np.asarray(env[e], dtype=float) for e in self.noise], axis=1)
        x = solve_cyclic(self.B, self._intercepts(), eps)
        return {m: x[:, i] for i, m in enumerate(self.outputs)}

    def linear(self, node, forms):
        inv = np.linalg.inv(np.eye(len(self.outputs)) - np.asarray(self.B, dtype=float))
        rhs = [_lin(c) + forms[e] for c, e in zip(self._intercepts(), self.noise)]
        out = {}
        for i, m in enumerate(self.outputs):
            acc = LinearForm()
            for j in range(len(self.outputs)):
                acc = acc + rhs[j] * float(inv[i, j])
            out[m] = acc
        return out


@dataclass(frozen=True)
class Consistency(Mechanism):
    """Observed outcome equals the potential outcome of the received arm."""

    treatment: str
    arms: Mapping[Any, str]

    def parents(self):
        return (self.treatment, *self.arms.values())

    def sample(self, node, env, rng, start, stop):
        a = np.asarray(env[self.treatment])
        out = np.zeros(stop - start, dtype=np.result_type(*(np.asarray(env[c]).dtype for c in self.arms.values())))
        for value, col in self.arms.items():
            out = np.where(a == value, env[col], out)
        return {node: out}

    def domain(self, node, parent_domains):
        vals = set()
        for col in self.arms.values():
            vals.update(parent_domains[col])
        return tuple(sorted(vals))

    def distribution(self, node, parent_values):
        return {parent_values[self.arms[parent_values[self.treatment]]]: 1.0}

    def linear(self, node, forms):
        a = forms[self.treatment]
        if a.coefs:
            raise NonLinearMechanism("observed outcome under a random treatment is a mixture")
        return {node: forms[self.arms[a.const]]}


# -- the model ------------------------------------------------------------------


@dataclass(frozen=True)
class Scm:
    """Mechanisms attached to the nodes of ``graph``.

    With ``potential_outcomes`` set, each arm ``a`` gets a hidden node named
    ``f"{outcome}{a}"`` and the outcome node is composed from them by
    consistency.
    """

    graph: MixedGraph
    mechanisms: Mapping[str, Mechanism]
    treatment: str | None = None
    outcome: str | None = None
    potential_outcomes: Mapping[Any, Mechanism] | None = None

    def __post_init__(self):
        mech = dict(self.mechanisms)
        if self.potential_outcomes:
            if not (self.treatment and self.outcome):
                raise ScmError("potential outcomes need a declared treatment and outcome")
            allowed = set(self.graph.parents(self.outcome))
            for a, m in self.potential_outcomes.items():
                extra = set(m.parents()) - allowed
                if extra:
                    raise ScmError(f"potential outcome {a} reads {sorted(extra)}, not parents of {self.outcome}")
            if self.outcome not in mech:
                mech[self.outcome] = Consistency(self.treatment, {a: self.po_name(a) for a in self.potential_outcomes})
        missing = [n for n in self.graph.names if n not in mech]
        if missing:
            raise ScmError(f"no mechanism for {missing}")
        for node, m in mech.items():
            if node not in self.graph:
                raise ScmError(f"mechanism for unknown node {node!r}")
            if isinstance(m, Consistency):
                continue
            allowed = set(self.graph.parents(node))
            if isinstance(m, MvNormalBlock):
                continue
            extra = set(m.parents_of(node)) - allowed
            if extra:
                raise ScmError(f"mechanism of {node} reads {sorted(extra)} which are not its parents")
        object.__setattr__(self, "mechanisms", mech)

    def po_name(self, arm) -> str:
        return f"{self.outcome}{arm}"

    @property
    def po_names(self) -> list[str]:
        return [self.po_name(a) for a in (self.potential_outcomes or {})]

    def units(self) -> list[tuple[tuple[str, ...], Mechanism]]:
        """Mechanisms in evaluation order as (assigned nodes, mechanism)."""
        units: dict[int, tuple[list[str], Mechanism]] = {}
        for a, m in (self.potential_outcomes or {}).items():
            units[id(m)] = ([self.po_name(a)], m)
        for node in self.graph.names:
            m = self.mechanisms[node]
            units.setdefault(id(m), ([], m))[0].append(node)
        pending = [(tuple(nodes), m) for nodes, m in units.values()]
        done: set[str] = set()
        ordered = []
        while pending:
            for i, (nodes, m) in enumerate(pending):
                needs = set(m.parents()) - set(nodes)
                if needs <= done:
                    ordered.append((nodes, m))
                    done.update(nodes)
                    del pending[i]
                    break
            else:
                raise ScmError(f"mechanism dependencies are cyclic: {[n for n, _ in pending]}")
        return ordered

    def intervene(self, values: Mapping[str, Any]) -> "Scm":
        """do(values): point-mass mechanisms and a mutilated graph."""
        mech = dict(self.mechanisms)
        for node, v in values.items():
            self.graph.node(node)
            if isinstance(mech[node], (MvNormalBlock, CyclicLinearBlock)):
                raise ScmError(f"cannot intervene on block member {node}")
            mech[node] = PointMass(v)
        g = self.graph
        cut = [e for e in g.edges if not (e.kind is EdgeKind.DIRECTED and e.head in values)]
        return Scm(MixedGraph(g.nodes, cut), mech, self.treatment, self.outcome, self.potential_outcomes)

    @property
    def observed(self) -> list[str]:
        return self.graph.observed


# -- sampling -------------------------------------------------------------------


@dataclass
class Dataset:
    columns: dict[str, np.ndarray]
    seed: int
    n: int
    po_columns: tuple[str, ...] = ()
    latent: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        if name in self.columns:
            return self.columns[name]
        return self.latent[name]

    def __contains__(self, name: str) -> bool:
        return name in self.columns or name in self.latent

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    def to_csv(self, path: str | Path | None = None, include_po: bool = False) -> str:
        cols = [c for c in self.columns if include_po or c not in self.po_columns]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        arrays = [self.columns[c] for c in cols]
        for i in range(self.n):
            w.writerow([_fmt_cell(a[i]) for a in arrays])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path: str | Path, seed: int = 0) -> "Dataset":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        cols = {}
        for i, name in enumerate(header):
            raw = [r[i] for r in body]
            try:
                cols[name] = np.array([int(v) for v in raw], dtype=np.int64)
            except ValueError:
                cols[name] = np.array([float(v) for v in raw])
        po = tuple(c for c in header if re.fullmatch(r"Y\d+", c))
        return cls(cols, seed, len(body), po)


def _fmt_cell(v) -> str:
    if isinstance(v, (np.integer, int)):
        return str(int(v))
    return repr(float(v))


def sample(s: Scm, n: int, seed: int, start: int = 0) -> Dataset:
    """Draw rows ``start .. start+n-1``; each row depends only on (seed, row)."""
    if n < 1:
        raise BadParameter("n must be at least 1")
    rng = CounterStreams(seed)
    stop = start + n
    env: dict[str, np.ndarray] = {}
    for nodes, m in s.units():
        out = m.sample(nodes[0], env, rng, start, stop)
        for k in nodes:
            env[k] = out[k]
    observed = [v for v in s.graph.names if not s.graph.node(v).latent]
    cols = {v: env[v] for v in observed}
    for c in s.po_names:
        cols[c] = env[c]
    latent = {v: env[v] for v in s.graph.latents}
    return Dataset(cols, seed, n, tuple(s.po_names), latent, {"generator": GENERATOR, "start": start})


# -- exact enumeration --------------------------------------------------------


def exact_joint(s: Scm, variables: Sequence[str] | None = None) -> JointTable:
    """Joint distribution of ``variables`` by enumerating every configuration.

    Defaults to the observed graph nodes. Works when every mechanism is
    finite-discrete.
    """
    names: list[str] = []
    domains: list[tuple] = []
    joint = np.ones(())
    for nodes, m in s.units():
        if len(nodes) != 1:
            raise NonDiscreteMechanism(f"block mechanism over {nodes} is not finite-discrete")
        node = nodes[0]
        ps = [p for p in names if p in set(m.parents())]
        dom = m.domain(node, {p: domains[names.index(p)] for p in ps})
        size = joint.size * len(dom)
        if size > MAX_STATES:
            raise StateSpaceTooLarge(f"state space exceeds {MAX_STATES} cells")
        shape = [len(domains[names.index(p)]) if p in ps else 1 for p in names] + [len(dom)]
        cond = np.zeros(shape)
        pidx = [names.index(p) for p in ps]
        for combo in itertools.product(*(range(len(domains[i])) for i in pidx)):
            pv = {p: domains[i][k] for p, i, k in zip(ps, pidx, combo)}
            at = [0] * len(names)
            for i, k in zip(pidx, combo):
                at[i] = k
            for value, prob in m.distribution(node, pv).items():
                cond[tuple(at) + (dom.index(value),)] += prob
        joint = joint[..., None] * cond
        names.append(node)
        domains.append(dom)
    want = list(variables) if variables is not None else s.observed
    for v in want:
        if v not in names:
            raise ScmError(f"unknown variable {v!r}")
    drop = tuple(i for i, v in enumerate(names) if v not in want)
    marg = joint.sum(axis=drop)
    kept = [v for v in names if v in want]
    marg = np.transpose(marg, [kept.index(v) for v in want])
    return JointTable(tuple(want), tuple(domains[names.index(v)] for v in want), marg / marg.sum())


# -- Gaussian moments ---------------------------------------------------------


def linear_forms(s: Scm) -> dict[str, LinearForm]:
    """Each node that is linear in independent Gaussian sources, as a LinearForm."""
    forms: dict[str, LinearForm] = {}
    for nodes, m in s.units():
        if not set(m.parents()) - set(nodes) <= set(forms):
            continue
        try:
            forms.update(m.linear(nodes[0], forms))
        except NonLinearMechanism:
            continue
    return forms


@dataclass(frozen=True)
class Covariance:
    names: tuple[str, ...]
    matrix: np.ndarray

    def __call__(self, a: str, b: str) -> float:
        return float(self.matrix[self.names.index(a), self.names.index(b)])

    def sub(self, names: Sequence[str]) -> np.ndarray:
        idx = [self.names.index(n) for n in names]
        return self.matrix[np.ix_(idx, idx)]


def implied_covariance(s: Scm, variables: Sequence[str] | None = None) -> Covariance:
    """Exact covariance of linear-Gaussian nodes by linear propagation.

    Defaults to every observed node that is linear in Gaussian sources.
    """
    forms = linear_forms(s)
    if variables is None:
        variables = [v for v in s.graph.names if v in forms and not s.graph.node(v).latent]
    for v in variables:
        if v not in forms:
            raise NonLinearMechanism(f"{v} is not a linear function of Gaussian terms")
    sources = sorted({k for v in variables for k in forms[v].coefs})
    L = np.array([[forms[v].coefs.get(k, 0.0) for k in sources] for v in variables]).reshape(len(variables), len(sources))
    return Covariance(tuple(variables), L @ L.T)


def a_rho(rho: float) -> float:
    """Off-diagonal entry that makes the 4-cycle covariance Markov to its graph."""
    if not 0 < rho < 1:
        raise BadParameter("rho must lie in (0, 1)")
    return (math.sqrt(8 * rho**2 + 1) - 1) / 2


def example1_covariance(rho: float) -> np.ndarray:
    a = a_rho(rho)
    return np.array([
        [1, rho, rho, a],
        [rho, 1, a, rho],
        [rho, a, 1, rho],
        [a, rho, rho, 1],
    ], dtype=float)


# -- ground-truth effects -----------------------------------------------------


@dataclass(frozen=True)
class Effect:
    mean: float
    distribution: dict | None
    se: float
    method: str


def true_effect(s: Scm, a, outcome: str | None = None, n: int = 100_000, seed: int = 0) -> Effect:
    """Distribution or mean of the outcome under do(treatment = a)."""
    y = outcome or s.outcome
    if s.treatment is None or y is None:
        raise ScmError("SCM needs a declared treatment and outcome")
    mutilated = s.intervene({s.treatment: a})
    try:
        j = exact_joint(mutilated, [y])
    except (NonDiscreteMechanism, StateSpaceTooLarge):
        pass
    else:
        dist = {v: j.prob({y: v}) for v in j.domain(y)}
        return Effect(sum(float(v) * p for v, p in dist.items()), dist, 0.0, "exact")
    forms = linear_forms(mutilated)
    if y in forms:
        return Effect(forms[y].const, None, 0.0, "analytic")
    d = sample(mutilated, n, seed)
    vals = d[y].astype(float)
    return Effect(float(vals.mean()), None, float(vals.std(ddof=1) / math.sqrt(n)), "monte-carlo")


def potential_outcome_mean(s: Scm, a, n: int = 100_000, seed: int = 0) -> Effect:
    """E[Y(a)] straight from the potential-outcome mechanism (no mutilation)."""
    if not s.potential_outcomes:
        raise ScmError("SCM has no potential-outcome mechanisms")
    name = s.po_name(a)
    try:
        j = exact_joint(s, [name])
    except (NonDiscreteMechanism, StateSpaceTooLarge):
        pass
    else:
        dist = {v: j.prob({name: v}) for v in j.domain(name)}
        return Effect(sum(float(v) * p for v, p in dist.items()), dist, 0.0, "exact")
    forms = linear_forms(s)
    if name in forms:
        return Effect(forms[name].const, None, 0.0, "analytic")
    d = sample(s, n, seed)
    vals = d[name].astype(float)
    return Effect(float(vals.mean()), None, float(vals.std(ddof=1) / math.sqrt(n)), "monte-carlo")


def true_ate(s: Scm) -> float:
    return true_effect(s, 1).mean - true_effect(s, 0).mean


# -- example builders -----------------------------------------------------------

FIGURES = {
    "1a": "C1 -- C2; C1 -- C3; C2 -- C4; C3 -- C4; C1 -> A; C2 -> A; C1 -> Y; C2 -> Y; A -> Y",
    "1b": "C1 -> C2; C2 -> C1; C1 -> A; C2 -> A; C1 -> Y; C2 -> Y; A -> Y",
    "1c": (
        "deterministic C1; C2; C3; deterministic C4; C2 -> C1; C3 -> C1; C2 -> C4; C3 -> C4; "
        "C1 -> A; C4 -> Y; A -> Y"
    ),
    "1d": "C -> A; C -> Y; A -> Y",
    "2a": "latent U1; latent U2; U1 -> A; U1 -> C2; U2 -> C2; U2 -> Y; A -> Y",
    "2b": (
        "latent U1; latent U2; C1 -> C2; C2 -> A; A -> Y; "
        "U1 -> C1; U1 -> A; U2 -> C1; U2 -> Y"
    ),
    "2c": (
        "latent U1; latent U2; latent U3; latent U4; C3 -> A; A -> Z; Z -> Y; C1 -> C2; C2 -> C3; "
        "U1 -> C1; U1 -> Z; U2 -> C2; U2 -> C1; U3 -> C3; U3 -> A; U4 -> A; U4 -> Y"
    ),
    "3a": "A -> Y; C -> A; C -> Y",
    "3b": "latent U; A -> Z; Z -> Y; U -> A; U -> Y",
    "3c": "latent U; A -> Z; Z -> Y; U -> A; U -> Y; C -> A; C -> Z",
}


def figure(name: str) -> MixedGraph:
    return parse_graph(FIGURES[name])


def _with_noise(g: MixedGraph, edges: Iterable[tuple[str, str]]) -> MixedGraph:
    nodes = list(g.nodes)
    extra = {}
    for u, _ in edges:
        extra.setdefault(u, Node(len(nodes) + len(extra), u, latent=True))
    return MixedGraph(nodes + list(extra.values()), set(g.edges) | {Edge(u, v, EdgeKind.DIRECTED) for u, v in edges})


def _po_linear(covariates: dict[str, float]) -> dict:
    return {
        0: LinearEq(4.0, covariates, noise="E0"),
        1: LinearEq(2.0, covariates, noise="E1"),
    }


def random_binary_scm(g: MixedGraph, seed: int, treatment="A", outcome="Y", lo=0.05, hi=0.95) -> Scm:
    """Binary SCM on ``g`` with seeded random CPDs.

    Each CPD row is drawn uniformly from the simplex, clipped to [lo, hi]
    and renormalized, so every conditional probability stays positive.
    Latent nodes become exogenous Bernoulli coins.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    mech: dict[str, Mechanism] = {}
    for v in topological_order(g):
        ps = tuple(g.parents(v))
        if not ps:
            p = float(np.clip(rng.dirichlet([1.0, 1.0])[1], lo, hi))
            mech[v] = ExogBernoulli(p) if g.node(v).latent else TableCpd((), np.array([1 - p, p]))
            continue
        rows = rng.dirichlet([1.0, 1.0], size=(2,) * len(ps))
        rows = np.clip(rows, lo, hi)
        rows /= rows.sum(axis=-1, keepdims=True)
        mech[v] = TableCpd(ps, rows)
    return Scm(g, mech, treatment, outcome)


@dataclass
class Example:
    scm: Scm
    graph: MixedGraph
    meta: dict


def build_example(k: int, rho: float = 0.3, param_seed: int = 0, cpds: Mapping[str, Mechanism] | None = None) -> Example:
    """SCM, figure graph and metadata for worked example ``k`` (1..6)."""
    if k == 1:
        cov = example1_covariance(rho)
        g = _with_noise(figure("1a"), [("E0", "Y"), ("E1", "Y")])
        block = MvNormalBlock(("C1", "C2", "C3", "C4"), (0.0,) * 4, tuple(map(tuple, cov)))
        mech = {c: block for c in block.outputs}
        mech.update(A=LogisticBernoulli(0.0, {"C1": 1.0, "C2": 1.0}), E0=ExogGaussian(), E1=ExogGaussian())
        s = Scm(g, mech, "A", "Y", _po_linear({"C1": 1.0, "C2": 1.0}))
        meta = {"rho": rho, "a_rho": a_rho(rho), "adjustment_set": ["C1", "C2", "C3", "C4"]}
        fig = figure("1a")
    elif k == 2:
        B = ((0.0, 0.1), (0.1, 0.0))
        g = _with_noise(figure("1b"), [("E2", "C1"), ("E3", "C2"), ("E0", "Y"), ("E1", "Y")])
        block = CyclicLinearBlock(("C1", "C2"), B, ("E2", "E3"))
        mech = {"C1": block, "C2": block}
        mech.update({e: ExogGaussian() for e in ("E0", "E1", "E2", "E3")})
        mech["A"] = LogisticBernoulli(0.0, {"C1": 1.0, "C2": 1.0})
        s = Scm(g, mech, "A", "Y", _po_linear({"C1": 1.0, "C2": 1.0}))
        meta = {"cyclic_condition_number": condition_number(B), "adjustment_set": ["C1", "C2"]}
        fig = figure("1b")
    elif k == 3:
        g = _with_noise(figure("1c"), [("E0", "Y"), ("E1", "Y")])
        mech = {
            "C2": ExogGaussian(), "C3": ExogGaussian(), "E0": ExogGaussian(), "E1": ExogGaussian(),
            "C1": DeterministicFn("C2 + C3"), "C4": DeterministicFn("C2 - C3"),
            "A": LogisticBernoulli(0.0, {"C1": 1.0}),
        }
        s = Scm(g, mech, "A", "Y", _po_linear({"C4": 1.0}))
        meta = {"adjustment_set": ["C2", "C3"]}
        fig = figure("1c")
    elif k == 4:
        fig = parse_graph("latent U1; latent U2; C; U1 -> A; U1 -> C; U2 -> C; U2 -> Y; A -> Y")
        mech = {
            "U1": ExogBernoulli(0.6),
            "U2": ExogBernoulli(0.4),
            "C": DeterministicFn("(U1 + U2) mod 2"),
            "A": TableCpd(("U1",), np.array([[0.9, 0.1], [0.1, 0.9]])),
        }
        po = {
            0: TableCpd(("U2",), np.array([[0.9, 0.1], [0.1, 0.9]])),
            1: TableCpd(("U2",), np.array([[0.1, 0.9], [0.9, 0.1]])),
        }
        s = Scm(fig, mech, "A", "Y", po)
        meta = {"printed_ate": -0.16, "printed_adjusted": -0.06}
    elif k in (5, 6):
        fig = figure("2b" if k == 5 else "2c")
        if cpds is not None:
            s = Scm(fig, dict(cpds), "A", "Y")
        else:
            s = random_binary_scm(fig, param_seed)
        meta = {"param_seed": param_seed, "trapdoor": "C2"}
    else:
        raise BadParameter("example number must be in 1..6")
    meta = {"example": k, **meta, "true_ate": true_ate(s)}
    return Example(s, fig, meta)


def write_metadata(path: str | Path, d: Dataset, meta: Mapping) -> None:
    info = {**meta, "seed": d.seed, "n": d.n, "generator": GENERATOR}
    Path(path).write_text(json.dumps(info, indent=2, sort_keys=True) + "\n")
