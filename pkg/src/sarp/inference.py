"""Pairwise binary Markov networks over scene-graph instances.

Marginals come from damped flooding sum-product (compiled kernel when built)
and, for small networks, from brute-force enumeration used as the oracle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from . import kernels
from .corpus import PotentialTable
from .scenegraph import QUERY_DUP_ID, QUERY_ID, GlobalSceneGraph

ANCHOR_TABLE = PotentialTable(p11=0.45, p00=0.45, p01=0.05, p10=0.05)
EXACT_MAX_NODES = 20
# any change at all keeps forest sweeps going
FOREST_TOLERANCE = float(np.finfo(float).tiny)


@dataclass(frozen=True)
class BpConfig:
    max_iterations: int = 100
    tolerance: float = 1e-6
    damping: float = 0.5

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError("damping must lie in [0, 1)")


@dataclass
class Marginals:
    p1: np.ndarray
    converged: bool = True
    iterations: int = 0

    def __getitem__(self, node):
        return float(self.p1[node])

    def __len__(self):
        return len(self.p1)


@dataclass
class PairwiseMarkovNetwork:
    """Binary variables 0..n-1; ``tables[e][x_i, x_j]`` for edge ``edges[e] = (i, j)``, i < j."""

    n_nodes: int
    edges: list[tuple[int, int]] = field(default_factory=list)
    tables: list[np.ndarray] = field(default_factory=list)
    labels: Optional[list[str]] = None

    def __post_init__(self):
        index = {}
        for e, ((i, j), t) in enumerate(zip(self.edges, self.tables)):
            if i == j:
                raise ValueError(f"self edge on node {i}")
            if (i, j) in index or (j, i) in index:
                raise ValueError(f"duplicate edge {(i, j)}; combine tables first")
            if np.shape(t) != (2, 2) or np.min(t) < 0:
                raise ValueError(f"edge {(i, j)}: table must be a non-negative 2x2 array")
            index[(i, j)] = e
        self._compiled = None

    @classmethod
    def from_pairs(cls, n_nodes, pairs, labels=None):
        """Build from ``(i, j, 2x2 table)`` triples, multiplying tables that
        share a node pair and rescaling the result to max entry 1."""
        combined: dict[tuple[int, int], np.ndarray] = {}
        order = []
        for i, j, t in pairs:
            t = np.asarray(t, dtype=float)
            if i > j:
                i, j, t = j, i, t.T
            if (i, j) in combined:
                prod = combined[(i, j)] * t
                combined[(i, j)] = prod / prod.max() if prod.max() > 0 else prod
            else:
                combined[(i, j)] = t.copy()
                order.append((i, j))
        return cls(n_nodes, order, [combined[k] for k in order], labels)

    @property
    def is_forest(self) -> bool:
        parent = list(range(self.n_nodes))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for i, j in self.edges:
            ri, rj = find(i), find(j)
            if ri == rj:
                return False
            parent[ri] = rj
        return True

    def neighbours(self, node) -> list[int]:
        return [j if i == node else i for i, j in self.edges if node in (i, j)]

    def compiled(self):
        """Directed-message arrays for the flooding kernel (cached)."""
        if self._compiled is None:
            E = len(self.edges)
            src = np.empty(2 * E, dtype=np.int64)
            dst = np.empty(2 * E, dtype=np.int64)
            tabs = np.empty((2 * E, 2, 2))
            for e, ((i, j), t) in enumerate(zip(self.edges, self.tables)):
                src[2 * e], dst[2 * e], tabs[2 * e] = i, j, t
                src[2 * e + 1], dst[2 * e + 1], tabs[2 * e + 1] = j, i, np.asarray(t).T
            order = np.argsort(dst, kind="stable")
            counts = np.bincount(dst, minlength=self.n_nodes)
            in_ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
            self._compiled = (src, dst, np.ascontiguousarray(tabs), in_ptr,
                              order.astype(np.int64))
        return self._compiled

    def scaled(self, factor) -> "PairwiseMarkovNetwork":
        return PairwiseMarkovNetwork(self.n_nodes, list(self.edges),
                                     [np.asarray(t) * factor for t in self.tables], self.labels)

    def to_dict(self) -> dict:
        return {
            "n_nodes": self.n_nodes,
            "labels": self.labels,
            "edges": [{"i": i, "j": j, "table": np.asarray(t).tolist()}
                      for (i, j), t in zip(self.edges, self.tables)],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def build_network(graph: GlobalSceneGraph, potentials) -> PairwiseMarkovNetwork:
    """One node per graph instance, one edge per related instance pair.

    ``potentials`` aligns with ``graph.relations``; the entry for the Q-Q'
    anchor relation is ignored and replaced by ``ANCHOR_TABLE``.
    """
    potentials = list(potentials)
    if len(potentials) != len(graph.relations):
        raise ValueError(
            f"{len(potentials)} potential tables for {len(graph.relations)} relations")
    pairs = []
    for rel, table in zip(graph.relations, potentials):
        if {rel.subject_id, rel.object_id} == {QUERY_ID, QUERY_DUP_ID}:
            table = ANCHOR_TABLE
        mat = table.as_matrix() if isinstance(table, PotentialTable) else np.asarray(table)
        pairs.append((rel.subject_id, rel.object_id, mat))
    return PairwiseMarkovNetwork.from_pairs(len(graph.objects), pairs,
                                            [o.label for o in graph.objects])


def _unary(net, evidence):
    unary = np.ones((net.n_nodes, 2))
    for node, value in (evidence or {}).items():
        if value not in (0, 1):
            raise ValueError(f"evidence for node {node} must be 0 or 1")
        unary[node] = (1.0, 0.0) if value == 0 else (0.0, 1.0)
    return unary


def exact_marginals(net: PairwiseMarkovNetwork, evidence=None) -> Marginals:
    """P(X_i = 1 | evidence) by summing the product of edge tables over every
    joint assignment. Refuses networks above ``EXACT_MAX_NODES`` nodes."""
    n = net.n_nodes
    if n > EXACT_MAX_NODES:
        raise ValueError(f"exact enumeration refused: {n} nodes > {EXACT_MAX_NODES}")
    codes = np.arange(2 ** n, dtype=np.int64)
    bits = ((codes[:, None] >> np.arange(n)) & 1).astype(np.intp)
    logw = np.zeros(len(codes))
    with np.errstate(divide="ignore"):
        for (i, j), t in zip(net.edges, net.tables):
            logw += np.log(np.asarray(t, dtype=float))[bits[:, i], bits[:, j]]
        for node, value in (evidence or {}).items():
            logw[bits[:, node] != value] = -np.inf
    logz = logsumexp(logw)
    if not np.isfinite(logz):
        raise ValueError("evidence has zero probability under the network")
    p1 = np.array([
        np.exp(logsumexp(logw[bits[:, i] == 1]) - logz) if n else 0.0 for i in range(n)
    ])
    return Marginals(np.clip(p1, 0.0, 1.0), True, 0)


def loopy_bp(net: PairwiseMarkovNetwork, evidence=None, config: BpConfig = BpConfig(),
             backend=None) -> Marginals:
    """Flooding sum-product with damping on networks that have a cycle.

    On forests messages are undamped and iterated until they stop changing
    exactly, which happens within n sweeps; the result is the exact marginal.
    """
    if net.n_nodes == 0:
        raise ValueError("empty network")
    src, dst, tabs, in_ptr, in_msg = net.compiled()
    flood = kernels.get_bp_flood(backend)
    if net.is_forest:
        max_iter, tol, damping = max(config.max_iterations, net.n_nodes + 2), FOREST_TOLERANCE, 0.0
    else:
        max_iter, tol, damping = config.max_iterations, config.tolerance, config.damping
    beliefs, converged, iterations = flood(
        net.n_nodes, src, dst, tabs, _unary(net, evidence), in_ptr, in_msg,
        max_iter, tol, damping)
    return Marginals(np.clip(np.asarray(beliefs)[:, 1], 0.0, 1.0), bool(converged), int(iterations))


def target_bias_vector(net: PairwiseMarkovNetwork, graph: GlobalSceneGraph, n_locations: int,
                       config: BpConfig = BpConfig(), query=QUERY_ID, backend=None) -> np.ndarray:
    """Per-location P(Q = 1 | every instance seen at that location is present).

    Locations without instances get the unconditioned marginal of Q.
    """
    prior = loopy_bp(net, {}, config, backend)[query]
    bias = np.full(n_locations, prior)
    for loc in range(n_locations):
        nodes = [i for i in graph.evidence_at(loc) if i not in (QUERY_ID, QUERY_DUP_ID)]
        if nodes:
            bias[loc] = loopy_bp(net, {i: 1 for i in nodes}, config, backend)[query]
    return bias
