"""Graph containers and the combinatorial routines on them.

Node indices are 0-based everywhere inside the package.  The 1-based
convention used in files and on the command line is handled in
:mod:`peeldag.io`.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Tuple

import numpy as np

from .errors import CyclicInput, DimensionMismatch

Edge = Tuple[int, int]


def _adjacency(p: int, edges: Iterable[Edge]) -> List[List[int]]:
    adj: List[List[int]] = [[] for _ in range(p)]
    for k, j in edges:
        adj[k].append(j)
    for nbrs in adj:
        nbrs.sort()
    return adj


@dataclass(frozen=True)
class DirectedGraph:
    p: int
    edges: FrozenSet[Edge] = frozenset()

    def __post_init__(self):
        edges = frozenset((int(k), int(j)) for k, j in self.edges)
        for k, j in edges:
            if k == j:
                raise ValueError(f"self-loop at node {k}")
            if not (0 <= k < self.p and 0 <= j < self.p):
                raise ValueError(f"edge {(k, j)} out of range for p={self.p}")
        object.__setattr__(self, "edges", edges)

    def children(self) -> List[List[int]]:
        return _adjacency(self.p, self.edges)


@dataclass(frozen=True)
class SuperGraph:
    """Ancestral relations plus candidate intervention edges.

    ``ancestral`` holds pairs ``(k, j)`` meaning Y_k is an ancestor of Y_j,
    ``interventions`` holds ``(l, j)`` meaning X_l may act on Y_j (directly
    or through an ancestor), and ``heights`` are topological heights.
    """

    p: int
    q: int
    ancestral: FrozenSet[Edge] = frozenset()
    interventions: FrozenSet[Edge] = frozenset()
    heights: Tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "ancestral", frozenset((int(a), int(b)) for a, b in self.ancestral))
        object.__setattr__(self, "interventions",
                           frozenset((int(a), int(b)) for a, b in self.interventions))
        heights = tuple(int(h) for h in self.heights) if self.heights else (0,) * self.p
        if len(heights) != self.p:
            raise DimensionMismatch(f"heights has length {len(heights)}, expected {self.p}")
        object.__setattr__(self, "heights", heights)
        for k, j in self.ancestral:
            if not (0 <= k < self.p and 0 <= j < self.p) or k == j:
                raise ValueError(f"bad ancestral pair {(k, j)}")
        for l, j in self.interventions:
            if not (0 <= l < self.q and 0 <= j < self.p):
                raise ValueError(f"bad intervention pair {(l, j)}")

    def ancestors_of(self, j: int) -> List[int]:
        return sorted(k for k, jj in self.ancestral if jj == j)

    def interventions_of(self, j: int) -> List[int]:
        return sorted(l for l, jj in self.interventions if jj == j)

    def as_graph(self) -> DirectedGraph:
        return DirectedGraph(self.p, self.ancestral)


class HypothesisMode(enum.Enum):
    EDGE = "edge"
    PATHWAY = "pathway"


@dataclass(frozen=True)
class HypothesisSpec:
    """Hypothesized directed edges; duplicates are dropped, order kept."""

    edges: Tuple[Edge, ...]
    mode: HypothesisMode = HypothesisMode.EDGE

    def __post_init__(self):
        seen, ordered = set(), []
        for k, j in self.edges:
            e = (int(k), int(j))
            if e[0] == e[1]:
                raise ValueError(f"hypothesized self-loop {e}")
            if e not in seen:
                seen.add(e)
                ordered.append(e)
        if not ordered:
            raise ValueError("hypothesis must contain at least one edge")
        object.__setattr__(self, "edges", tuple(ordered))


@dataclass(frozen=True)
class HypothesisClassification:
    nondegenerate: Tuple[Edge, ...]
    is_degenerate: bool
    is_regular: bool
    per_node_d: Dict[int, Tuple[int, ...]] = field(default_factory=dict)


def has_cycle(g: DirectedGraph) -> bool:
    """Iterative three-colour DFS; linear in nodes plus edges."""
    adj = g.children()
    state = [0] * g.p  # 0 unvisited, 1 on stack, 2 done
    for root in range(g.p):
        if state[root]:
            continue
        stack = [(root, 0)]
        state[root] = 1
        while stack:
            node, idx = stack[-1]
            if idx < len(adj[node]):
                stack[-1] = (node, idx + 1)
                nxt = adj[node][idx]
                if state[nxt] == 1:
                    return True
                if state[nxt] == 0:
                    state[nxt] = 1
                    stack.append((nxt, 0))
            else:
                state[node] = 2
                stack.pop()
    return False


def ancestral_closure(g: DirectedGraph) -> FrozenSet[Edge]:
    """All pairs ``(k, j)`` joined by a directed path k -> ... -> j."""
    if has_cycle(g):
        raise CyclicInput("ancestral closure requested for a cyclic graph")
    adj = g.children()
    out = set()
    for k in range(g.p):
        seen = set()
        stack = list(adj[k])
        while stack:
            v = stack.pop()
            if v in seen:
                continue
            seen.add(v)
            stack.extend(adj[v])
        out.update((k, j) for j in seen)
    return frozenset(out)


def topological_heights(g: DirectedGraph) -> Tuple[int, ...]:
    """Length of the longest directed path from each node down to a leaf."""
    if has_cycle(g):
        raise CyclicInput("heights requested for a cyclic graph")
    adj = g.children()
    height = [-1] * g.p
    for root in range(g.p):
        if height[root] >= 0:
            continue
        stack = [(root, 0)]
        while stack:
            node, idx = stack[-1]
            if idx < len(adj[node]):
                stack[-1] = (node, idx + 1)
                nxt = adj[node][idx]
                if height[nxt] < 0:
                    stack.append((nxt, 0))
            else:
                stack.pop()
                height[node] = 1 + max((height[c] for c in adj[node]), default=-1)
    return tuple(height)


def classify_hypothesis(h: HypothesisSpec, s: SuperGraph) -> HypothesisClassification:
    """Split hypothesized edges into nondegenerate ones and flag regularity.

    An edge ``(k, j)`` is nondegenerate when ``(j, k)`` is not an ancestral
    relation of ``s``; the hypothesis is regular when the nondegenerate
    edges together with the ancestral set stay acyclic.
    """
    for k, j in h.edges:
        if not (0 <= k < s.p and 0 <= j < s.p):
            raise DimensionMismatch(f"hypothesized edge {(k, j)} outside p={s.p}")
    d = tuple(e for e in h.edges if (e[1], e[0]) not in s.ancestral)
    regular = not has_cycle(DirectedGraph(s.p, s.ancestral | frozenset(d)))
    per_node: Dict[int, List[int]] = {}
    for k, j in d:
        per_node.setdefault(j, []).append(k)
    return HypothesisClassification(
        nondegenerate=d,
        is_degenerate=not d,
        is_regular=regular,
        per_node_d={j: tuple(sorted(ks)) for j, ks in sorted(per_node.items())},
    )


def edges_from_matrix(u, atol: float = 0.0) -> FrozenSet[Edge]:
    """Support of a coefficient matrix as a set of (row, column) pairs."""
    rows, cols = np.nonzero(np.abs(np.asarray(u)) > atol)
    return frozenset(zip(rows.tolist(), cols.tolist()))


def supergraph_contains(s_star: SuperGraph, s: SuperGraph) -> bool:
    """True when ``s_star`` dominates ``s`` in both edge components."""
    if (s_star.p, s_star.q) != (s.p, s.q):
        raise DimensionMismatch(f"supergraphs of shape {(s_star.p, s_star.q)} and {(s.p, s.q)}")
    return s.ancestral <= s_star.ancestral and s.interventions <= s_star.interventions
