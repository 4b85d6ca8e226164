"""Undirected graphs for Gaussian graphical models.

Nodes are labelled ``1..p`` at every public interface; internally the
adjacency matrix is indexed from zero.
"""

from __future__ import annotations

from functools import cached_property
from itertools import combinations
from typing import Iterable

import numpy as np


class GraphError(ValueError):
    """Raised for malformed graph input."""


class Graph:
    """Immutable undirected graph on nodes ``1..p``.

    Parameters
    ----------
    p : int
        Number of nodes.
    edges : iterable of (int, int)
        1-based node pairs. Order within a pair and duplicates are ignored.
    """

    def __init__(self, p: int, edges: Iterable[tuple[int, int]] = ()):
        if int(p) != p or p < 1:
            raise GraphError(f"node count must be a positive integer, got {p!r}")
        self.p = int(p)
        canon = set()
        for pair in edges:
            i, j = (int(v) for v in pair)
            if i == j:
                raise GraphError(f"self-loop at node {i}")
            for v in (i, j):
                if not 1 <= v <= self.p:
                    raise GraphError(f"node {v} out of range 1..{self.p}")
            canon.add((min(i, j), max(i, j)))
        self._edges = frozenset(canon)

    @classmethod
    def from_adjacency(cls, adj) -> "Graph":
        adj = np.asarray(adj, dtype=bool)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise GraphError("adjacency must be square")
        if not np.array_equal(adj, adj.T):
            raise GraphError("adjacency must be symmetric")
        if adj.diagonal().any():
            raise GraphError("adjacency has self-loops")
        i, j = np.nonzero(np.triu(adj, 1))
        return cls(adj.shape[0], zip(i + 1, j + 1))

    @classmethod
    def complete(cls, p: int) -> "Graph":
        return cls(p, combinations(range(1, p + 1), 2))

    @classmethod
    def empty(cls, p: int) -> "Graph":
        return cls(p)

    @property
    def edges(self) -> frozenset[tuple[int, int]]:
        """Edge set as 1-based pairs ``(i, j)`` with ``i < j``."""
        return self._edges

    @cached_property
    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.p, self.p), dtype=bool)
        for i, j in self._edges:
            adj[i - 1, j - 1] = adj[j - 1, i - 1] = True
        adj.flags.writeable = False
        return adj

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self._edges

    def neighbors(self, i: int) -> frozenset[int]:
        return frozenset(int(j) + 1 for j in np.flatnonzero(self.adjacency[i - 1]))

    @property
    def n_edges(self) -> int:
        return len(self._edges)

    def is_complete(self) -> bool:
        return self.n_edges == self.p * (self.p - 1) // 2

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self._edges)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return self.p == other.p and self._edges == other._edges

    def __hash__(self) -> int:
        return hash((self.p, self._edges))

    def __repr__(self) -> str:
        return f"Graph(p={self.p}, edges={self.sorted_edges()})"


def from_edge_list(p: int, pairs: Iterable[tuple[int, int]]) -> Graph:
    return Graph(p, pairs)


def toggle_edge(g: Graph, edge: tuple[int, int]) -> Graph:
    """Return a copy of `g` with `edge` added if absent, removed if present."""
    i, j = (int(v) for v in edge)
    if i == j:
        raise GraphError(f"self-loop at node {i}")
    key = (min(i, j), max(i, j))
    if key in g.edges:
        return Graph(g.p, g.edges - {key})
    return Graph(g.p, g.edges | {key})


def nu_counts(g: Graph) -> np.ndarray:
    """Number of neighbours of each node with a larger index."""
    return np.triu(g.adjacency, 1).sum(axis=1)


def maximal_cliques(g: Graph) -> list[tuple[int, ...]]:
    """All maximal cliques of `g` as sorted 1-based tuples, in lexicographic order.

    Bron-Kerbosch with Tomita pivoting. Isolated nodes come out as singletons.
    """
    nbrs = [set(np.flatnonzero(row)) for row in g.adjacency]
    found: list[tuple[int, ...]] = []

    def expand(r: set, cand: set, excl: set) -> None:
        if not cand and not excl:
            found.append(tuple(sorted(v + 1 for v in r)))
            return
        pivot = max(cand | excl, key=lambda u: len(cand & nbrs[u]))
        for v in list(cand - nbrs[pivot]):
            expand(r | {v}, cand & nbrs[v], excl & nbrs[v])
            cand.remove(v)
            excl.add(v)

    expand(set(), set(range(g.p)), set())
    return sorted(found)


def is_decomposable(g: Graph) -> bool:
    """Chordality test via maximum cardinality search.

    MCS visits nodes in an order whose reverse is a perfect elimination
    ordering exactly when the graph is chordal.
    """
    adj = g.adjacency
    p = g.p
    weight = np.zeros(p, dtype=int)
    numbered = np.zeros(p, dtype=bool)
    order = []
    for _ in range(p):
        cand = np.where(numbered, -1, weight)
        v = int(np.argmax(cand))
        order.append(v)
        numbered[v] = True
        weight[adj[v] & ~numbered] += 1
    # each node's earlier-visited neighbours must form a clique
    pos = {v: k for k, v in enumerate(order)}
    for v in order:
        earlier = [u for u in np.flatnonzero(adj[v]) if pos[u] < pos[v]]
        if len(earlier) < 2:
            continue
        # checking against the latest earlier neighbour suffices
        last = max(earlier, key=pos.__getitem__)
        for u in earlier:
            if u != last and not adj[u, last]:
                return False
    return True


def all_graphs(p: int):
    """Yield every graph on ``p`` nodes (``2**(p*(p-1)/2)`` of them)."""
    pairs = list(combinations(range(1, p + 1), 2))
    for mask in range(1 << len(pairs)):
        yield Graph(p, [e for k, e in enumerate(pairs) if mask >> k & 1])


def read_graph(path) -> Graph:
    """Parse the plain-text graph format.

    First non-comment line holds ``p``; each further non-empty line holds
    one 1-based edge ``i j``. Lines starting with ``#`` are skipped.
    """
    lines = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if line and not line.startswith("#"):
                lines.append((lineno, line))
    if not lines:
        raise GraphError(f"{path}: empty graph file")
    try:
        p = int(lines[0][1])
    except ValueError:
        raise GraphError(f"{path}:{lines[0][0]}: expected node count, got {lines[0][1]!r}")
    pairs = []
    for lineno, line in lines[1:]:
        fields = line.split()
        if len(fields) != 2:
            raise GraphError(f"{path}:{lineno}: expected 'i j', got {line!r}")
        try:
            pairs.append((int(fields[0]), int(fields[1])))
        except ValueError:
            raise GraphError(f"{path}:{lineno}: non-integer node in {line!r}")
    try:
        return Graph(p, pairs)
    except GraphError as exc:
        raise GraphError(f"{path}: {exc}") from None


def write_graph(g: Graph, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"{g.p}\n")
        for i, j in g.sorted_edges():
            fh.write(f"{i} {j}\n")
