"""Graph algebra for network flow problems.

Oriented incidence, edge weights, Laplacian, and the edge-coordinate
transform ``eta = V B^T theta`` that maps nodal variables to weighted
differences across edges. Everything downstream (problem definitions,
dynamics, analysis) builds on these objects.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

# Relative cutoff below which singular/eigen values count as zero.
RANK_RTOL = 1e-9


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class NetworkGraph:
    """Simple connected undirected graph with positive edge weights.

    Parameters
    ----------
    n : int
        Number of nodes (>= 2), indexed 0..n-1.
    edges : sequence of (int, int)
        Node-index pairs. Pairs are normalized so that the tail is the
        lower index; this fixes the orientation of every edge and makes
        incidence-based outputs deterministic.
    weights : array_like
        Strictly positive weight per edge (per-unit susceptance in the
        power application).
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    weights: np.ndarray

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValueError(f"graph needs at least 2 nodes, got n={self.n}")
        edges = []
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i}, {j}) out of range for n={self.n}")
            edges.append((i, j) if i < j else (j, i))
        if len(set(edges)) != len(edges):
            raise ValueError("duplicate edges are not allowed")
        weights = _readonly(np.atleast_1d(np.asarray(self.weights, dtype=float)))
        if weights.shape != (len(edges),):
            raise ValueError(
                f"expected {len(edges)} weights, got shape {weights.shape}"
            )
        if not np.all(weights > 0):
            bad = np.flatnonzero(weights <= 0).tolist()
            raise ValueError(f"nonpositive weight on edges {bad}")
        object.__setattr__(self, "edges", tuple(edges))
        object.__setattr__(self, "weights", weights)
        if not _connected(self.n, self.edges):
            raise ValueError("graph is not connected")

    @property
    def e(self) -> int:
        """Number of edges."""
        return len(self.edges)


def _connected(n: int, edges: tuple[tuple[int, int], ...]) -> bool:
    # breadth-first search from node 0
    adj: list[list[int]] = [[] for _ in range(n)]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    seen = [False] * n
    seen[0] = True
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                queue.append(v)
    return all(seen)


@dataclass(frozen=True, eq=False)
class EdgeTransform:
    """Incidence factorization of a graph Laplacian.

    Attributes
    ----------
    B : ndarray, shape (n, e)
        Oriented incidence matrix, +1 at the tail (lower index) and -1
        at the head of each edge.
    V : ndarray, shape (e, e)
        Diagonal matrix with entries sqrt(w_e).
    L : ndarray, shape (n, n)
        Laplacian L = B W B^T with W = V V.
    """

    B: np.ndarray
    V: np.ndarray
    L: np.ndarray


def build_transform(g: NetworkGraph) -> EdgeTransform:
    """Build the incidence matrix, weight root, and Laplacian of ``g``.

    Deterministic for a given edge ordering: column k of B corresponds
    to g.edges[k] with +1 at the tail and -1 at the head.
    """
    B = np.zeros((g.n, g.e))
    for k, (i, j) in enumerate(g.edges):
        B[i, k] = 1.0
        B[j, k] = -1.0
    V = np.diag(np.sqrt(g.weights))
    L = (B * g.weights) @ B.T
    return EdgeTransform(B=_readonly(B), V=_readonly(V), L=_readonly(L))


def to_edge_coords(t: EdgeTransform, theta: np.ndarray) -> np.ndarray:
    """Map nodal angles to weighted edge differences eta = V B^T theta."""
    theta = np.asarray(theta, dtype=float)
    n = t.B.shape[0]
    if theta.shape != (n,):
        raise ValueError(f"expected theta of shape ({n},), got {theta.shape}")
    return t.V @ (t.B.T @ theta)


def is_tree(g: NetworkGraph) -> bool:
    """True iff the (connected) graph has exactly n - 1 edges."""
    return g.e == g.n - 1


def project_off_consensus(v: np.ndarray) -> np.ndarray:
    """Remove the consensus component: v - mean(v) * 1.

    The result is orthogonal to the all-ones vector, so its norm
    measures membership of span(1) = ker(B^T).
    """
    v = np.asarray(v, dtype=float)
    return v - v.mean()
