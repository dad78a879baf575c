"""Signed graphs and the Laplacian algebra built on top of them.

Matrices are plain dense ``numpy`` arrays. A ``SymMatrix`` is any square
float array that is exactly symmetric; ``sym_matrix`` builds one.
"""
import enum
import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import networkx as nx
import numpy as np

from errors import DimensionError

logger = logging.getLogger(__name__)

SymMatrix = np.ndarray


class LaplacianKind(enum.Enum):
    COMBINATORIAL = "combinatorial"
    GENERALIZED = "generalized"


def sym_matrix(data) -> SymMatrix:
    """Copy ``data`` into a float array that is exactly symmetric"""
    a = np.array(data, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    # (a + a.T) / 2 leaves an already symmetric matrix bit-identical
    return (a + a.T) / 2.0


@dataclass(frozen=True)
class SignedGraph:
    """Undirected weighted signed graph with per-node self-loops.

    Nodes are 0-based. Every unordered pair appears at most once in
    ``edges``; self-loops live in ``self_loops`` only.
    """
    n: int
    edges: Tuple[Tuple[int, int, float], ...] = ()
    self_loops: Tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.n < 0:
            raise ValueError(f"node count must be non-negative, got {self.n}")
        edges = tuple((int(i), int(j), float(w)) for i, j, w in self.edges)
        loops = tuple(float(u) for u in self.self_loops) if self.self_loops else (0.0,) * self.n
        if len(loops) != self.n:
            raise DimensionError(f"expected {self.n} self-loop weights, got {len(loops)}")

        seen = set()
        for i, j, _ in edges:
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i}, {j}) out of range for {self.n} nodes")
            if i == j:
                raise ValueError(f"edge ({i}, {i}) is a self-loop; use self_loops")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)

        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "self_loops", loops)

    def to_networkx(self) -> nx.Graph:
        """Expose the graph as a networkx Graph with a ``weight`` attribute"""
        g = nx.Graph()
        g.add_nodes_from(range(self.n))
        g.add_weighted_edges_from(self.edges)
        return g


def adjacency(g: SignedGraph) -> SymMatrix:
    """W with W[i, j] = w_ij for edges and W[i, i] = u_i"""
    W = np.zeros((g.n, g.n))
    W[np.diag_indices(g.n)] = g.self_loops
    if g.edges:
        rows, cols, weights = zip(*g.edges)
        W[rows, cols] = weights
        W[cols, rows] = weights
    return W


def degree_matrix(W: SymMatrix) -> SymMatrix:
    """Diagonal degree matrix; row sums include the diagonal of W"""
    return np.diag(np.asarray(W, dtype=float).sum(axis=1))


def laplacian(g: SignedGraph, kind: LaplacianKind = LaplacianKind.COMBINATORIAL) -> SymMatrix:
    W = adjacency(g)
    L = degree_matrix(W) - W
    if kind is LaplacianKind.GENERALIZED:
        L = L + np.diag(np.diag(W))
    return L


def laplacian_to_graph(M: SymMatrix) -> SignedGraph:
    """Read any symmetric matrix as the generalized Laplacian of a signed graph"""
    M = sym_matrix(M)
    n = M.shape[0]
    # exact zeros are not edges
    rows, cols = np.nonzero(np.triu(M, k=1))
    edges = tuple((int(i), int(j), float(-M[i, j])) for i, j in zip(rows, cols))
    off_sums = M.sum(axis=1) - np.diag(M)
    loops = np.diag(M) + off_sums
    return SignedGraph(n=n, edges=edges, self_loops=tuple(loops))


def signed_graph_from_adjacency(W: SymMatrix) -> SignedGraph:
    """Build a graph from an adjacency matrix; the diagonal becomes self-loops"""
    W = sym_matrix(W)
    n = W.shape[0]
    rows, cols = np.nonzero(np.triu(W, k=1))
    edges = tuple((int(i), int(j), float(W[i, j])) for i, j in zip(rows, cols))
    return SignedGraph(n=n, edges=edges, self_loops=tuple(np.diag(W)))


def glr(x: np.ndarray, M: SymMatrix) -> float:
    """Graph Laplacian regularizer x^T M x"""
    x = np.asarray(x, dtype=float)
    M = np.asarray(M, dtype=float)
    if x.ndim != 1 or M.shape != (x.size, x.size):
        raise DimensionError(f"signal of length {x.size} does not match matrix {M.shape}")
    return float(x @ M @ x)


def glr_edge_form(x: np.ndarray, g: SignedGraph) -> float:
    """Edge-sum form of the GLR: sum w_ij (x_i - x_j)^2 + sum u_i x_i^2"""
    x = np.asarray(x, dtype=float)
    if x.size != g.n:
        raise DimensionError(f"signal of length {x.size} does not match {g.n} nodes")
    total = float(np.dot(g.self_loops, x * x))
    for i, j, w in g.edges:
        total += w * (x[i] - x[j]) ** 2
    return total


def is_balanced(g: SignedGraph) -> Tuple[bool, Optional[np.ndarray]]:
    """Cartwright-Harary test by sign-parity 2-coloring over BFS trees.

    Returns (True, coloring) with coloring entries in {+1, -1}, or
    (False, None). Self-loops are ignored.
    """
    nxg = g.to_networkx()
    color = np.zeros(g.n, dtype=int)

    for component in nx.connected_components(nxg):
        root = min(component)
        color[root] = 1
        for u, v in nx.bfs_edges(nxg, root):
            w = nxg[u][v]["weight"]
            color[v] = color[u] if w >= 0 else -color[u]

    for i, j, w in g.edges:
        same = color[i] == color[j]
        if (w > 0 and not same) or (w < 0 and same):
            logger.debug(f"Edge ({i}, {j}) with weight {w} breaks balance")
            return False, None
    return True, color
