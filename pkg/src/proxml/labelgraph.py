"""Label co-occurrence graph and the algebraic connectivity of its normalized Laplacian."""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from itertools import combinations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from proxml.data import Dataset

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LabelGraph:
    """Symmetric weighted adjacency (no self-loops) over ``n_vertices`` labels."""

    adjacency: sp.csr_matrix

    @property
    def n_vertices(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_edges(self) -> int:
        return self.adjacency.nnz // 2

    @property
    def degrees(self) -> np.ndarray:
        return np.asarray(self.adjacency.sum(axis=1)).ravel()

    @property
    def isolated(self) -> np.ndarray:
        return np.flatnonzero(self.degrees == 0)

    def components(self, include_isolated: bool = False) -> np.ndarray:
        """Component id per vertex; isolated vertices get -1 unless included."""
        _, comp = connected_components(self.adjacency, directed=False)
        if not include_isolated:
            comp = comp.copy()
            comp[self.isolated] = -1
        return comp

    def n_components(self) -> int:
        comp = self.components()
        return int(np.unique(comp[comp >= 0]).size)

    def subgraph(self, vertices) -> "LabelGraph":
        vertices = np.asarray(vertices, dtype=np.int64)
        return LabelGraph(sp.csr_matrix(self.adjacency[vertices][:, vertices]))

    def largest_component(self) -> "LabelGraph":
        comp = self.components()
        ids, sizes = np.unique(comp[comp >= 0], return_counts=True)
        if ids.size == 0:
            return self.subgraph([])
        return self.subgraph(np.flatnonzero(comp == ids[np.argmax(sizes)]))

    def scaled(self, factor: float) -> "LabelGraph":
        return LabelGraph(sp.csr_matrix(self.adjacency * factor))

    @classmethod
    def from_edges(cls, n: int, edges) -> "LabelGraph":
        """Build from ``(u, v, weight)`` triples; each undirected edge listed once."""
        rows, cols, vals = [], [], []
        for u, v, wt in edges:
            if u == v:
                continue
            rows += [u, v]
            cols += [v, u]
            vals += [wt, wt]
        A = sp.csr_matrix((np.asarray(vals, dtype=np.float64), (rows, cols)), shape=(n, n))
        A.sum_duplicates()
        return cls(A)


@dataclass(frozen=True)
class SpectralResult:
    lambda2: float
    iterations: int
    residual: float
    component_count: int
    n_isolated: int
    converged: bool


def build_graph(dataset: Dataset, pair_budget: int = 10_000) -> LabelGraph:
    """Edge weight between two labels = number of instances carrying both."""
    counts: Counter = Counter()
    for i, lab in enumerate(dataset.labels):
        n = lab.size
        if n * (n - 1) // 2 > pair_budget:
            log.warning("instance %d has %d labels (%d pairs > budget %d)", i, n, n * (n - 1) // 2, pair_budget)
        counts.update(combinations(lab.tolist(), 2))
    edges = [(u, v, c) for (u, v), c in sorted(counts.items())]
    return LabelGraph.from_edges(dataset.n_labels, edges)


def normalized_laplacian_apply(graph: LabelGraph, v: np.ndarray) -> np.ndarray:
    """(I - D^-1/2 A D^-1/2) v without forming the matrix; zero-degree rows map to 0."""
    v = np.asarray(v, dtype=np.float64)
    d = graph.degrees
    inv_sqrt = np.zeros_like(d)
    nz = d > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(d[nz])
    out = v - inv_sqrt * (graph.adjacency @ (inv_sqrt * v))
    out[~nz] = 0.0
    return out


def dense_normalized_laplacian(graph: LabelGraph) -> np.ndarray:
    """Entry-by-entry construction of the normalized Laplacian (for checking)."""
    A = graph.adjacency.toarray()
    d = A.sum(axis=1)
    n = A.shape[0]
    Lap = np.zeros((n, n))
    for i in range(n):
        if d[i] != 0:
            Lap[i, i] = 1.0 - A[i, i] / d[i]
        for j in range(n):
            if i != j and A[i, j] != 0:
                Lap[i, j] = -A[i, j] / np.sqrt(d[i] * d[j])
    return Lap


def algebraic_connectivity(graph: LabelGraph, tol: float = 1e-6, max_iters: int | None = None,
                           seed: int = 0) -> SpectralResult:
    """Second-smallest eigenvalue of the normalized Laplacian on the non-isolated vertices.

    Power iteration on 2I - L with the known null vector D^1/2 1 projected out
    every step; the dominant remaining eigenvalue is 2 - lambda2. A
    disconnected graph reports lambda2 = 0 directly.
    """
    isolated = graph.isolated
    keep = np.setdiff1d(np.arange(graph.n_vertices), isolated)
    if keep.size < 2:
        raise ValueError("need at least 2 non-isolated vertices")
    g = graph.subgraph(keep) if isolated.size else graph
    n_comp = g.n_components()
    if n_comp > 1:
        return SpectralResult(0.0, 0, 0.0, n_comp, int(isolated.size), True)

    n = g.n_vertices
    if max_iters is None:
        max_iters = max(10 * n, 5000)
    d = g.degrees
    null = np.sqrt(d)
    null /= np.linalg.norm(null)

    def deflate(x):
        return x - (null @ x) * null

    x = deflate(np.random.default_rng(seed).standard_normal(n))
    x /= np.linalg.norm(x)
    lam2, residual = 0.0, np.inf
    it = 0
    while it < max_iters:
        it += 1
        Lx = normalized_laplacian_apply(g, x)
        lam2 = float(x @ Lx)
        residual = float(np.linalg.norm(Lx - lam2 * x))
        if residual <= tol * max(1.0, lam2):
            break
        y = deflate(2.0 * x - Lx)
        norm = np.linalg.norm(y)
        if norm == 0.0:
            # landed exactly on an eigenvector of eigenvalue 2; restart from a fresh vector
            y = deflate(np.random.default_rng(seed + it).standard_normal(n))
            norm = np.linalg.norm(y)
        x = y / norm
    converged = residual <= tol * max(1.0, lam2)
    if not converged:
        log.warning("lambda2 not converged after %d iterations (residual %.3g)", it, residual)
    return SpectralResult(lam2, it, residual, 1, int(isolated.size), converged)
