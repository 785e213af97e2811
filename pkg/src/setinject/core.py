"""Shared graph/multiset types, seeded randomness and multiset comparison."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment


def make_rng(seed: int, *extra: int) -> np.random.Generator:
    """PCG64 stream keyed on ``seed`` (and optional sub-keys such as a fold index).

    PCG64 streams are bit-identical across platforms for a given seed sequence.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, extra)])))


def as_multiset(elements, d: Optional[int] = None) -> np.ndarray:
    """Coerce a collection of feature vectors to an ``(n, d)`` float64 array.

    A 1-D input is read as n scalars (d = 1). An empty collection needs ``d``.
    """
    arr = np.asarray(elements, dtype=np.float64)
    if arr.size == 0:
        if d is None:
            d = arr.shape[1] if arr.ndim == 2 else 1
        return np.zeros((0, d))
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"multiset must be 2-D (elements x dim), got shape {arr.shape}")
    if d is not None and arr.shape[1] != d:
        raise ValueError(f"expected element dimension {d}, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("multiset elements must be finite")
    return arr


def canonical_order(X: np.ndarray) -> np.ndarray:
    """Row indices sorting ``X`` lexicographically (first column is the primary key)."""
    if len(X) == 0:
        return np.zeros(0, dtype=np.intp)
    return np.lexsort(X.T[::-1])


def multiset_equal(a, b, tol: float = 0.0) -> bool:
    """True iff a minimum-cost matching pairs all elements within L-inf distance ``tol``."""
    a = as_multiset(a)
    b = as_multiset(b)
    if len(b) == 0:
        b = b.reshape(0, a.shape[1])
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if len(a) != len(b):
        return False
    if len(a) == 0:
        return True
    if tol == 0:
        return bool(np.array_equal(a[canonical_order(a)], b[canonical_order(b)]))
    cost = np.abs(a[:, None, :] - b[None, :, :]).max(axis=2)
    rows, cols = linear_sum_assignment(cost)
    # min-sum matching can still leave one pair above tol when a bottleneck-feasible one exists
    if cost[rows, cols].max() <= tol:
        return True
    return _bottleneck_ok(cost <= tol)


def _bottleneck_ok(allowed: np.ndarray) -> bool:
    big = np.where(allowed, 0.0, 1.0)
    rows, cols = linear_sum_assignment(big)
    return bool(big[rows, cols].sum() == 0)


def hausdorff_matched(a, b) -> float:
    """Largest L-inf gap of the min-cost matching between equal-size multisets."""
    a, b = as_multiset(a), as_multiset(b)
    if len(a) != len(b):
        return np.inf
    if len(a) == 0:
        return 0.0
    cost = np.abs(a[:, None, :] - b[None, :, :]).max(axis=2)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max())


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph with per-node features.

    ``edges`` holds each undirected edge once as ``(u, v)`` with ``u < v``,
    sorted lexicographically.
    """

    n: int
    edges: np.ndarray
    features: np.ndarray
    label: Optional[int] = None
    _neighbors: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if len(edges):
            if edges.min() < 0 or edges.max() >= self.n:
                raise ValueError("edge endpoint out of range")
            if np.any(edges[:, 0] == edges[:, 1]):
                raise ValueError("self-loops are not supported")
            edges = np.sort(edges, axis=1)
            edges = np.unique(edges, axis=0)
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim == 1:
            feats = feats[:, None]
        if feats.shape[0] != self.n:
            raise ValueError(f"expected {self.n} feature rows, got {feats.shape[0]}")
        edges.setflags(write=False)
        feats.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "features", feats)
        nbrs = [[] for _ in range(self.n)]
        for u, v in edges:
            nbrs[u].append(int(v))
            nbrs[v].append(int(u))
        object.__setattr__(self, "_neighbors", tuple(tuple(sorted(x)) for x in nbrs))

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def neighbors(self, v: int) -> tuple:
        return self._neighbors[v]

    def degrees(self) -> np.ndarray:
        return np.array([len(x) for x in self._neighbors], dtype=np.int64)

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.n, self.n), dtype=bool)
        if len(self.edges):
            A[self.edges[:, 0], self.edges[:, 1]] = True
            A[self.edges[:, 1], self.edges[:, 0]] = True
        return A

    def with_features(self, features) -> "Graph":
        return Graph(self.n, self.edges, features, self.label)

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.n == other.n
            and self.label == other.label
            and np.array_equal(self.edges, other.edges)
            and np.array_equal(self.features, other.features)
        )

    __hash__ = None


def graph_from_edges(n: int, edges: Sequence, features=None, label=None) -> Graph:
    if features is None:
        features = np.ones((n, 1))
    return Graph(n, np.asarray(list(edges), dtype=np.int64).reshape(-1, 2), features, label)


def permute_graph(g: Graph, perm) -> Graph:
    """Relabel node ``i`` as ``perm[i]``; features move with their node."""
    perm = np.asarray(perm, dtype=np.int64)
    if perm.shape != (g.n,) or not np.array_equal(np.sort(perm), np.arange(g.n)):
        raise ValueError("perm must be a bijection on 0..n-1")
    feats = np.empty_like(g.features)
    feats[perm] = g.features
    edges = perm[g.edges] if len(g.edges) else g.edges
    return Graph(g.n, edges, feats, g.label)


def inverse_permutation(perm) -> np.ndarray:
    perm = np.asarray(perm, dtype=np.int64)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    return inv
