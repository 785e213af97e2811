"""1-dimensional Weisfeiler-Lehman color refinement."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Dict, Hashable, List, Optional, Sequence

import numpy as np

from .core import Graph


class ColorTable:
    """Injective map from color signatures to small integers.

    New signatures seen in one refinement round are sorted before they get ids,
    so the numbering does not depend on node order. Not thread safe.
    """

    def __init__(self):
        self._ids: Dict[Hashable, int] = {}

    def __len__(self):
        return len(self._ids)

    def intern(self, signatures: Sequence[Hashable]) -> List[int]:
        fresh = sorted({s for s in signatures if s not in self._ids}, key=repr)
        for s in fresh:
            self._ids[s] = len(self._ids)
        return [self._ids[s] for s in signatures]


@dataclass
class WlColoring:
    iterations: List[np.ndarray]
    stabilized: bool

    @property
    def final(self) -> np.ndarray:
        return self.iterations[-1]

    def n_colors(self, k: int) -> int:
        return len(set(self.iterations[k].tolist()))

    def histogram(self, k: int) -> Counter:
        return Counter(self.iterations[k].tolist())


def quantized_labels(g: Graph, decimals: int = 6) -> List[tuple]:
    """Exact labels from node features. Continuous attributes are rounded first."""
    return [tuple(np.round(row, decimals).tolist()) for row in g.features]


def _refine_once(g: Graph, colors: np.ndarray) -> List[tuple]:
    return [(int(colors[v]), tuple(sorted(int(colors[u]) for u in g.neighbors(v)))) for v in range(g.n)]


def _partition(colors) -> frozenset:
    blocks: Dict[int, list] = {}
    for v, c in enumerate(colors):
        blocks.setdefault(int(c), []).append(v)
    return frozenset(tuple(b) for b in blocks.values())


def wl_refine_many(graphs: Sequence[Graph], initial_labels=None, k_max: int = 10,
                   table: Optional[ColorTable] = None) -> List[WlColoring]:
    """Refine several graphs with one shared color table so their colors are comparable."""
    table = table if table is not None else ColorTable()
    if initial_labels is None:
        initial_labels = [quantized_labels(g) for g in graphs]
    # round 0 signatures are tagged so they can never collide with refined ones
    flat = [("init", lab) for labs in initial_labels for lab in labs]
    ids = table.intern(flat)
    current, pos = [], 0
    for g in graphs:
        current.append(np.array(ids[pos : pos + g.n], dtype=np.int64))
        pos += g.n
    history = [[c] for c in current]
    stable = [False] * len(graphs)
    for _ in range(k_max):
        if all(stable):
            break
        sigs = [_refine_once(g, c) for g, c in zip(graphs, current)]
        ids = table.intern([s for per in sigs for s in per])
        pos = 0
        for i, g in enumerate(graphs):
            new = np.array(ids[pos : pos + g.n], dtype=np.int64)
            pos += g.n
            if _partition(new) == _partition(current[i]):
                stable[i] = True
            current[i] = new
            history[i].append(new)
    return [WlColoring(h, s) for h, s in zip(history, stable)]


def wl_refine(g: Graph, initial_labels=None, k_max: int = 10, table: Optional[ColorTable] = None) -> WlColoring:
    labels = None if initial_labels is None else [list(initial_labels)]
    return wl_refine_many([g], labels, k_max, table)[0]


def wl_distinguishes(g1: Graph, g2: Graph, k_max: int = 10, labels1=None, labels2=None) -> Optional[int]:
    """First iteration (0 = initial labels) at which the color histograms differ, else None."""
    labels = None
    if labels1 is not None or labels2 is not None:
        labels = [
            labels1 if labels1 is not None else quantized_labels(g1),
            labels2 if labels2 is not None else quantized_labels(g2),
        ]
    table = ColorTable()
    c1, c2 = wl_refine_many([g1, g2], labels, k_max, table)
    # after both stabilize the histograms can no longer change relative to each other
    for k in range(k_max + 1):
        h1 = c1.histogram(min(k, len(c1.iterations) - 1))
        h2 = c2.histogram(min(k, len(c2.iterations) - 1))
        if k >= len(c1.iterations) and k >= len(c2.iterations):
            break
        if h1 != h2:
            return k
    return None
