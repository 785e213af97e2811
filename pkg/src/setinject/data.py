"""TU-format dataset parsing, feature preprocessing and synthetic datasets."""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .core import Graph

log = logging.getLogger(__name__)


class TUParseError(ValueError):
    pass


class FeatureKind(str, Enum):
    ONE_HOT_LABEL = "onehot"
    CONTINUOUS_PLUS_ONE_HOT = "attr"
    ALL_ONES = "ones"


@dataclass
class RawGraph:
    n: int
    edges: np.ndarray
    label: Optional[int]
    node_labels: Optional[np.ndarray] = None
    node_attributes: Optional[np.ndarray] = None


@dataclass
class RawDataset:
    name: str
    graphs: List[RawGraph]
    checksum: str


@dataclass
class Dataset:
    graphs: List[Graph]
    n_classes: int
    feature_kind: FeatureKind
    max_degree: int
    max_nodes: int
    provenance: str = ""
    checksum: str = ""
    class_values: list = field(default_factory=list)

    def __len__(self):
        return len(self.graphs)

    @property
    def labels(self) -> np.ndarray:
        return np.array([g.label for g in self.graphs], dtype=np.int64)

    @property
    def feature_dim(self) -> int:
        return self.graphs[0].d


def _find_prefix(path: Path) -> str:
    hits = sorted(path.glob("*_A.txt"))
    if not hits:
        raise FileNotFoundError(f"no <DS>_A.txt in {path}")
    return hits[0].name[: -len("_A.txt")]


def _read_lines(path: Path) -> List[str]:
    with open(path, "r", newline=None) as fh:
        lines = [ln.strip() for ln in fh]
    while lines and not lines[-1]:
        lines.pop()
    return lines


def _read_ints(path: Path, per_line: Optional[int] = None) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line:
            continue
        try:
            vals = [int(tok) for tok in line.replace(",", " ").split()]
        except ValueError:
            raise TUParseError(f"{path.name}:{lineno}: non-numeric token in {line!r}") from None
        if per_line is not None and len(vals) != per_line:
            raise TUParseError(f"{path.name}:{lineno}: expected {per_line} values, got {len(vals)}")
        rows.append(vals)
    return np.array(rows, dtype=np.int64).reshape(len(rows), -1)


def _read_floats(path: Path) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line:
            continue
        try:
            rows.append([float(tok) for tok in line.split(",") if tok.strip()])
        except ValueError:
            raise TUParseError(f"{path.name}:{lineno}: non-numeric token in {line!r}") from None
    widths = {len(r) for r in rows}
    if len(widths) > 1:
        raise TUParseError(f"{path.name}: ragged attribute rows")
    return np.array(rows, dtype=np.float64)


def _checksum(files: Sequence[Path]) -> str:
    h = hashlib.sha256()
    for f in files:
        h.update(f.name.encode())
        h.update(f.read_bytes().replace(b"\r\n", b"\n"))
    return h.hexdigest()


def parse_tu(dir_path, name: Optional[str] = None) -> RawDataset:
    """Read a TU-format directory (DS_A, DS_graph_indicator, DS_graph_labels, ...)."""
    path = Path(dir_path)
    if not path.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {path}")
    name = name or _find_prefix(path)
    f = lambda suffix: path / f"{name}_{suffix}.txt"
    for req in ("A", "graph_indicator", "graph_labels"):
        if not f(req).exists():
            raise FileNotFoundError(f"missing mandatory file {f(req).name}")

    indicator = _read_ints(f("graph_indicator"), 1)[:, 0]
    graph_labels = _read_ints(f("graph_labels"), 1)[:, 0]
    n_nodes, n_graphs = len(indicator), len(graph_labels)
    if n_nodes and (indicator.min() < 1 or indicator.max() > n_graphs):
        bad = int(np.argmax((indicator < 1) | (indicator > n_graphs))) + 1
        raise TUParseError(f"{f('graph_indicator').name}:{bad}: graph id out of range 1..{n_graphs}")
    if n_nodes > 1 and np.any(np.diff(indicator) < 0):
        raise TUParseError(f"{f('graph_indicator').name}: nodes are not grouped by graph")

    edges = _read_ints(f("A"), 2)
    if len(edges):
        bad = (edges < 1) | (edges > n_nodes)
        if bad.any():
            lineno = int(np.argmax(bad.any(axis=1))) + 1
            raise TUParseError(f"{f('A').name}:{lineno}: dangling node id (valid 1..{n_nodes})")
    node_labels = _read_ints(f("node_labels"), 1)[:, 0] if f("node_labels").exists() else None
    attrs = _read_floats(f("node_attributes")) if f("node_attributes").exists() else None
    for arr, nm in ((node_labels, "node_labels"), (attrs, "node_attributes")):
        if arr is not None and len(arr) != n_nodes:
            raise TUParseError(f"{f(nm).name}: {len(arr)} rows for {n_nodes} nodes")

    starts = np.searchsorted(indicator, np.arange(1, n_graphs + 2))
    e0 = edges - 1 if len(edges) else edges.reshape(0, 2)
    gid_of_edge = indicator[e0[:, 0]] - 1 if len(e0) else np.zeros(0, dtype=np.int64)
    if len(e0) and np.any(indicator[e0[:, 0]] != indicator[e0[:, 1]]):
        lineno = int(np.argmax(indicator[e0[:, 0]] != indicator[e0[:, 1]])) + 1
        raise TUParseError(f"{f('A').name}:{lineno}: edge joins two different graphs")
    order = np.argsort(gid_of_edge, kind="stable")
    e_starts = np.searchsorted(gid_of_edge[order], np.arange(n_graphs + 1))

    graphs = []
    for gi in range(n_graphs):
        lo, hi = starts[gi], starts[gi + 1]
        ge = e0[order[e_starts[gi] : e_starts[gi + 1]]] - lo
        ge = ge[ge[:, 0] != ge[:, 1]] if len(ge) else ge.reshape(0, 2)
        ge = np.unique(np.sort(ge, axis=1), axis=0) if len(ge) else ge.reshape(0, 2)
        graphs.append(
            RawGraph(
                n=int(hi - lo),
                edges=ge,
                label=int(graph_labels[gi]),
                node_labels=None if node_labels is None else node_labels[lo:hi],
                node_attributes=None if attrs is None else attrs[lo:hi],
            )
        )
    files = [p for p in sorted(path.glob(f"{name}_*.txt"))]
    return RawDataset(name, graphs, _checksum(files))


def write_tu(dataset_or_raw, dir_path, name: str) -> Path:
    """Write graphs in TU layout (both edge directions, 1-based ids)."""
    path = Path(dir_path)
    path.mkdir(parents=True, exist_ok=True)
    if isinstance(dataset_or_raw, RawDataset):
        raws = dataset_or_raw.graphs
    else:
        raws = [RawGraph(g.n, g.edges, g.label, node_attributes=g.features) for g in dataset_or_raw.graphs]
    A, ind, glab, nlab, attr = [], [], [], [], []
    offset = 0
    for gi, g in enumerate(raws, start=1):
        for u, v in g.edges:
            A.append(f"{u + offset + 1}, {v + offset + 1}")
            A.append(f"{v + offset + 1}, {u + offset + 1}")
        ind.extend([str(gi)] * g.n)
        glab.append(str(g.label))
        if g.node_labels is not None:
            nlab.extend(str(int(x)) for x in g.node_labels)
        if g.node_attributes is not None:
            attr.extend(", ".join(repr(float(t)) for t in row) for row in g.node_attributes)
        offset += g.n
    (path / f"{name}_A.txt").write_text("\n".join(A) + ("\n" if A else ""))
    (path / f"{name}_graph_indicator.txt").write_text("\n".join(ind) + "\n")
    (path / f"{name}_graph_labels.txt").write_text("\n".join(glab) + "\n")
    if nlab:
        (path / f"{name}_node_labels.txt").write_text("\n".join(nlab) + "\n")
    if attr:
        (path / f"{name}_node_attributes.txt").write_text("\n".join(attr) + "\n")
    return path


def _one_hot(values: np.ndarray, alphabet: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(alphabet, values)
    out = np.zeros((len(values), len(alphabet)))
    out[np.arange(len(values)), idx] = 1.0
    return out


def preprocess(raw: RawDataset, kind) -> Dataset:
    """Build model-ready node features and contiguous class ids."""
    kind = FeatureKind(kind)
    graphs = raw.graphs
    has_labels = all(g.node_labels is not None for g in graphs)
    has_attrs = all(g.node_attributes is not None for g in graphs)
    if kind is FeatureKind.ONE_HOT_LABEL and not has_labels:
        raise ValueError(f"{kind.value} features need a node_labels file")
    if kind is FeatureKind.CONTINUOUS_PLUS_ONE_HOT and not has_attrs:
        raise ValueError(f"{kind.value} features need a node_attributes file")

    alphabet = np.unique(np.concatenate([g.node_labels for g in graphs])) if has_labels and graphs else None
    classes = sorted({g.label for g in graphs})
    class_id = {c: i for i, c in enumerate(classes)}
    out = []
    for g in graphs:
        if kind is FeatureKind.ALL_ONES:
            feats = np.ones((g.n, 1))
        elif kind is FeatureKind.ONE_HOT_LABEL:
            feats = _one_hot(g.node_labels, alphabet)
        else:
            parts = [np.asarray(g.node_attributes, dtype=np.float64).reshape(g.n, -1)]
            if has_labels:
                parts.append(_one_hot(g.node_labels, alphabet))
            feats = np.hstack(parts)
        out.append(Graph(g.n, g.edges, feats, class_id[g.label]))
    return _finish(out, len(classes), kind, raw.name, raw.checksum, classes)


def _finish(graphs, n_classes, kind, provenance, checksum, classes) -> Dataset:
    max_deg = max((int(g.degrees().max()) if g.n else 0 for g in graphs), default=0)
    max_nodes = max((g.n for g in graphs), default=0)
    return Dataset(graphs, n_classes, FeatureKind(kind), max_deg, max_nodes, provenance, checksum, list(classes))


def load_tu(dir_path, kind="auto") -> Dataset:
    raw = parse_tu(dir_path)
    if kind == "auto":
        if all(g.node_attributes is not None for g in raw.graphs):
            kind = FeatureKind.CONTINUOUS_PLUS_ONE_HOT
        elif all(g.node_labels is not None for g in raw.graphs):
            kind = FeatureKind.ONE_HOT_LABEL
        else:
            kind = FeatureKind.ALL_ONES
    return preprocess(raw, kind)


class SyntheticTask(str, Enum):
    CYCLE_VS_CHORD = "CycleVsChord"
    TWO_COMMUNITY_ATTR = "TwoCommunityAttr"


def _cycle_edges(m: int) -> List[tuple]:
    return [(i, (i + 1) % m) for i in range(m)]


def gen_synthetic(task, n_graphs: int, size_range=(6, 12), rng: Optional[np.random.Generator] = None,
                  seed: int = 0) -> Dataset:
    """Balanced two-class toy datasets.

    ``CycleVsChord``: class 0 is a plain cycle C_m, class 1 the same cycle plus
    one random chord; all node features are 1.
    ``TwoCommunityAttr``: random graphs whose 2-d Gaussian node attributes have a
    class-dependent mean.
    """
    task = SyntheticTask(task)
    if n_graphs < 20:
        raise ValueError("n_graphs must be >= 20")
    lo, hi = size_range
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(seed))
    graphs = []
    if task is SyntheticTask.CYCLE_VS_CHORD:
        if hi < 4:
            raise ValueError("cycles need at least 4 nodes to admit a chord")
        lo = max(lo, 4)
        for i in range(n_graphs):
            label = i % 2
            m = int(rng.integers(lo, hi + 1))
            edges = _cycle_edges(m)
            if label == 1:
                u = int(rng.integers(m))
                v = (u + int(rng.integers(2, m - 1))) % m
                edges.append((u, v))
            graphs.append(Graph(m, np.array(edges), np.ones((m, 1)), label))
        kind = FeatureKind.ALL_ONES
    else:
        if lo < 2:
            raise ValueError("size_range must allow at least 2 nodes")
        for i in range(n_graphs):
            label = i % 2
            m = int(rng.integers(lo, hi + 1))
            # random spanning tree plus extra edges keeps the graph connected
            edges = [(int(rng.integers(v)), v) for v in range(1, m)]
            extra = rng.random((m, m)) < 2.0 / m
            edges += [(u, v) for u in range(m) for v in range(u + 1, m) if extra[u, v]]
            mean = np.array([1.0, -1.0]) if label else np.array([-1.0, 1.0])
            feats = rng.normal(0.5 * mean, 1.0, size=(m, 2))
            graphs.append(Graph(m, np.array(edges), feats, label))
        kind = FeatureKind.CONTINUOUS_PLUS_ONE_HOT
    return _finish(graphs, 2, kind, f"synthetic:{task.value}", "", [0, 1])
