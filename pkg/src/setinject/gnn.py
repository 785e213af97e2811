"""ExpGNN variants and the GIN-final baseline with exact reverse-mode gradients.

Each GNN layer computes

    t_u  = T(h_u)                           transformation (power map, MLP or identity)
    a_v  = sum_{u in N(v)} t_u              aggregation
    z_v  = [h_v, a_v]   or   (1+eps) h_v + a_v
    h'_v = relu(bn(MLP_c(z_v)))

and the graph readout is ``logits = MLP_cls(sum_v h^K_v)``. All MLPs have two
linear layers with batch norm + ReLU on the hidden layer.

Parameters live in a flat ``{name: array}`` dict so the optimizer and the
checkpoint format can treat them uniformly.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .core import Graph, make_rng
from .set_codec import encoding_width, random_premix

CHECKPOINT_FORMAT = "setinject-checkpoint"
CHECKPOINT_VERSION = 1
BN_EPS = 1e-5
# derivative of |x|^(1/M) is unbounded at 0; evaluate it no closer than this
ROOT_GRAD_FLOOR = 1e-6


class Variant(str, Enum):
    EXP_FIXED = "exp-fixed"
    EXP_MLP = "exp-mlp"
    EXP_FI_FIXED = "exp-fi-fixed"
    EXP_FI_MLP = "exp-fi-mlp"
    GIN_FINAL = "gin-final"


@dataclass
class ModelConfig:
    variant: Variant
    in_dim: int
    n_classes: int
    hidden: int = 32
    layers: int = 5
    max_neighbors: int = 1
    normalize: bool = True
    premix: bool = False
    gin_epsilon: float = 0.0
    batch_norm: bool = True
    bn_momentum: float = 0.9
    transform: Optional[str] = None  # overrides the variant: "power" | "mlp" | "identity"
    combine: Optional[str] = None  # overrides the variant: "concat" | "sum"

    def __post_init__(self):
        self.variant = Variant(self.variant)
        if self.layers < 1 or self.hidden < 1 or self.in_dim < 1 or self.max_neighbors < 1:
            raise ValueError("layers, hidden, in_dim and max_neighbors must be positive")
        if self.n_classes < 2:
            raise ValueError("need at least two classes")

    def layer_kinds(self, k: int):
        v = self.variant
        if self.transform is not None:
            t = self.transform
        elif v is Variant.GIN_FINAL:
            t = "identity"
        elif v in (Variant.EXP_FI_FIXED, Variant.EXP_FI_MLP) and k == 0:
            t = "identity"
        elif v in (Variant.EXP_FIXED, Variant.EXP_FI_FIXED):
            t = "power"
        else:
            t = "mlp"
        c = self.combine or ("sum" if v is Variant.GIN_FINAL else "concat")
        return t, c

    def layer_in_dim(self, k: int) -> int:
        return self.in_dim if k == 0 else self.hidden

    def transform_width(self, k: int) -> int:
        t, _ = self.layer_kinds(k)
        d = self.layer_in_dim(k)
        if t == "power":
            return encoding_width(d, self.max_neighbors)
        if t == "mlp":
            return self.hidden
        return d


class GraphBatch:
    """Disjoint union of graphs as sparse adjacency plus a node->graph pooling matrix."""

    def __init__(self, graphs: Sequence[Graph]):
        self.graphs = list(graphs)
        sizes = np.array([g.n for g in self.graphs], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        N = int(offsets[-1])
        self.n_graphs = len(self.graphs)
        self.n_nodes = N
        self.X = np.vstack([g.features for g in self.graphs]) if N else np.zeros((0, self.graphs[0].d))
        rows, cols = [], []
        for g, off in zip(self.graphs, offsets[:-1]):
            if len(g.edges):
                rows.append(g.edges[:, 0] + off)
                cols.append(g.edges[:, 1] + off)
        r = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
        c = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
        ones = np.ones(2 * len(r))
        self.A = sp.csr_matrix((ones, (np.concatenate([r, c]), np.concatenate([c, r]))), shape=(N, N))
        self.A.sort_indices()
        gid = np.repeat(np.arange(self.n_graphs), sizes)
        self.pool = sp.csr_matrix((np.ones(N), (gid, np.arange(N))), shape=(self.n_graphs, N))
        self.labels = np.array([-1 if g.label is None else g.label for g in self.graphs], dtype=np.int64)

    def max_degree(self) -> int:
        return int(np.diff(self.A.indptr).max()) if self.n_nodes else 0


# ---------------------------------------------------------------- primitives

def _bn_fwd(x, gamma, beta, rmean, rvar, train):
    if train:
        mu = x.mean(axis=0)
        var = x.var(axis=0)
    else:
        mu, var = rmean, rvar
    inv = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - mu) * inv
    return xhat * gamma + beta, (xhat, inv, gamma, train), (mu, var)


def _bn_bwd(cache, dy):
    xhat, inv, gamma, train = cache
    dgamma = (dy * xhat).sum(axis=0)
    dbeta = dy.sum(axis=0)
    if not train:
        return dy * gamma * inv, dgamma, dbeta
    n = dy.shape[0]
    dxhat = dy * gamma
    dx = inv / n * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
    return dx, dgamma, dbeta


def power_forward(h: np.ndarray, M: int, normalize: bool, premix: Optional[np.ndarray]):
    """Row-wise monomial map (rows of ``h`` -> encoding rows) with its backward cache."""
    x = h @ premix.T if premix is not None else h
    y0 = x[:, 0]
    if normalize:
        y0 = np.sign(y0) * np.abs(y0) ** (1.0 / M)
    n, d = x.shape
    P = np.empty((n, M + 1))
    P[:, 0] = 1.0
    for q in range(1, M + 1):
        P[:, q] = P[:, q - 1] * y0
    out = np.empty((n, encoding_width(d, M)))
    out[:, : M + 1] = P
    if d > 1:
        # block j holds y0^q * x_j, q < M; laid out coordinate-major
        out[:, M + 1 :] = (x[:, 1:, None] * P[:, None, :M]).reshape(n, (d - 1) * M)
    return out, (x, P, M, normalize, premix)


def power_backward(cache, dout: np.ndarray) -> np.ndarray:
    x, P, M, normalize, premix = cache
    n, d = x.shape
    D = np.zeros_like(P)
    D[:, 1:] = P[:, :-1] * np.arange(1, M + 1)
    dy0 = (dout[:, : M + 1] * D).sum(axis=1)
    dx = np.empty_like(x)
    if d > 1:
        dB = dout[:, M + 1 :].reshape(n, d - 1, M)
        dy0 += (dB * D[:, None, :M] * x[:, 1:, None]).sum(axis=(1, 2))
        dx[:, 1:] = (dB * P[:, None, :M]).sum(axis=2)
    if normalize:
        ax = np.maximum(np.abs(x[:, 0]), ROOT_GRAD_FLOOR)
        dy0 = dy0 * (1.0 / M) * ax ** (1.0 / M - 1.0)
    dx[:, 0] = dy0
    return dx @ premix if premix is not None else dx


# ---------------------------------------------------------------- model

class Model:
    def __init__(self, config: ModelConfig, seed: int = 0, params=None, buffers=None):
        self.config = config
        self.seed = seed
        if params is None:
            params, buffers = self._init(make_rng(seed))
        self.params: Dict[str, np.ndarray] = params
        self.buffers: Dict[str, np.ndarray] = buffers

    # -- construction
    def _mlp_init(self, rng, prefix, d_in, d_hidden, d_out, params, buffers):
        for i, (a, b) in enumerate(((d_in, d_hidden), (d_hidden, d_out))):
            lim = np.sqrt(6.0 / (a + b))
            params[f"{prefix}.lin{i}.W"] = rng.uniform(-lim, lim, size=(a, b))
            params[f"{prefix}.lin{i}.b"] = np.zeros(b)
        self._bn_init(f"{prefix}.bn", d_hidden, params, buffers)

    def _bn_init(self, prefix, width, params, buffers):
        if not self.config.batch_norm:
            return
        params[f"{prefix}.gamma"] = np.ones(width)
        params[f"{prefix}.beta"] = np.zeros(width)
        buffers[f"{prefix}.mean"] = np.zeros(width)
        buffers[f"{prefix}.var"] = np.ones(width)

    def _init(self, rng):
        cfg = self.config
        params, buffers = {}, {}
        for k in range(cfg.layers):
            t, c = cfg.layer_kinds(k)
            d_in = cfg.layer_in_dim(k)
            if t == "power" and cfg.premix:
                buffers[f"layer{k}.premix"] = random_premix(d_in, rng)
            if t == "mlp":
                self._mlp_init(rng, f"layer{k}.transform", d_in, cfg.hidden, cfg.hidden, params, buffers)
            tw = cfg.transform_width(k)
            if c == "sum" and tw != d_in:
                raise ValueError(f"layer {k}: sum-combine needs transform width {tw} == input width {d_in}")
            c_in = d_in + tw if c == "concat" else d_in
            self._mlp_init(rng, f"layer{k}.combine", c_in, cfg.hidden, cfg.hidden, params, buffers)
            self._bn_init(f"layer{k}.out_bn", cfg.hidden, params, buffers)
        self._mlp_init(rng, "readout", cfg.hidden, cfg.hidden, cfg.n_classes, params, buffers)
        return params, buffers

    def n_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    # -- forward pieces
    def _bn(self, name, x, train, tape, stats):
        if not self.config.batch_norm:
            return x
        p, b = self.params, self.buffers
        y, cache, batch_stats = _bn_fwd(x, p[f"{name}.gamma"], p[f"{name}.beta"], b[f"{name}.mean"], b[f"{name}.var"], train)
        tape.append(("bn", name, cache))
        if train:
            stats[name] = batch_stats
        return y

    def _relu(self, x, tape):
        mask = x > 0
        margin = float(np.abs(x).min()) if x.size else np.inf
        tape.append(("relu", None, (mask, margin)))
        return x * mask

    def _linear(self, name, x, tape):
        tape.append(("linear", name, x))
        return x @ self.params[f"{name}.W"] + self.params[f"{name}.b"]

    def _mlp(self, prefix, x, train, tape, stats):
        x = self._linear(f"{prefix}.lin0", x, tape)
        x = self._bn(f"{prefix}.bn", x, train, tape, stats)
        x = self._relu(x, tape)
        return self._linear(f"{prefix}.lin1", x, tape)

    def _layer(self, k, H, batch, train, tape, stats):
        cfg = self.config
        if H.shape[1] != cfg.layer_in_dim(k):
            raise ValueError(f"layer {k} expects width {cfg.layer_in_dim(k)}, got {H.shape[1]}")
        t, c = cfg.layer_kinds(k)
        if t == "power":
            if batch.max_degree() > cfg.max_neighbors:
                raise ValueError(
                    f"neighborhood of size {batch.max_degree()} exceeds capacity M_n={cfg.max_neighbors}"
                )
            T, cache = power_forward(H, cfg.max_neighbors, cfg.normalize, self.buffers.get(f"layer{k}.premix"))
            tape.append(("power", k, cache))
        elif t == "mlp":
            T = self._mlp(f"layer{k}.transform", H, train, tape, stats)
        else:
            T = H
        tape.append(("aggregate", k, batch.A))
        agg = batch.A @ T
        if c == "concat":
            tape.append(("concat", k, H.shape[1]))
            Z = np.hstack([H, agg])
        else:
            eps = cfg.gin_epsilon
            tape.append(("epsum", k, eps))
            Z = (1.0 + eps) * H + agg
        Z = self._mlp(f"layer{k}.combine", Z, train, tape, stats)
        Z = self._bn(f"layer{k}.out_bn", Z, train, tape, stats)
        return self._relu(Z, tape)

    def forward(self, batch: GraphBatch, train: bool = False, update_stats: bool = True):
        """Returns ``(graph_embeddings, logits, tape)``.

        In train mode batch norm uses batch statistics and, if ``update_stats``,
        folds them into the running averages afterwards.
        """
        tape: List = []
        stats: Dict[str, tuple] = {}
        H = batch.X
        if H.shape[1] != self.config.in_dim:
            raise ValueError(f"model expects {self.config.in_dim}-d node features, got {H.shape[1]}")
        for k in range(self.config.layers):
            H = self._layer(k, H, batch, train, tape, stats)
        tape.append(("pool", None, batch.pool))
        emb = batch.pool @ H
        logits = self._mlp("readout", emb, train, tape, stats)
        if train and update_stats:
            m = self.config.bn_momentum
            for name, (mu, var) in stats.items():
                self.buffers[f"{name}.mean"] = m * self.buffers[f"{name}.mean"] + (1 - m) * mu
                self.buffers[f"{name}.var"] = m * self.buffers[f"{name}.var"] + (1 - m) * var
        return emb, logits, Tape(tape, self.param_signature())

    def predict(self, graphs: Sequence[Graph]):
        emb, logits, _ = self.forward(GraphBatch(graphs), train=False)
        return emb, logits

    def param_signature(self) -> tuple:
        return tuple((k, v.shape) for k, v in self.params.items())

    # -- backward
    def backward(self, tape: "Tape", dlogits: np.ndarray) -> Dict[str, np.ndarray]:
        """Gradients of ``sum(dlogits * logits)`` w.r.t. every parameter."""
        if tape.signature != self.param_signature():
            raise ValueError("tape was recorded with a different parameter layout")
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        g = np.asarray(dlogits, dtype=np.float64)
        # the two branches of each layer rejoin at the aggregation; keep the
        # skip-path gradient for the layer input here until the branch is done
        pending: Dict[int, np.ndarray] = {}
        for op, key, cache in reversed(tape.ops):
            if op == "linear":
                grads[f"{key}.W"] += cache.T @ g
                grads[f"{key}.b"] += g.sum(axis=0)
                g = g @ self.params[f"{key}.W"].T
            elif op == "relu":
                g = g * cache[0]
            elif op == "bn":
                g, dgamma, dbeta = _bn_bwd(cache, g)
                grads[f"{key}.gamma"] += dgamma
                grads[f"{key}.beta"] += dbeta
            elif op == "pool":
                g = cache.T @ g
            elif op == "concat":
                pending[key] = g[:, :cache]
                g = g[:, cache:]
            elif op == "epsum":
                pending[key] = (1.0 + cache) * g
            elif op == "aggregate":
                g = cache.T @ g
                if self.config.layer_kinds(key)[0] == "identity":
                    g = g + pending.pop(key)
            elif op == "power":
                g = power_backward(cache, g) + pending.pop(key)
            else:  # pragma: no cover
                raise RuntimeError(op)
            # an MLP transform ends at its first linear layer; rejoin the skip path there
            if op == "linear" and key.endswith(".transform.lin0"):
                g = g + pending.pop(int(key[5 : key.index(".")]))
        return grads

    # -- checkpoints
    def state_dict(self) -> dict:
        cfg = asdict(self.config)
        cfg["variant"] = self.config.variant.value
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "seed": self.seed,
            "config": cfg,
            "params": {k: _tensor(v) for k, v in self.params.items()},
            "buffers": {k: _tensor(v) for k, v in self.buffers.items()},
        }

    @classmethod
    def from_state_dict(cls, state: dict) -> "Model":
        if state.get("format") != CHECKPOINT_FORMAT:
            raise ValueError("not a setinject checkpoint")
        if state.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {state.get('version')}")
        cfg = ModelConfig(**state["config"])
        params = {k: _untensor(v) for k, v in state["params"].items()}
        buffers = {k: _untensor(v) for k, v in state["buffers"].items()}
        model = cls(cfg, state.get("seed", 0), params, buffers)
        expected = Model(cfg, 0).param_signature()
        if model.param_signature() != expected:
            raise ValueError("checkpoint parameters do not match its config")
        return model

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.state_dict()))

    @classmethod
    def load(cls, path) -> "Model":
        return cls.from_state_dict(json.loads(Path(path).read_text()))


@dataclass
class Tape:
    """Ordered forward record: ``(op, key, cache)`` triples replayed in reverse."""

    ops: list
    signature: tuple

    @property
    def kink_margin(self) -> float:
        """Smallest |input| over all ReLUs; finite differences with a step well
        below this never cross a kink."""
        return min((c[1] for op, _, c in self.ops if op == "relu"), default=np.inf)


def _tensor(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": [float(x) for x in a.ravel()]}


def _untensor(t: dict) -> np.ndarray:
    return np.array(t["data"], dtype=np.float64).reshape(t["shape"])


def aggregate_fixed(neighbors, M: int, normalize: bool = False) -> np.ndarray:
    """Sum of power maps over one neighborhood (``encode_multiset`` without metadata)."""
    from .set_codec import CapacityError, phi_fixed, normalize_g

    H = np.asarray(neighbors, dtype=np.float64)
    if H.ndim == 1:
        H = H.reshape(-1, 1) if H.size else H.reshape(0, 1)
    if len(H) > M:
        raise CapacityError(f"neighborhood of size {len(H)} exceeds M_n={M}")
    if len(H) == 0:
        return np.zeros(encoding_width(H.shape[1], M))
    if normalize:
        H = normalize_g(H, M)
    return phi_fixed(H, M).sum(axis=0)


def max_degree(graphs: Sequence[Graph]) -> int:
    return max((int(g.degrees().max()) if g.n else 0 for g in graphs), default=0)


def build_model(variant, in_dim: int, n_classes: int, max_neighbors: int, seed: int = 0, **kw) -> Model:
    return Model(ModelConfig(Variant(variant), in_dim, n_classes, max_neighbors=max(1, max_neighbors), **kw), seed)
