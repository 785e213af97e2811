"""Loss, Adam, learning-rate schedule and the 10-fold cross-validation harness."""
from __future__ import annotations

import csv
import json
import logging
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .core import make_rng
from .data import Dataset
from .gnn import GraphBatch, Model, ModelConfig, Variant

log = logging.getLogger(__name__)


def cross_entropy(logits, label: int):
    """Softmax cross-entropy of one logit vector; returns ``(loss, dloss/dlogits)``."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1 or len(z) < 2:
        raise ValueError("need a 1-D logit vector with at least 2 classes")
    if not 0 <= label < len(z):
        raise ValueError(f"label {label} out of range for {len(z)} classes")
    shifted = z - z.max()
    lse = np.log(np.exp(shifted).sum())
    p = np.exp(shifted - lse)
    grad = p.copy()
    grad[label] -= 1.0
    return float(lse - shifted[label]), grad


def batch_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean loss over rows and its gradient (already divided by the batch size)."""
    n, C = logits.shape
    if np.any(labels < 0) or np.any(labels >= C):
        raise ValueError("label out of range")
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    losses = lse - shifted[np.arange(n), labels]
    grad = np.exp(shifted - lse[:, None])
    grad[np.arange(n), labels] -= 1.0
    return float(losses.mean()), grad / n, losses


@dataclass
class AdamState:
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    t: int = 0


class Adam:
    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def init(self, params: Dict[str, np.ndarray]) -> AdamState:
        return AdamState({k: np.zeros_like(p) for k, p in params.items()},
                         {k: np.zeros_like(p) for k, p in params.items()})

    def step(self, params, grads, state: AdamState, lr: float) -> None:
        """In-place bias-corrected Adam update of ``params`` and ``state``."""
        if params.keys() != grads.keys():
            raise ValueError("parameter and gradient names differ")
        state.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** state.t
        c2 = 1.0 - b2 ** state.t
        for k, p in params.items():
            g = grads[k]
            if g.shape != p.shape:
                raise ValueError(f"{k}: gradient shape {g.shape} != parameter shape {p.shape}")
            m = state.m[k] = b1 * state.m[k] + (1 - b1) * g
            v = state.v[k] = b2 * state.v[k] + (1 - b2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_step(params, grads, state: Optional[AdamState], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
    opt = Adam(beta1, beta2, eps)
    if state is None:
        state = opt.init(params)
    opt.step(params, grads, state, lr)
    return params, state


@dataclass
class TrainConfig:
    variant: str = Variant.EXP_FIXED.value
    lr0: float = 0.01
    decay_every: int = 50
    decay_factor: float = 0.5
    epochs: int = 300
    batch_size: int = 32
    hidden: int = 32
    layers: int = 5
    seed: int = 0
    folds: int = 10
    normalize: bool = True
    premix: bool = False
    gin_epsilon: float = 0.0
    max_neighbors: Optional[int] = None  # None: max degree over the dataset
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        Variant(self.variant)
        for name in ("lr0", "decay_factor", "epochs", "batch_size", "hidden", "layers", "decay_every", "folds"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def lr_at(self, epoch: int) -> float:
        """Learning rate for 0-based ``epoch``."""
        return self.lr0 * self.decay_factor ** (epoch // self.decay_every)


def lr_schedule(lr0: float, epoch: int, every: int = 50, factor: float = 0.5) -> float:
    return lr0 * factor ** (epoch // every)


def stratified_folds(labels: Sequence[int], k: int, rng: np.random.Generator) -> List[np.ndarray]:
    """Split indices into ``k`` disjoint folds with per-class counts within one of each other."""
    labels = np.asarray(labels)
    if len(labels) < k:
        raise ValueError(f"cannot make {k} folds from {len(labels)} samples")
    folds: List[list] = [[] for _ in range(k)]
    slot = 0
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if len(idx) < k:
            warnings.warn(f"class {c} has {len(idx)} samples, fewer than {k} folds", stacklevel=2)
        idx = rng.permutation(idx)
        for i in idx:
            folds[slot % k].append(int(i))
            slot += 1
    return [np.array(sorted(f), dtype=np.int64) for f in folds]


def make_model(dataset: Dataset, cfg: TrainConfig, seed: int) -> Model:
    mcfg = ModelConfig(
        variant=Variant(cfg.variant),
        in_dim=dataset.feature_dim,
        n_classes=dataset.n_classes,
        hidden=cfg.hidden,
        layers=cfg.layers,
        max_neighbors=max(1, cfg.max_neighbors or dataset.max_degree),
        normalize=cfg.normalize,
        premix=cfg.premix,
        gin_epsilon=cfg.gin_epsilon,
    )
    return Model(mcfg, seed)


def evaluate(model: Model, graphs, batch_size: int = 256):
    """Accuracy and mean loss in eval mode."""
    correct, total_loss = 0, 0.0
    for s in range(0, len(graphs), batch_size):
        b = GraphBatch(graphs[s : s + batch_size])
        _, logits, _ = model.forward(b, train=False)
        _, _, losses = batch_cross_entropy(logits, b.labels)
        total_loss += losses.sum()
        correct += int((logits.argmax(axis=1) == b.labels).sum())
    n = max(1, len(graphs))
    return correct / n, total_loss / n


def minibatches(order: np.ndarray, size: int) -> List[np.ndarray]:
    batches = [order[s : s + size] for s in range(0, len(order), size)]
    # batch norm needs two samples; a lone straggler joins the previous batch
    if len(batches) > 1 and len(batches[-1]) == 1:
        last = batches.pop()
        batches[-1] = np.concatenate([batches[-1], last])
    return batches


def train_model(model: Model, train_graphs, cfg: TrainConfig, rng: np.random.Generator,
                val_graphs=None, on_epoch=None):
    """Mini-batch Adam training. Returns per-epoch rows of metrics."""
    opt = Adam(cfg.beta1, cfg.beta2, cfg.adam_eps)
    state = opt.init(model.params)
    rows = []
    n = len(train_graphs)
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        if epoch % cfg.decay_every == 0:
            log.info("epoch %d: learning rate %g", epoch, lr)
        loss_sum = 0.0
        for idx in minibatches(rng.permutation(n), cfg.batch_size):
            b = GraphBatch([train_graphs[i] for i in idx])
            _, logits, tape = model.forward(b, train=True)
            loss, dlogits, _ = batch_cross_entropy(logits, b.labels)
            grads = model.backward(tape, dlogits)
            opt.step(model.params, grads, state, lr)
            loss_sum += loss * len(idx)
        row = {"epoch": epoch, "lr": lr, "train_loss_running": loss_sum / n}
        row["train_acc"], row["train_loss"] = evaluate(model, train_graphs)
        if val_graphs is not None and len(val_graphs):
            row["val_acc"], row["val_loss"] = evaluate(model, val_graphs)
        log.debug("epoch %d lr=%g %s", epoch, lr, row)
        rows.append(row)
        if on_epoch is not None:
            on_epoch(row)
    return rows


@dataclass
class CvReport:
    mean: float
    std: float
    best_epoch: int
    fold_accuracies: List[float]
    train_mean_at_best: float
    config: dict
    dataset: str
    checksum: str
    curves: List[dict] = field(default_factory=list, repr=False)

    def to_json(self) -> str:
        d = asdict(self)
        d.pop("curves")
        return json.dumps(d, indent=2, sort_keys=True) + "\n"

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(self.to_json())
        write_curves(self.curves, out / "curves.csv")
        write_curves(average_curves(self.curves), out / "curves_mean.csv")
        return out


def write_curves(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fold", "epoch", "split", "accuracy", "loss"])
        for r in rows:
            w.writerow([r["fold"], r["epoch"], r["split"], repr(float(r["accuracy"])), repr(float(r["loss"]))])


def average_curves(rows) -> List[dict]:
    acc: Dict[tuple, list] = {}
    for r in rows:
        acc.setdefault((r["epoch"], r["split"]), []).append((r["accuracy"], r["loss"]))
    return [
        {"fold": "mean", "epoch": e, "split": s, "accuracy": float(np.mean([a for a, _ in v])),
         "loss": float(np.mean([l for _, l in v]))}
        for (e, s), v in sorted(acc.items(), key=lambda kv: (kv[0][0], kv[0][1]))
    ]


def _run_fold(args):
    dataset, cfg, fold, train_idx, val_idx = args
    rng = make_rng(cfg.seed, fold)
    model = make_model(dataset, cfg, seed=int(rng.integers(2**31)))
    train_graphs = [dataset.graphs[i] for i in train_idx]
    val_graphs = [dataset.graphs[i] for i in val_idx]
    rows = train_model(model, train_graphs, cfg, rng, val_graphs)
    return fold, rows, model.state_dict()


def run_cv(dataset: Dataset, cfg: TrainConfig, out_dir=None, workers: Optional[int] = None,
           save_checkpoints: bool = False) -> CvReport:
    """k-fold CV; picks the single epoch with the best fold-averaged validation accuracy."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    if np.any(dataset.labels < 0):
        raise ValueError("all graphs need labels")
    folds = stratified_folds(dataset.labels, cfg.folds, make_rng(cfg.seed, 10**6))
    jobs = []
    for f, val_idx in enumerate(folds):
        train_idx = np.setdiff1d(np.arange(len(dataset)), val_idx)
        jobs.append((dataset, cfg, f, train_idx, val_idx))
    if workers is None:
        workers = int(os.environ.get("SETINJECT_THREADS", "1"))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_fold, jobs))
    else:
        results = [_run_fold(j) for j in jobs]
    results.sort(key=lambda r: r[0])

    curves = []
    val = np.zeros((len(folds), cfg.epochs))
    tr = np.zeros((len(folds), cfg.epochs))
    for fold, rows, _ in results:
        for r in rows:
            e = r["epoch"]
            val[fold, e], tr[fold, e] = r["val_acc"], r["train_acc"]
            curves.append({"fold": fold, "epoch": e, "split": "train", "accuracy": r["train_acc"], "loss": r["train_loss"]})
            curves.append({"fold": fold, "epoch": e, "split": "val", "accuracy": r["val_acc"], "loss": r["val_loss"]})
    best = int(np.argmax(val.mean(axis=0)))
    report = CvReport(
        mean=float(val[:, best].mean()),
        std=float(val[:, best].std()),
        best_epoch=best,
        fold_accuracies=[float(x) for x in val[:, best]],
        train_mean_at_best=float(tr[:, best].mean()),
        config=asdict(cfg),
        dataset=dataset.provenance,
        checksum=dataset.checksum,
        curves=curves,
    )
    if out_dir is not None:
        out = report.write(out_dir)
        if save_checkpoints:
            ck = out / "checkpoints"
            ck.mkdir(exist_ok=True)
            for fold, _, state in results:
                (ck / f"fold_{fold:02d}.json").write_text(json.dumps(state))
    return report
