"""Command-line entry point: ``setinject <command> ...``.

Exit codes: 0 success, 1 numeric/internal failure, 2 usage or contract violation.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import asdict, fields
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .core import Graph, make_rng
from .data import gen_synthetic, load_tu
from .gnn import GraphBatch, Model, Variant
from .set_codec import (
    CapacityError,
    DecodeStatus,
    PowerEncoding,
    decode_multiset,
    encode_multiset,
    random_premix,
)
from .train import TrainConfig, make_model, run_cv, train_model, write_curves
from .wl import wl_distinguishes

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("setinject")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- config files

RUN_KEYS = {f.name for f in fields(TrainConfig)} | {"dataset", "features", "output", "n_graphs", "min_nodes", "max_nodes"}


def read_run_config(path) -> Dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are an error."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (t.strip() for t in line.split("=", 1))
        if key not in RUN_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}; valid keys: {', '.join(sorted(RUN_KEYS))}")
        out[key] = value
    return out


def _coerce(name: str, value):
    if value is None:
        return None
    types = {f.name: f.type for f in fields(TrainConfig)}
    t = str(types.get(name, "str"))
    s = str(value)
    if "bool" in t:
        if s.lower() in ("1", "true", "yes", "on"):
            return True
        if s.lower() in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"{name}: expected a boolean, got {s!r}")
    try:
        if "int" in t:
            return None if s.lower() == "none" else int(s)
        if "float" in t:
            return float(s)
    except ValueError:
        raise UsageError(f"{name}: cannot parse {s!r}") from None
    return s


def build_run_config(args) -> tuple:
    settings: Dict[str, object] = {}
    if args.config:
        settings.update(read_run_config(args.config))
    for key in RUN_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            settings[key] = v
    tc_kwargs = {k: _coerce(k, v) for k, v in settings.items() if k in {f.name for f in fields(TrainConfig)}}
    try:
        cfg = TrainConfig(**tc_kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return cfg, settings


def load_dataset(settings, seed: int):
    source = settings.get("dataset")
    if not source:
        raise UsageError("no dataset given (use --dataset DIR or --dataset synthetic:CycleVsChord)")
    source = str(source)
    if source.startswith("synthetic:"):
        task = source.split(":", 1)[1]
        n = int(settings.get("n_graphs", 200))
        size = (int(settings.get("min_nodes", 6)), int(settings.get("max_nodes", 12)))
        try:
            return gen_synthetic(task, n, size, seed=seed)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    if not Path(source).is_dir():
        raise UsageError(f"dataset directory not found: {source}")
    return load_tu(source, settings.get("features", "auto"))


# ---------------------------------------------------------------- graph files

def read_graph_file(path) -> Graph:
    """Plain edge list: ``u,v`` lines (0-based), optional ``nodes,N`` and ``label,node,value``."""
    edges, labels, n = [], {}, 0
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        try:
            if parts[0] == "nodes":
                n = max(n, int(parts[1]))
            elif parts[0] == "label":
                labels[int(parts[1])] = float(parts[2])
            else:
                u, v = int(parts[0]), int(parts[1])
                edges.append((u, v))
                n = max(n, u + 1, v + 1)
        except (ValueError, IndexError):
            raise UsageError(f"{path}:{lineno}: cannot parse {raw!r}") from None
    feats = np.ones((n, 1))
    for node, val in labels.items():
        if not 0 <= node < n:
            raise UsageError(f"{path}: label for unknown node {node}")
        feats[node, 0] = val
    return Graph(n, np.array(edges, dtype=np.int64).reshape(-1, 2), feats)


def write_graph_file(g: Graph, path) -> None:
    lines = [f"nodes,{g.n}"] + [f"{u},{v}" for u, v in g.edges]
    lines += [f"label,{i},{g.features[i, 0]!r}" for i in range(g.n) if g.features[i, 0] != 1.0]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------- csv helpers

def _read_rows(path) -> List[List[float]]:
    text = sys.stdin.read() if str(path) == "-" else Path(path).read_text()
    rows = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
            continue
        try:
            rows.append([float(t) for t in row if t.strip()])
        except ValueError:
            raise UsageError(f"{path}:{lineno}: non-numeric value in {row!r}") from None
    return rows


def _emit(text: str, output: Optional[str]) -> None:
    if output and output != "-":
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def _fmt(v: float) -> str:
    f = float(v)
    return str(int(f)) if f.is_integer() and abs(f) < 2**53 else repr(f)


# ---------------------------------------------------------------- commands

def cmd_encode(args) -> int:
    rows = _read_rows(args.input)
    widths = {len(r) for r in rows}
    if len(widths) > 1:
        raise UsageError("all element rows must have the same number of columns")
    d = widths.pop() if widths else (args.dim or 1)
    X = np.array(rows, dtype=np.float64).reshape(len(rows), d)
    premix = None
    if args.premix_seed is not None:
        premix = random_premix(d, make_rng(args.premix_seed))
        dest = args.premix_out or (f"{args.output}.premix.csv" if args.output and args.output != "-" else "premix.csv")
        np.savetxt(dest, premix, delimiter=",", fmt="%.17g")
    try:
        enc = encode_multiset(X, args.M, normalize=args.normalize, premix=premix, d=d, rescale=False)
    except CapacityError as exc:
        raise UsageError(str(exc)) from None
    vals = ",".join(_fmt(v) for v in enc.values)
    _emit((f"{d},{args.M},{vals}" if args.with_shape else vals) + "\n", args.output)
    return EXIT_OK


def cmd_decode(args) -> int:
    rows = _read_rows(args.input)
    if len(rows) != 1:
        raise UsageError(f"expected exactly one encoding row, got {len(rows)}")
    row = rows[0]
    if args.dim is not None and args.M is not None:
        d, M, vals = args.dim, args.M, row
    elif args.dim is None and args.M is None and len(row) >= 2:
        d, M, vals = int(row[0]), int(row[1]), row[2:]
    else:
        raise UsageError("give both --dim and --M, or a row written by encode --with-shape")
    premix = np.loadtxt(args.premix_file, delimiter=",", ndmin=2) if args.premix_file else None
    try:
        enc = PowerEncoding(np.array(vals), d, M, normalize=args.normalize, premix=premix)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    res = decode_multiset(enc, tol=args.tol)
    out = io.StringIO()
    if res.status is DecodeStatus.FULL:
        for x in res.elements:
            out.write(",".join(_fmt(np.round(v, 12)) for v in x) + "\n")
    elif res.status is DecodeStatus.PARTIAL_GROUPS:
        for gs in res.group_sums:
            out.write(",".join([_fmt(gs.value), str(gs.multiplicity)] + [_fmt(s) for s in gs.sums]) + "\n")
    _emit(out.getvalue(), args.output)
    msg = f"status: {res.status.value}"
    if res.message:
        msg += f" ({res.message})"
    print(msg, file=sys.stderr)
    return EXIT_OK if res.ok else EXIT_FAIL


def cmd_wl_compare(args) -> int:
    g1, g2 = read_graph_file(args.graph_a), read_graph_file(args.graph_b)
    if args.kmax < 0:
        raise UsageError("--kmax must be >= 0")
    k = wl_distinguishes(g1, g2, args.kmax)
    print("indistinguishable" if k is None else str(k))
    return EXIT_OK


def cmd_train(args) -> int:
    cfg, settings = build_run_config(args)
    ds = load_dataset(settings, cfg.seed)
    out = Path(settings.get("output") or "run")
    out.mkdir(parents=True, exist_ok=True)
    rng = make_rng(cfg.seed)
    model = make_model(ds, cfg, seed=int(rng.integers(2**31)))
    rows = train_model(model, ds.graphs, cfg, rng)
    curves = [{"fold": 0, "epoch": r["epoch"], "split": "train", "accuracy": r["train_acc"], "loss": r["train_loss"]}
              for r in rows]
    write_curves(curves, out / "curves.csv")
    model.save(out / "checkpoint.json")
    report = {
        "final_train_accuracy": rows[-1]["train_acc"],
        "best_train_accuracy": max(r["train_acc"] for r in rows),
        "epochs": cfg.epochs,
        "config": asdict(cfg),
        "dataset": ds.provenance,
        "checksum": ds.checksum,
    }
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(f"train accuracy {rows[-1]['train_acc']:.4f} -> {out}")
    return EXIT_OK


def cmd_cv(args) -> int:
    cfg, settings = build_run_config(args)
    ds = load_dataset(settings, cfg.seed)
    out = Path(settings.get("output") or "run")
    report = run_cv(ds, cfg, out, save_checkpoints=True)
    print(f"cv accuracy {report.mean:.4f} +- {report.std:.4f} at epoch {report.best_epoch} -> {out}")
    return EXIT_OK


def cmd_export_embeddings(args) -> int:
    if not Path(args.checkpoint).is_file():
        raise UsageError(f"checkpoint not found: {args.checkpoint}")
    model = Model.load(args.checkpoint)
    ds = load_dataset({"dataset": args.dataset, "features": args.features, "n_graphs": args.n_graphs}, args.seed)
    if ds.feature_dim != model.config.in_dim:
        raise UsageError(f"dataset features are {ds.feature_dim}-d, checkpoint expects {model.config.in_dim}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["graph_id", "label"] + [f"e{i}" for i in range(model.config.hidden)])
    for s in range(0, len(ds.graphs), 256):
        chunk = ds.graphs[s : s + 256]
        emb, _, _ = model.forward(GraphBatch(chunk), train=False)
        for i, (g, e) in enumerate(zip(chunk, emb)):
            w.writerow([s + i, g.label] + [repr(float(v)) for v in e])
    _emit(buf.getvalue(), args.output)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _add_train_flags(p):
    p.add_argument("--config", help="key=value run configuration file; flags override it")
    p.add_argument("--dataset", help="TU directory or synthetic:<CycleVsChord|TwoCommunityAttr>")
    p.add_argument("--features", help="node features: auto, onehot, attr or ones")
    p.add_argument("--variant", choices=[v.value for v in Variant], help="model variant (default exp-fixed)")
    p.add_argument("--output", help="output directory (default: ./run)")
    p.add_argument("--epochs", type=int, help="training epochs (default 300)")
    p.add_argument("--lr0", type=float, help="initial learning rate, halved every 50 epochs")
    p.add_argument("--batch-size", dest="batch_size", type=int, help="graphs per mini-batch (default 32)")
    p.add_argument("--hidden", type=int, help="hidden units per layer")
    p.add_argument("--layers", type=int, help="number of GNN layers")
    p.add_argument("--seed", type=int, help="master seed for folds, init and shuffling")
    p.add_argument("--folds", type=int, help="number of CV folds (default 10)")
    p.add_argument("--n-graphs", dest="n_graphs", type=int, help="size of a synthetic dataset")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="setinject", description="Injective multiset encodings and ExpGNN tools.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="encode one multiset (CSV rows = elements)")
    p.add_argument("input", help="CSV file of elements, one per row ('-' for stdin)")
    p.add_argument("--M", type=int, required=True, help="capacity (max multiset size)")
    p.add_argument("--normalize", action="store_true", help="apply the signed M-th root to the first coordinate")
    p.add_argument("--premix-seed", type=int, help="mix coordinates with a random orthogonal matrix from this seed")
    p.add_argument("--premix-out", help="where to write the premix matrix for decode (default <output>.premix.csv or premix.csv)")
    p.add_argument("--dim", type=int, help="element dimension when the input is empty")
    p.add_argument("--with-shape", action="store_true", help="prefix the row with d,M so decode needs no --dim/--M")
    p.add_argument("-o", "--output", help="output file (default stdout)")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode one encoding row back into a multiset")
    p.add_argument("input", help="CSV file with one encoding row ('-' for stdin)")
    p.add_argument("--dim", type=int, help="element dimension if the row holds values only")
    p.add_argument("--M", type=int, help="capacity if the row holds values only")
    p.add_argument("--premix-file", help="premix matrix written by encode --premix-out")
    p.add_argument("--normalize", action="store_true", help="the encoding was made with --normalize")
    p.add_argument("--tol", type=float, default=1e-6, help="decode tolerance (default 1e-6)")
    p.add_argument("-o", "--output", help="output file (default stdout)")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("wl-compare", help="first WL iteration separating two graphs")
    p.add_argument("graph_a")
    p.add_argument("graph_b")
    p.add_argument("--kmax", type=int, default=10, help="maximum refinement rounds (default 10)")
    p.set_defaults(func=cmd_wl_compare)

    p = sub.add_parser("train", help="train one model on a whole dataset")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cv", help="k-fold cross-validation")
    _add_train_flags(p)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("export-embeddings", help="write graph embeddings of a trained model as CSV")
    p.add_argument("checkpoint")
    p.add_argument("dataset", help="TU directory or synthetic:<task>")
    p.add_argument("--features", default="auto")
    p.add_argument("--n-graphs", dest="n_graphs", type=int, default=200)
    p.add_argument("--seed", type=int, default=0, help="seed for synthetic datasets")
    p.add_argument("-o", "--output", help="output file (default stdout)")
    p.set_defaults(func=cmd_export_embeddings)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE if isinstance(exc, FileNotFoundError) else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
