"""Injective multiset encodings with a constructive decoder, and graph networks built on them."""

__version__ = "0.1.0"

from .core import Graph, graph_from_edges, make_rng, multiset_equal, permute_graph
from .set_codec import (
    DecodeResult,
    DecodeStatus,
    PowerEncoding,
    decode_multiset,
    encode_multiset,
    phi_fixed,
    random_premix,
)
from .wl import wl_distinguishes, wl_refine
from .gnn import GraphBatch, Model, ModelConfig, Variant, build_model
from .data import Dataset, gen_synthetic, load_tu, parse_tu
from .train import TrainConfig, run_cv, train_model

__all__ = [
    "Graph", "graph_from_edges", "make_rng", "multiset_equal", "permute_graph",
    "DecodeResult", "DecodeStatus", "PowerEncoding", "decode_multiset", "encode_multiset",
    "phi_fixed", "random_premix", "wl_distinguishes", "wl_refine",
    "GraphBatch", "Model", "ModelConfig", "Variant", "build_model",
    "Dataset", "gen_synthetic", "load_tu", "parse_tu", "TrainConfig", "run_cv", "train_model",
]
