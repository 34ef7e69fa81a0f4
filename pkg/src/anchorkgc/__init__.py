"""Knowledge-graph completion with structural entity anchors and text encoding."""

__version__ = "0.1.0"

from .config import TrainConfig, load_config
from .kgdata import (
    FilterIndex,
    KnowledgeGraph,
    NeighborIndex,
    add_inverse_relations,
    build_filter_index,
    khop_neighbors,
    load_dataset,
    load_graph,
)
from .model import Model, TextIndex, init_model
from .evaluate import RankingReport, evaluate_split
from .trainer import TrainResult, load_model, train

__all__ = [
    "FilterIndex",
    "KnowledgeGraph",
    "Model",
    "NeighborIndex",
    "RankingReport",
    "TextIndex",
    "TrainConfig",
    "TrainResult",
    "add_inverse_relations",
    "build_filter_index",
    "evaluate_split",
    "init_model",
    "khop_neighbors",
    "load_config",
    "load_dataset",
    "load_graph",
    "load_model",
    "train",
]
