"""Query-focused video summarization with a memory-network encoder and a
sequential determinantal point process."""

from .core import (ConceptDictionary, Dataset, DatasetError, Query, Shot, Summary, Video,
                   load_dataset, save_dataset)
from .metric import evaluate, evaluate_multi, iou
from .model import ModelParams, init_params, summarize
from .oracle import build_oracle

__version__ = "0.1.0"

__all__ = [
    "ConceptDictionary", "Dataset", "DatasetError", "Query", "Shot", "Summary", "Video",
    "load_dataset", "save_dataset", "evaluate", "evaluate_multi", "iou", "ModelParams",
    "init_params", "summarize", "build_oracle",
]
