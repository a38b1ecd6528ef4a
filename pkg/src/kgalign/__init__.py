"""Entity alignment between two knowledge graphs."""

from .config import PipelineConfig
from .eval import EvalReport, evaluate
from .kg import AlignmentSet, KnowledgeGraph, load_alignment, load_kg, split_seed
from .pipeline import run_pipeline
from .sparse import SparseSimMatrix
from .train import EmbeddingMatrix, TrainConfig, train_embeddings

__version__ = "0.1.0"

__all__ = [
    "AlignmentSet", "EmbeddingMatrix", "EvalReport", "KnowledgeGraph", "PipelineConfig", "SparseSimMatrix",
    "TrainConfig", "evaluate", "load_alignment", "load_kg", "run_pipeline", "split_seed", "train_embeddings",
]
