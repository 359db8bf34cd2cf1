"""Test-time negative-semantics OOD detection over streaming embeddings."""

from .core import Rng, cosine, normalize
from .engine import EngineConfig, EngineState, StreamResult, process, run_stream, setup
from .inversion import InversionConfig, RandomInit, SyntheticEncoder, VocabularyPriorInit, invert
from .metrics import MetricReport, auroc, fpr95
from .scoring import ScoreConfig, group_score, make_grouping, neglabel_score
from .synthworld import StreamPlan, WorldSpec, build_stream, generate_world

__all__ = [
    "EngineConfig", "EngineState", "InversionConfig", "MetricReport", "RandomInit", "Rng",
    "ScoreConfig", "StreamPlan", "StreamResult", "SyntheticEncoder", "VocabularyPriorInit",
    "WorldSpec", "auroc", "build_stream", "cosine", "fpr95", "generate_world", "group_score",
    "invert", "make_grouping", "neglabel_score", "normalize", "process", "run_stream", "setup",
]
