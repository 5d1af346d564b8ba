"""Skeleton motion prediction by snippet segmentation, transitional-pose prediction and refinement."""
from .io import Corpus, load_corpus, read_motion, synthetic_corpus, write_motion
from .model import ModelConfig, SnippetToMotion, load_checkpoint, save_checkpoint
from .segment import Segmentation, segment_history, shared_transitions
from .skeleton import MotionSequence, Skeleton
from .train import TrainConfig, evaluate, fit

__all__ = [
    "Corpus", "load_corpus", "read_motion", "synthetic_corpus", "write_motion",
    "ModelConfig", "SnippetToMotion", "load_checkpoint", "save_checkpoint",
    "Segmentation", "segment_history", "shared_transitions",
    "MotionSequence", "Skeleton",
    "TrainConfig", "evaluate", "fit",
]
__version__ = "0.1.0"
