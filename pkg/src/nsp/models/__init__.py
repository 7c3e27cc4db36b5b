from .base import (
    BackgroundModel,
    ClusterModel,
    MarkModel,
    NoMarks,
    background_log_density,
    resample_background_rate,
    sample_background_points,
)
from .document import DocumentMarks, DocumentModel, DocumentModelConfig
from .gaussian import GaussianModel, GaussianModelConfig
from .sequence import NeuronMarks, SequenceModel, SequenceModelConfig, default_warp_grid

__all__ = [
    "BackgroundModel", "ClusterModel", "MarkModel", "NoMarks",
    "background_log_density", "resample_background_rate", "sample_background_points",
    "DocumentMarks", "DocumentModel", "DocumentModelConfig",
    "GaussianModel", "GaussianModelConfig",
    "NeuronMarks", "SequenceModel", "SequenceModelConfig", "default_warp_grid",
]
