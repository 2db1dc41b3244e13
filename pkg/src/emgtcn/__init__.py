"""Surface-EMG gesture recognition: preprocessing, an attention +
dilated-temporal-convolution classifier, training, and evaluation
statistics, all built on a small float64 autodiff core."""

from . import cli, data, errors, model, signal, stats, tensor, train
from .errors import EmgTcnError
from .model import AttentionTcn, ModelConfig, derive_config
from .signal import FilterParams, MuLawParams, SegmentSet, preprocess, segment
from .stats import aggregate, significance_band, wilcoxon_signed_rank
from .tensor import ComputationTape, Tensor
from .train import Adam, TrainConfig, cross_entropy

__all__ = [
    "cli", "data", "errors", "model", "signal", "stats", "tensor", "train",
    "EmgTcnError", "AttentionTcn", "ModelConfig", "derive_config",
    "FilterParams", "MuLawParams", "SegmentSet", "preprocess", "segment",
    "aggregate", "significance_band", "wilcoxon_signed_rank",
    "ComputationTape", "Tensor", "Adam", "TrainConfig", "cross_entropy",
]
__version__ = "0.1.0"
