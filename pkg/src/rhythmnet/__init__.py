"""Residual 1D convolutional networks for ECG rhythm sequence labeling,
with hand-derived gradients, a synthetic corpus generator, and F1 scoring."""

__version__ = "0.1.0"

from .data import CLASS_NAMES, EcgRecord, RhythmClass
from .estimator import RhythmNetClassifier
from .network import NetworkConfig

__all__ = [
    "CLASS_NAMES",
    "EcgRecord",
    "NetworkConfig",
    "RhythmClass",
    "RhythmNetClassifier",
    "__version__",
]
