"""Quantum-inspired voxel-connectivity encoder.

A compact library and CLI that encodes brain-voxel vectors through a stack
of learnable connectivity blocks, aligns the resulting embeddings to
external targets with a symmetric contrastive loss, and validates the
closed-form layer against an exact two-qubit simulation.
"""

from .errors import (
    ConfigError,
    DataError,
    DimensionError,
    DomainError,
    FixtureError,
    FormatError,
    InvariantError,
    NumericalError,
    QbrnError,
    RangeError,
)
from .model import AblationFlags, EncoderParams, encode, encode_backward, init_params
from .qlayer import BlockParams, ConstrainedParams, layer_forward, pair_connectivity
from .train import TrainConfig, train_loop

__all__ = [
    "AblationFlags",
    "BlockParams",
    "ConfigError",
    "ConstrainedParams",
    "DataError",
    "DimensionError",
    "DomainError",
    "EncoderParams",
    "FixtureError",
    "FormatError",
    "InvariantError",
    "NumericalError",
    "QbrnError",
    "RangeError",
    "TrainConfig",
    "encode",
    "encode_backward",
    "init_params",
    "layer_forward",
    "pair_connectivity",
    "train_loop",
]

__version__ = "0.1.0"
