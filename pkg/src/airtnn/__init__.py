"""Over-the-air topological neural networks on order-2 cell complexes."""

__version__ = "0.1.0"

from .channel import AirShiftRealization, ChannelConfig, IDEAL_CHANNEL, ShiftSequence, air_shift, multi_shift, noise_sigma
from .dataset import DatasetConfig, SourceLocDataset, generate, load_dataset, save_dataset
from .estimator import AirTNNClassifier
from .nn import ModelParams, ModelSpec, ShiftContext, TrainConfig, evaluate, train
from .topology import (
    CellComplex2,
    Graph,
    ShiftKind,
    ShiftOperator,
    cycle_basis_paton,
    edge_partition,
    lift_to_complex,
    load_complex,
    save_complex,
    sbm_generate,
    shift_operator,
    spectral_norm,
)

__all__ = [
    "AirShiftRealization",
    "AirTNNClassifier",
    "CellComplex2",
    "ChannelConfig",
    "DatasetConfig",
    "Graph",
    "IDEAL_CHANNEL",
    "ModelParams",
    "ModelSpec",
    "ShiftContext",
    "ShiftKind",
    "ShiftOperator",
    "ShiftSequence",
    "SourceLocDataset",
    "TrainConfig",
    "air_shift",
    "cycle_basis_paton",
    "edge_partition",
    "evaluate",
    "generate",
    "lift_to_complex",
    "load_complex",
    "load_dataset",
    "multi_shift",
    "noise_sigma",
    "save_complex",
    "save_dataset",
    "sbm_generate",
    "shift_operator",
    "spectral_norm",
    "train",
]
