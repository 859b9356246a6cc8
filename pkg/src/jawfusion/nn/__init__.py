from .layers import (
    BGRU,
    ChannelNorm,
    Conv1D,
    Dense,
    Dropout,
    Flatten,
    GruCell,
    Layer,
    MaxPool1D,
    Rescale,
    glorot_uniform,
)
from .graph import LayerGraph, HeadSpec
from .checkpoint import load_graph, save_graph, quantize_weights

__all__ = [
    "Layer", "Dense", "Conv1D", "MaxPool1D", "Flatten", "Rescale",
    "ChannelNorm", "Dropout", "GruCell", "BGRU", "glorot_uniform",
    "LayerGraph", "HeadSpec", "save_graph", "load_graph", "quantize_weights",
]
