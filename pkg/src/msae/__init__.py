"""Convolutional autoencoder image classification with multispace
reconstruction, hand-rolled backpropagation, Adam optimization and a
benchmark harness."""

from .multispace import MultispaceImage, multispace_reconstruct
from .network import Network, NetworkConfig, forward_autoencode, forward_classify, init_network
from .objective import LossReport, PrevOutputBuffer
from .optimizer import AdamConfig, AdamState, adam_converged, adam_init, adam_step
from .pipeline import (
    BenchmarkRecord,
    Dataset,
    Metrics,
    benchmark_sweep,
    confidence_interval,
    evaluate,
    extract_patches,
    preprocess,
    synth_dataset,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AdamConfig",
    "AdamState",
    "BenchmarkRecord",
    "Dataset",
    "LossReport",
    "Metrics",
    "MultispaceImage",
    "Network",
    "NetworkConfig",
    "PrevOutputBuffer",
    "adam_converged",
    "adam_init",
    "adam_step",
    "benchmark_sweep",
    "confidence_interval",
    "evaluate",
    "extract_patches",
    "forward_autoencode",
    "forward_classify",
    "init_network",
    "multispace_reconstruct",
    "preprocess",
    "synth_dataset",
    "train",
]
