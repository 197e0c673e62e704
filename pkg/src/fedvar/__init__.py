"""Federated optimization with variance-triggered synchronization.

Clients train locally and, instead of stopping after a fixed number of
steps, keep going until a cheap sketch-based estimate of the spread of
their models crosses an adaptive threshold.
"""

from .config import ConfigError, ExperimentConfig, load_config, parse_config, serialize_config
from .data import CohortSpec, Dataset, FederatedDataset, PartitionSpec, dirichlet_partition, sample_cohort, synth_generate
from .engine import Algorithm, EngineConfig, RoundRecord, Simulator, communication_bytes, run_training
from .models import ModelKind, ModelSpec
from .optim import OptimizerSpec, OptKind
from .sketch import SketchConfig, combine, estimate_f2, sketch
from .variance import estimate_variance, exact_variance, threshold_adjust

__version__ = "0.1.0"

__all__ = [
    "Algorithm",
    "CohortSpec",
    "ConfigError",
    "Dataset",
    "EngineConfig",
    "ExperimentConfig",
    "FederatedDataset",
    "ModelKind",
    "ModelSpec",
    "OptKind",
    "OptimizerSpec",
    "PartitionSpec",
    "RoundRecord",
    "Simulator",
    "SketchConfig",
    "combine",
    "communication_bytes",
    "dirichlet_partition",
    "estimate_f2",
    "estimate_variance",
    "exact_variance",
    "load_config",
    "parse_config",
    "run_training",
    "sample_cohort",
    "serialize_config",
    "sketch",
    "synth_generate",
    "threshold_adjust",
]
