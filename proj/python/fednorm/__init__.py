"""FedAvg simulator with swappable normalization layers."""

from ._core import (
    ClientShard,
    ConfigError,
    ConvBlockConfig,
    Dataset,
    DatasetKind,
    ExperimentSpec,
    ExperimentSummary,
    FedConfig,
    FederationResult,
    FormatError,
    ModelConfig,
    NormAlgo,
    NormKind,
    NumericError,
    ParsedConfig,
    PartitionKind,
    RngStream,
    RoundReport,
    ShapeError,
    SyntheticSpec,
    ValueError,
    Weighting,
    load_cifar10,
    load_mnist,
    normalize_dataset,
    parse_config,
    parse_config_file,
    partition_covariate_shift,
    partition_labels_skew,
    partition_uniform,
    run_experiment,
    run_federation,
    run_sweep,
    synthetic_dataset,
    synthetic_train_test,
)

__all__ = [
    "ClientShard",
    "ConfigError",
    "ConvBlockConfig",
    "Dataset",
    "DatasetKind",
    "ExperimentSpec",
    "ExperimentSummary",
    "FedConfig",
    "FederationResult",
    "FormatError",
    "ModelConfig",
    "NormAlgo",
    "NormKind",
    "NumericError",
    "ParsedConfig",
    "PartitionKind",
    "RngStream",
    "RoundReport",
    "ShapeError",
    "SyntheticSpec",
    "ValueError",
    "Weighting",
    "load_cifar10",
    "load_mnist",
    "normalize_dataset",
    "parse_config",
    "parse_config_file",
    "partition_covariate_shift",
    "partition_labels_skew",
    "partition_uniform",
    "run_experiment",
    "run_federation",
    "run_sweep",
    "synthetic_dataset",
    "synthetic_train_test",
]
