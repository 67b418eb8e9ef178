"""Bidirectional inference networks.

Moment-propagating probabilistic subnetworks chained along a factorized
joint distribution, trained by maximum likelihood plus composite-likelihood
terms, and queried by gradient-based inference over arbitrary subsets of
variables given the rest.
"""

from ._core import (
    BinferError,
    BinModel,
    Dataset,
    InferenceEngine,
    InferenceOptions,
    InferenceResult,
    ScalarMoments,
    TrainConfig,
    TrainReport,
    VariableSpec,
    VarKind,
    cbin_train,
    gaussian_nll,
    gen_gaussian_chain,
    gen_shhs_surrogate,
    gen_toy_line,
    load_checkpoint,
    load_dermatology,
    make_chain_model,
    marginal_nll,
    metric_accuracy,
    metric_rmse,
    npn_linear_scalar,
    relu_moments,
    warmup_train,
)

__all__ = [
    "BinferError",
    "BinModel",
    "Dataset",
    "InferenceEngine",
    "InferenceOptions",
    "InferenceResult",
    "ScalarMoments",
    "TrainConfig",
    "TrainReport",
    "VariableSpec",
    "VarKind",
    "cbin_train",
    "gaussian_nll",
    "gen_gaussian_chain",
    "gen_shhs_surrogate",
    "gen_toy_line",
    "load_checkpoint",
    "load_dermatology",
    "make_chain_model",
    "marginal_nll",
    "metric_accuracy",
    "metric_rmse",
    "npn_linear_scalar",
    "relu_moments",
    "warmup_train",
]
