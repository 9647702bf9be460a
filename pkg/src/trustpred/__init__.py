"""Trustworthiness predictors: confidence losses, a linear oracle head and its evaluation."""

from ._backend import NAME as KERNEL_BACKEND
from .analysis import (
    BoundInput,
    GaussianFit,
    avg_kl,
    bhattacharyya,
    fit_gaussian,
    generalization_bound,
    grad_norm_stats,
    histogram,
    kl_gaussian,
    separability,
)
from .data_io import Dataset, SynthConfig, derive_rng, load_csv, load_dataset, save_dataset, split, synth_generate
from .errors import (
    ConfigError,
    DataError,
    DatasetFormatError,
    MissingPStarError,
    NumericAbort,
    TrustpredError,
    UndefinedMetricError,
)
from .losses import LossKind, LossSpec, Wrapper, batch_loss, loss_one, loss_range_max
from .metrics import ThresholdPolicy, aupr, auc, fpr_at_tpr, full_report, risk_coverage, tpr_tnr
from .oracle import HeadMode, OracleHead, TrainConfig, confidences, forward, init_head, sweep_alpha, train

__version__ = "0.1.0"
