"""Scaling-law fitting and graph-data accounting for graph-learning experiments."""

__version__ = "0.1.0"

from .analysis import (
    LossCurve,
    compare_depth_curves,
    compare_overfitting,
    detect_collapse,
    detect_overfitting,
    extrapolate,
)
from .fitting import FitConfig, FitResult, FitStatus, bootstrap_ci, fit, fit_arrays, generate_synthetic, r_squared
from .graphs import (
    GraphManifest,
    GraphRecord,
    MessagePassingCost,
    flops_forward,
    split_equal_edges,
    split_equal_graphs,
    subsample_fraction,
    total_edges,
)
from .models import (
    ParamSet,
    ScalingForm,
    eval_basic_error,
    eval_combined_error,
    eval_combined_score,
    eval_shifted_error,
    eval_shifted_score,
    evaluate,
    grad_params,
)
from .records import ExperimentRecord
