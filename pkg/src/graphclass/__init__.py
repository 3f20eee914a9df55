"""Generative node classification for directed graphs with text attributes."""

from .distributions import (
    SmoothedTable,
    ZeroInflatedDiscreteLogNormal,
    ZeroInflatedTruncPowerLaw,
    chi_square_gof,
    fit_zero_inflated,
    multinomial_log_pmf,
)
from .estimation import FitConfig, FitReport, ModelParams, fit_model, load_model, save_model
from .graph import DirectedGraph, GraphFormatError, LabelPartition, load_graph, nearest_labeled
from .inference import (
    DiscrepancyBreakdown,
    NodeView,
    PredictionHistory,
    discrepancies,
    initial_estimates,
    iterate_predictions,
    predict_map,
    predict_ml,
    select_iteration,
)
from .metrics import MetricsReport, evaluate

__all__ = [
    "DirectedGraph", "DiscrepancyBreakdown", "FitConfig", "FitReport", "GraphFormatError", "LabelPartition",
    "MetricsReport", "ModelParams", "NodeView", "PredictionHistory", "SmoothedTable",
    "ZeroInflatedDiscreteLogNormal", "ZeroInflatedTruncPowerLaw", "chi_square_gof", "discrepancies",
    "evaluate", "fit_model", "fit_zero_inflated", "initial_estimates", "iterate_predictions", "load_graph",
    "load_model", "multinomial_log_pmf", "nearest_labeled", "predict_map", "predict_ml", "save_model",
    "select_iteration",
]

__version__ = "0.1.0"
