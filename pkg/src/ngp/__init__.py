"""Greedy forward feature selection driven by retrained predictors."""

__version__ = "0.1.0"

from .data import (DataSplit, Dataset, ScalingParams, load_csv, load_idx, restrict,
                   split, standardize)
from .predictor import (PredictorSpec, TrainedPredictor, constant_baseline_loss,
                        evaluate_loss, fit, predict)
from .pursuit import (NgpConfig, SelectionResult, evaluate_candidates, greedy_choice,
                      ngp_group_select, ngp_select, should_stop)

__all__ = [
    "DataSplit", "Dataset", "ScalingParams", "load_csv", "load_idx", "restrict", "split",
    "standardize", "PredictorSpec", "TrainedPredictor", "constant_baseline_loss",
    "evaluate_loss", "fit", "predict", "NgpConfig", "SelectionResult",
    "evaluate_candidates", "greedy_choice", "ngp_group_select", "ngp_select", "should_stop",
]
