"""Random-forest classification of driving events."""

from .forest import (
    CLASSES,
    DecisionTree,
    ForestModel,
    ForestParams,
    derive_seed,
    dumps_model,
    fit_forest,
    load_model,
    predict,
    predict_many,
    save_model,
    train_forest,
)
from .metrics import EvaluationReport, compute_metrics, cross_validate, stratified_folds

__all__ = [
    "CLASSES",
    "DecisionTree",
    "EvaluationReport",
    "ForestModel",
    "ForestParams",
    "compute_metrics",
    "cross_validate",
    "derive_seed",
    "dumps_model",
    "fit_forest",
    "load_model",
    "predict",
    "predict_many",
    "save_model",
    "stratified_folds",
    "train_forest",
]
