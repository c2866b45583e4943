"""Evaluation statistics and stratified k-fold cross-validation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ..errors import EmptyInput, TooFewSamples
from ..telemetry import DrivingEvent, Label
from ..weather import WeatherCondition
from .forest import CLASSES, ForestParams, derive_seed, predict_many, train_forest

logger = logging.getLogger(__name__)

_FOLD_STREAM = 0xF01D
_TRAIN_STREAM = 0x7EE5


@dataclass(frozen=True)
class EvaluationReport:
    accuracy: float
    kappa: float
    mean_absolute_error: float
    root_mean_squared_error: float
    relative_absolute_error: float | None
    root_relative_squared_error: float | None
    precision: float
    recall: float
    confusion_matrix: tuple[tuple[int, int], tuple[int, int]]  # rows true, cols predicted

    @property
    def n(self) -> int:
        return sum(map(sum, self.confusion_matrix))

    def to_dict(self) -> dict:
        """Keys follow the usual classifier-statistics table wording."""
        return {
            "Accuracy": self.accuracy,
            "Kappa statistic": self.kappa,
            "Mean absolute error": self.mean_absolute_error,
            "Root mean squared error": self.root_mean_squared_error,
            "Relative absolute error": self.relative_absolute_error,
            "Root relative squared error": self.root_relative_squared_error,
            "Precision": self.precision,
            "Recall": self.recall,
            "Confusion matrix": {
                "classes": [c.value for c in CLASSES],
                "rows": "true",
                "columns": "predicted",
                "counts": [list(r) for r in self.confusion_matrix],
            },
        }

    def to_table(self) -> str:
        def pct(v):
            return "n/a" if v is None else f"{100 * v:.2f}%"

        rows = [
            ("Accuracy", pct(self.accuracy)),
            ("Kappa statistic", f"{self.kappa:.4f}"),
            ("Mean absolute error", f"{self.mean_absolute_error:.4f}"),
            ("Root mean squared error", f"{self.root_mean_squared_error:.4f}"),
            ("Relative absolute error", pct(self.relative_absolute_error)),
            ("Root relative squared error", pct(self.root_relative_squared_error)),
            ("Precision", f"{self.precision:.3f}"),
            ("Recall", f"{self.recall:.3f}"),
        ]
        width = max(len(r[0]) for r in rows)
        return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)


def _index(label: Label) -> int:
    if label is Label.EFFICIENT:
        return 0
    if label is Label.INEFFICIENT:
        return 1
    raise ValueError(f"metrics need Efficient/Inefficient labels, got {label}")


def compute_metrics(predictions: Iterable[tuple[Label, Label, float]]) -> EvaluationReport:
    """Statistics over ``(true, predicted, probability of predicted)`` triples.

    The probabilistic errors use the probability assigned to the true class,
    ``1 - e`` per row; relative errors divide by the same errors of a
    predictor that always outputs the class frequencies of this sample.
    Precision and recall are per-class values weighted by true support.
    """
    rows = list(predictions)
    if not rows:
        raise EmptyInput("no predictions to evaluate")
    t = np.array([_index(r[0]) for r in rows])
    p = np.array([_index(r[1]) for r in rows])
    prob = np.array([float(r[2]) for r in rows])
    if ((prob < 0) | (prob > 1)).any():
        raise ValueError("predicted probabilities must lie in [0, 1]")
    n = len(rows)

    cm = np.zeros((2, 2), np.int64)
    np.add.at(cm, (t, p), 1)
    p_o = np.trace(cm) / n
    true_share = cm.sum(axis=1) / n
    pred_share = cm.sum(axis=0) / n
    p_e = float(np.dot(true_share, pred_share))
    if math.isclose(p_e, 1.0):
        logger.warning("chance agreement is 1; kappa reported as 0")
        kappa = 0.0
    else:
        kappa = (p_o - p_e) / (1.0 - p_e)

    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    diag = np.diag(cm)
    precision_c = np.divide(diag, predicted, out=np.zeros(2), where=predicted > 0)
    recall_c = np.divide(diag, support, out=np.zeros(2), where=support > 0)
    weights = support / n

    p_true = np.where(t == p, prob, 1.0 - prob)
    err = 1.0 - p_true
    mae = float(np.mean(np.abs(err)))
    rmse = float(np.sqrt(np.mean(err**2)))
    base_err = 1.0 - true_share[t]
    base_mae = float(np.mean(base_err))
    base_rmse = float(np.sqrt(np.mean(base_err**2)))

    return EvaluationReport(
        accuracy=float(p_o),
        kappa=float(kappa),
        mean_absolute_error=mae,
        root_mean_squared_error=rmse,
        relative_absolute_error=mae / base_mae if base_mae > 0 else None,
        root_relative_squared_error=rmse / base_rmse if base_rmse > 0 else None,
        precision=float(np.dot(weights, precision_c)),
        recall=float(np.dot(weights, recall_c)),
        confusion_matrix=tuple(tuple(int(v) for v in r) for r in cm),
    )


def stratified_folds(labels: Sequence[Label], k: int, seed: int) -> np.ndarray:
    """Fold number per sample; each class is shuffled then dealt round-robin."""
    rng = np.random.default_rng(derive_seed(seed, _FOLD_STREAM))
    fold = np.empty(len(labels), np.int64)
    position = 0
    for cls in CLASSES:
        members = np.array([i for i, lab in enumerate(labels) if lab is cls], np.int64)
        members = rng.permutation(members)
        fold[members] = (position + np.arange(len(members))) % k
        position += len(members)
    return fold


def cross_validate(
    events: Sequence[DrivingEvent],
    params: ForestParams = ForestParams(),
    k: int = 10,
    seed: int | None = None,
    severity_order: Sequence[WeatherCondition] | None = None,
) -> EvaluationReport:
    """Stratified k-fold CV with predictions pooled over all held-out folds."""
    n = len(events)
    if k < 2:
        raise TooFewSamples(f"need at least 2 folds, got {k}")
    if n < k:
        raise TooFewSamples(f"{n} events cannot fill {k} folds")
    seed = params.seed if seed is None else seed
    labels = [e.label for e in events]
    for lab in labels:
        _index(lab)
    fold = stratified_folds(labels, k, seed)

    pooled: list[tuple[Label, Label, float]] = []
    for f in range(k):
        train = [e for e, g in zip(events, fold) if g != f]
        test = [e for e, g in zip(events, fold) if g == f]
        model = train_forest(
            train, params.with_seed(derive_seed(seed, _TRAIN_STREAM, f)), severity_order
        )
        predicted, fractions = predict_many(model, test)
        pooled.extend(
            (e.label, lab, float(q)) for e, lab, q in zip(test, predicted, fractions)
        )
    return compute_metrics(pooled)
