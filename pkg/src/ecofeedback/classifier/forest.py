"""Random-forest efficiency classifier: training, prediction, persistence."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from ..clustering.ward import FEATURE_ORDER, N_FEATURES, feature_matrix
from ..errors import (
    CorruptModel,
    EmptyInput,
    SchemaMismatch,
    SingleClassData,
    UnlabeledData,
    VersionMismatch,
)
from ..telemetry import DrivingEvent, Label
from ..weather import WeatherCondition
from . import _kernels

SCHEMA_VERSION = 1
CLASSES = (Label.EFFICIENT, Label.INEFFICIENT)
_CLASS_INDEX = {label: i for i, label in enumerate(CLASSES)}


def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _kernels.MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _kernels.MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *path: int) -> int:
    """Child seed for a stream index path, splitmix64 style.

    Each step computes ``mix(parent + (index + 1) * golden_gamma)``, so tree
    ``t`` of a forest seeded ``s`` always gets ``derive_seed(s, t)`` no matter
    how the trees are scheduled.
    """
    z = seed & _kernels.MASK64
    for index in path:
        z = _mix64((z + (index + 1) * _kernels.GAMMA) & _kernels.MASK64)
    return z


@dataclass(frozen=True)
class ForestParams:
    ntree: int = 500
    mtry: int = 3
    min_leaf: int = 1
    max_depth: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.ntree < 1:
            raise ValueError("ntree must be positive")
        if not 1 <= self.mtry <= N_FEATURES:
            raise ValueError(f"mtry must be in [1, {N_FEATURES}]")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be positive")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be positive or None")

    def with_seed(self, seed: int) -> "ForestParams":
        return ForestParams(self.ntree, self.mtry, self.min_leaf, self.max_depth, seed)


@dataclass(frozen=True, eq=False)
class DecisionTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # (n_nodes, 2): Efficient, Inefficient

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def leaves(self, X: np.ndarray) -> np.ndarray:
        return _kernels.tree_leaves(self.feature, self.threshold, self.left, self.right, X)

    def vote_inefficient(self, X: np.ndarray) -> np.ndarray:
        """1 where the reached leaf's majority is Inefficient (ties count as Inefficient)."""
        c = self.counts[self.leaves(X)]
        return (c[:, 1] >= c[:, 0]).astype(np.int64)

    def to_dict(self) -> dict:
        def node(i: int) -> dict:
            if self.left[i] < 0:
                return {"counts": [int(self.counts[i, 0]), int(self.counts[i, 1])]}
            return {
                "feature": int(self.feature[i]),
                "threshold": float(self.threshold[i]),
                "left": node(int(self.left[i])),
                "right": node(int(self.right[i])),
            }

        return node(0)

    @classmethod
    def from_dict(cls, doc: dict) -> "DecisionTree":
        feature, threshold, left, right, counts = [], [], [], [], []
        stack = [(doc, None, None)]
        while stack:
            d, parent, side = stack.pop()
            i = len(feature)
            if parent is not None:
                (left if side == "left" else right)[parent] = i
            if "counts" in d:
                c = [int(v) for v in d["counts"]]
                if len(c) != 2 or min(c) < 0 or sum(c) <= 0:
                    raise ValueError(f"bad leaf counts {d['counts']!r}")
                feature.append(-1)
                threshold.append(0.0)
                counts.append(c)
            else:
                f = int(d["feature"])
                if not 0 <= f < N_FEATURES:
                    raise ValueError(f"split feature {f} out of range")
                feature.append(f)
                threshold.append(float(d["threshold"]))
                counts.append([0, 0])
                stack.append((d["right"], i, "right"))
                stack.append((d["left"], i, "left"))
            left.append(-1)
            right.append(-1)
        return cls(
            np.array(feature, np.int64),
            np.array(threshold, float),
            np.array(left, np.int64),
            np.array(right, np.int64),
            np.array(counts, np.int64).reshape(-1, 2),
        )


@dataclass(eq=False)
class ForestModel:
    trees: list[DecisionTree]
    params: ForestParams
    feature_order: tuple[str, ...] = FEATURE_ORDER
    oob_error: float | None = None
    training_size: int = 0
    schema_version: int = SCHEMA_VERSION
    severity_order: tuple[WeatherCondition, ...] | None = field(default=None)

    def _check_schema(self):
        if tuple(self.feature_order) != FEATURE_ORDER:
            raise SchemaMismatch(
                f"model features {list(self.feature_order)} differ from {list(FEATURE_ORDER)}"
            )

    def inefficient_votes(self, X: np.ndarray) -> np.ndarray:
        self._check_schema()
        X = np.ascontiguousarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != N_FEATURES:
            raise SchemaMismatch(f"expected {N_FEATURES} features per row, got shape {X.shape}")
        votes = np.zeros(X.shape[0], np.int64)
        for tree in self.trees:
            votes += tree.vote_inefficient(X)
        return votes

    def predict_matrix(self, X: np.ndarray) -> tuple[list[Label], np.ndarray]:
        """Majority vote per row; ties go to Inefficient. Returns labels and vote fractions."""
        votes = self.inefficient_votes(X)
        ntree = len(self.trees)
        inefficient = 2 * votes >= ntree
        winning = np.where(inefficient, votes, ntree - votes)
        labels = [Label.INEFFICIENT if b else Label.EFFICIENT for b in inefficient]
        return labels, winning / ntree


def _labels_to_targets(events: Sequence[DrivingEvent]) -> np.ndarray:
    if not events:
        raise EmptyInput("no training events")
    try:
        y = np.array([_CLASS_INDEX[e.label] for e in events], np.int64)
    except KeyError:
        raise UnlabeledData("training events must all be Efficient or Inefficient") from None
    return y


def fit_forest(X: np.ndarray, y: np.ndarray, params: ForestParams = ForestParams()) -> ForestModel:
    """Train on a feature matrix and 0/1 targets (1 = Inefficient)."""
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[1] != N_FEATURES:
        raise SchemaMismatch(f"expected {N_FEATURES} features per row, got shape {X.shape}")
    if X.shape[0] == 0:
        raise EmptyInput("no training rows")
    if not np.isfinite(X).all():
        raise ValueError("training features contain non-finite values")
    if len(np.unique(y)) < 2:
        raise SingleClassData("training data contains a single class")
    n = X.shape[0]
    max_depth = params.max_depth or 0

    trees = []
    oob_votes = np.zeros(n, np.int64)
    oob_total = np.zeros(n, np.int64)
    for t in range(params.ntree):
        seed = np.uint64(derive_seed(params.seed, t))
        feat, thr, left, right, counts, boot = _kernels.grow_tree(
            X, y, seed, params.mtry, params.min_leaf, max_depth
        )
        tree = DecisionTree(feat, thr, left, right, counts)
        trees.append(tree)
        oob = np.ones(n, bool)
        oob[boot] = False
        if oob.any():
            oob_votes[oob] += tree.vote_inefficient(X[oob])
            oob_total[oob] += 1

    seen = oob_total > 0
    oob_error = None
    if seen.any():
        pred = (2 * oob_votes[seen] >= oob_total[seen]).astype(np.int64)
        oob_error = float(np.mean(pred != y[seen]))
    return ForestModel(trees, params, FEATURE_ORDER, oob_error, n)


def train_forest(
    events: Sequence[DrivingEvent],
    params: ForestParams = ForestParams(),
    severity_order: Sequence[WeatherCondition] | None = None,
) -> ForestModel:
    y = _labels_to_targets(events)
    model = fit_forest(feature_matrix(events, severity_order), y, params)
    model.severity_order = tuple(severity_order) if severity_order is not None else None
    return model


def predict(model: ForestModel, event: DrivingEvent) -> tuple[Label, float]:
    labels, fractions = predict_many(model, [event])
    return labels[0], float(fractions[0])


def predict_many(
    model: ForestModel, events: Sequence[DrivingEvent]
) -> tuple[list[Label], np.ndarray]:
    if not events:
        return [], np.empty(0)
    return model.predict_matrix(feature_matrix(events, model.severity_order))


# -- persistence -------------------------------------------------------------


def model_to_dict(model: ForestModel) -> dict:
    return {
        "schema_version": model.schema_version,
        "params": asdict(model.params),
        "feature_order": list(model.feature_order),
        "classes": [c.value for c in CLASSES],
        "oob_error": model.oob_error,
        "training_size": model.training_size,
        "severity_order": (
            None if model.severity_order is None else [w.value for w in model.severity_order]
        ),
        "trees": [t.to_dict() for t in model.trees],
    }


def model_from_dict(doc: Any) -> ForestModel:
    if not isinstance(doc, dict) or "schema_version" not in doc:
        raise CorruptModel("model document lacks schema_version")
    version = doc["schema_version"]
    if not isinstance(version, int) or isinstance(version, bool):
        raise CorruptModel(f"bad schema_version {version!r}")
    if version != SCHEMA_VERSION:
        raise VersionMismatch(f"model schema_version {version}; this build reads {SCHEMA_VERSION}")
    try:
        params = ForestParams(**doc["params"])
        if doc["classes"] != [c.value for c in CLASSES]:
            raise ValueError(f"unexpected classes {doc['classes']!r}")
        trees = [DecisionTree.from_dict(t) for t in doc["trees"]]
        if len(trees) != params.ntree:
            raise ValueError(f"expected {params.ntree} trees, found {len(trees)}")
        order = doc.get("severity_order")
        return ForestModel(
            trees=trees,
            params=params,
            feature_order=tuple(doc["feature_order"]),
            oob_error=None if doc["oob_error"] is None else float(doc["oob_error"]),
            training_size=int(doc["training_size"]),
            schema_version=version,
            severity_order=None if order is None else tuple(WeatherCondition.parse(w) for w in order),
        )
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise CorruptModel(f"malformed model document: {exc}") from None


def dumps_model(model: ForestModel) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True, separators=(",", ":")) + "\n"


def save_model(model: ForestModel, path: str | Path) -> None:
    Path(path).write_text(dumps_model(model), encoding="utf-8")


def load_model(path: str | Path) -> ForestModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptModel(f"{path}: not a readable model file ({exc})") from None
    except RecursionError:
        raise CorruptModel(f"{path}: model nesting too deep") from None
    return model_from_dict(doc)
