"""Per-journey Ward clustering and rule-based labeling of driving events."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..telemetry import DrivingEvent, Label
from .labeling import (
    ClusterSummary,
    LabelRuleConfig,
    Overrides,
    label_clusters,
    load_overrides,
    parse_overrides,
    summarize_cluster,
    write_cluster_report,
)
from .ward import (
    FEATURE_ORDER,
    Dendrogram,
    Merge,
    StandardizationStats,
    cut_dendrogram,
    feature_matrix,
    feature_vector,
    pairwise_euclidean,
    standardize,
    standardize_matrix,
    ward_cluster,
)

logger = logging.getLogger(__name__)

__all__ = [
    "FEATURE_ORDER",
    "ClusterSummary",
    "ClusteringParams",
    "Dendrogram",
    "JourneyClustering",
    "LabelRuleConfig",
    "Merge",
    "StandardizationStats",
    "cluster_journey",
    "cut_dendrogram",
    "feature_matrix",
    "feature_vector",
    "label_clusters",
    "load_overrides",
    "pairwise_euclidean",
    "parse_overrides",
    "standardize",
    "standardize_matrix",
    "summarize_cluster",
    "ward_cluster",
    "write_cluster_report",
]


@dataclass(frozen=True)
class ClusteringParams:
    k: int | None = 7
    height: float | None = None
    min_events: int = 10

    def __post_init__(self):
        if (self.k is None) == (self.height is None):
            raise ValueError("set exactly one of k or height")
        if self.min_events < 2:
            raise ValueError("min_events must be at least 2")


@dataclass
class JourneyClustering:
    journey_id: str
    events: list[DrivingEvent]
    summaries: list[ClusterSummary] = field(default_factory=list)
    assignment: np.ndarray | None = None
    dendrogram: Dendrogram | None = None

    @property
    def skipped(self) -> bool:
        return self.dendrogram is None


def cluster_journey(
    events: Sequence[DrivingEvent],
    params: ClusteringParams = ClusteringParams(),
    rules: LabelRuleConfig | None = None,
    overrides: Overrides | None = None,
) -> JourneyClustering:
    """Standardize, cluster, cut, summarize and label one journey's events.

    Journeys shorter than ``params.min_events`` are returned unlabeled. With a
    ``k`` cut, zero-height merges are never undone, so identical events always
    share a cluster.
    """
    rules = rules or LabelRuleConfig.default()
    journey_id = events[0].journey_id if events else ""
    if len(events) < params.min_events:
        logger.warning(
            "journey %s has %d events (< %d); left unlabeled",
            journey_id, len(events), params.min_events,
        )
        return JourneyClustering(journey_id, [e.with_label(Label.UNLABELED) for e in events])

    Z, _ = standardize(events, rules.severity_order)
    tree = ward_cluster(Z)
    if params.k is not None:
        positive = int(np.sum(tree.heights > 0))
        k = min(params.k, len(events), positive + 1)
        assignment = cut_dendrogram(tree, k=k)
    else:
        assignment = cut_dendrogram(tree, h=params.height)

    summaries = []
    for cid in range(1, int(assignment.max()) + 1):
        members = [e for e, a in zip(events, assignment) if a == cid]
        summaries.append(
            summarize_cluster(
                members, cid, severity_order=rules.severity_order, journey_id=journey_id
            )
        )
    summaries = label_clusters(summaries, rules, overrides)
    by_id = {s.cluster_id: s.label for s in summaries}
    labeled = [e.with_label(by_id[int(a)]) for e, a in zip(events, assignment)]
    return JourneyClustering(journey_id, labeled, summaries, assignment, tree)
