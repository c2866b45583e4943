"""Feature encoding, standardization and Ward-linkage agglomeration."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import InsufficientData, InvalidK
from ..telemetry import DrivingEvent
from ..weather import WeatherCondition, severity_rank

FEATURE_ORDER = (
    "avg_speed",
    "avg_acceleration",
    "is_idling",
    "elevation_change",
    "hour",
    "weather_severity",
)
N_FEATURES = len(FEATURE_ORDER)


def feature_vector(
    event: DrivingEvent, severity_order: Sequence[WeatherCondition] | None = None
) -> np.ndarray:
    return np.array(
        [
            event.avg_speed,
            event.avg_acceleration,
            1.0 if event.is_idling else 0.0,
            event.elevation_change,
            float(event.hour),
            float(severity_rank(event.weather, severity_order)),
        ]
    )


def feature_matrix(
    events: Sequence[DrivingEvent], severity_order: Sequence[WeatherCondition] | None = None
) -> np.ndarray:
    if not events:
        return np.empty((0, N_FEATURES))
    return np.vstack([feature_vector(e, severity_order) for e in events])


@dataclass(frozen=True)
class StandardizationStats:
    mean: np.ndarray
    std: np.ndarray  # 0 marks a zero-variance column

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        scale = np.where(self.std > 0, self.std, 1.0)
        Z = (X - self.mean) / scale
        Z[:, self.std == 0] = 0.0
        return Z

    def inverse(self, Z: np.ndarray) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.std + self.mean


def standardize_matrix(X: np.ndarray) -> tuple[np.ndarray, StandardizationStats]:
    """Z-score each column with its sample (n-1) standard deviation.

    Constant columns map to zeros instead of dividing by zero.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise InsufficientData(f"standardization needs at least 2 rows, got {X.shape[0]}")
    if not np.isfinite(X).all():
        raise ValueError("feature matrix contains non-finite values")
    mean = X.mean(axis=0)
    std = X.std(axis=0, ddof=1)
    std[np.ptp(X, axis=0) == 0] = 0.0
    stats = StandardizationStats(mean, std)
    return stats.apply(X), stats


def standardize(
    events: Sequence[DrivingEvent], severity_order: Sequence[WeatherCondition] | None = None
) -> tuple[np.ndarray, StandardizationStats]:
    if len(events) < 2:
        raise InsufficientData(f"standardization needs at least 2 events, got {len(events)}")
    return standardize_matrix(feature_matrix(events, severity_order))


def pairwise_euclidean(a: Sequence[float], b: Sequence[float]) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.sum((a - b) ** 2)))


@dataclass(frozen=True)
class Merge:
    left: int
    right: int
    height: float
    size: int


@dataclass(frozen=True)
class Dendrogram:
    """Merge tree; leaves are ``0..n-1`` and merge ``t`` creates node ``n + t``."""

    n_leaves: int
    merges: tuple[Merge, ...]

    @property
    def heights(self) -> np.ndarray:
        return np.array([m.height for m in self.merges])

    def to_linkage(self) -> np.ndarray:
        """SciPy-style ``(n-1, 4)`` linkage matrix."""
        return np.array([[m.left, m.right, m.height, m.size] for m in self.merges], dtype=float)


def _squared_distances(X: np.ndarray) -> np.ndarray:
    n = X.shape[0]
    D = np.empty((n, n))
    for i in range(n):
        diff = X - X[i]
        D[i] = np.einsum("ij,ij->i", diff, diff)
    return D


def ward_cluster(vectors: np.ndarray | Sequence[Sequence[float]]) -> Dendrogram:
    """Agglomerate with Ward's minimum-variance criterion.

    Works on squared Euclidean distances with the Lance-Williams update and
    reports heights on the distance scale (R's ``ward.D2``), i.e. each height
    is ``sqrt(2 * increase in within-cluster sum of squares)``. Among merges
    of equal cost the pair with the smallest ``(min node id, max node id)``
    wins.
    """
    X = np.asarray(vectors, dtype=float)
    if X.ndim != 2:
        raise ValueError("expected a 2-D array of feature vectors")
    n = X.shape[0]
    if n < 2:
        raise InsufficientData(f"clustering needs at least 2 vectors, got {n}")
    if not np.isfinite(X).all():
        raise ValueError("feature vectors contain non-finite values")

    D = _squared_distances(X)
    np.fill_diagonal(D, np.inf)
    size = np.ones(n)
    node = np.arange(n)  # slot -> current node id
    merges: list[Merge] = []

    for step in range(n - 1):
        best = D.min()
        slots = np.argwhere(D == best)
        slots = slots[slots[:, 0] < slots[:, 1]]
        ids = np.sort(node[slots], axis=1)
        pick = np.lexsort((ids[:, 1], ids[:, 0]))[0]
        i, j = slots[pick]
        lo, hi = ids[pick]

        ni, nj = size[i], size[j]
        dij = D[i, j]
        total = size + ni + nj
        updated = ((size + ni) * D[i] + (size + nj) * D[j] - size * dij) / total

        D[i, :] = updated
        D[:, i] = updated
        D[j, :] = np.inf
        D[:, j] = np.inf
        D[i, i] = np.inf
        size[i] = ni + nj
        size[j] = 0
        node[i] = n + step
        node[j] = -1

        merges.append(Merge(int(lo), int(hi), float(np.sqrt(max(best, 0.0))), int(ni + nj)))

    return Dendrogram(n, tuple(merges))


def cut_dendrogram(d: Dendrogram, k: int | None = None, h: float | None = None) -> np.ndarray:
    """Flat clusters from the tree, numbered ``1..k`` by lowest member index.

    Pass either ``k`` (undo the last ``k-1`` merges) or ``h`` (undo every
    merge higher than ``h``).
    """
    n = d.n_leaves
    if (k is None) == (h is None):
        raise InvalidK("pass exactly one of k or h")
    if h is not None:
        if not h >= 0:
            raise InvalidK(f"cut height must be non-negative, got {h}")
        k = n - sum(1 for m in d.merges if m.height <= h)
    if isinstance(k, bool) or int(k) != k or not 1 <= k <= n:
        raise InvalidK(f"k must be an integer in [1, {n}], got {k}")
    k = int(k)

    members: dict[int, list[int]] = {i: [i] for i in range(n)}
    for t, m in enumerate(d.merges[: n - k]):
        members[n + t] = members.pop(m.left) + members.pop(m.right)

    groups = sorted((min(v), v) for v in members.values())
    assignment = np.empty(n, dtype=int)
    for cluster_id, (_, leaves) in enumerate(groups, start=1):
        assignment[leaves] = cluster_id
    return assignment
