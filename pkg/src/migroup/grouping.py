"""Pairwise dataset distances and the labeled three-way partition.

Two readings of the grouping step are shipped and cross-checked: nearest-
anchor categorization (each dataset keeps its score's category) and exact
1-D k-means over the scalar scores (dynamic programming over the sorted
sequence; optimal 1-D clusters are contiguous there). Disagreements between
the two are reported, never silently resolved.
"""

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import GroupingConflictError, InputError
from .scoring import CategoryBoundaries
from .types import (
    ALL_GROUP_LABELS,
    GROUP_LABELS,
    GroupAssignment,
    MiScoreReport,
    REDUNDANCY,
    SYNERGY,
    UNIQUENESS,
)

# score anchors per category; ordered so equidistant means resolve to the
# higher anchor deterministically
ANCHORS = ((REDUNDANCY, 2.0), (UNIQUENESS, 1.0), (SYNERGY, 0.0))


@dataclass(frozen=True)
class DistanceMatrix:
    dataset_ids: tuple[str, ...]
    entries: tuple[tuple[float, ...], ...]

    def distance(self, a: str, b: str) -> float:
        i = self.dataset_ids.index(a)
        j = self.dataset_ids.index(b)
        return self.entries[i][j]

    def to_json(self) -> dict:
        return {"dataset_ids": list(self.dataset_ids), "entries": [list(r) for r in self.entries]}

    @classmethod
    def from_json(cls, obj: dict) -> "DistanceMatrix":
        return cls(
            dataset_ids=tuple(obj["dataset_ids"]),
            entries=tuple(tuple(row) for row in obj["entries"]),
        )

    def write_csv(self, path: Path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["dataset_id", *self.dataset_ids])
            for ds_id, row in zip(self.dataset_ids, self.entries):
                writer.writerow([ds_id, *(f"{v:.12g}" for v in row)])


def distance_matrix(reports: Sequence[MiScoreReport]) -> DistanceMatrix:
    """Pairwise absolute differences of the dataset scores, in input order."""
    ids = [r.dataset_id for r in reports]
    if len(set(ids)) != len(ids):
        dupes = sorted({d for d in ids if ids.count(d) > 1})
        raise InputError(f"duplicate dataset ids: {dupes}")
    scores = [r.mi_score for r in reports]
    entries = tuple(
        tuple(abs(a - b) for b in scores) for a in scores
    )
    return DistanceMatrix(dataset_ids=tuple(ids), entries=entries)


def _ordered_groups(
    reports: Sequence[MiScoreReport], membership: dict[str, str]
) -> tuple[tuple[str, tuple[str, ...]], ...]:
    """Group members listed in report input order under fixed label order."""
    return tuple(
        (label, tuple(r.dataset_id for r in reports if membership[r.dataset_id] == label))
        for label in ALL_GROUP_LABELS
    )


def group_by_anchor(
    reports: Sequence[MiScoreReport], bounds: CategoryBoundaries
) -> GroupAssignment:
    """Place each dataset in the group of its score's category."""
    membership = {r.dataset_id: GROUP_LABELS[bounds.categorize(r.mi_score)] for r in reports}
    groups = _ordered_groups(reports, membership)
    anchor_value = {GROUP_LABELS[cat]: val for cat, val in ANCHORS}
    centroids = []
    for label, members in groups:
        scores = [r.mi_score for r in reports if r.dataset_id in members]
        centroids.append((label, math.fsum(scores) / len(scores) if scores else anchor_value[label]))
    return GroupAssignment(
        method="anchor", groups=groups, centroids=tuple(centroids), disagreements=()
    )


def cluster_scores_1d(values: Sequence[float], k: int) -> list[list[int]]:
    """Exact minimum within-cluster sum of squares partition of 1-D values.

    Returns k lists of indices into ``values``, ordered by ascending cluster
    value. Clusters are contiguous in sorted order; ties between equal-cost
    partitions resolve to the earliest boundaries (fewest members in the
    lowest cluster, then the next, and so on).
    """
    n = len(values)
    if k < 1:
        raise InputError("k must be >= 1")
    if n < k:
        raise InputError(f"need at least {k} values to form {k} clusters, got {n}")

    order = sorted(range(n), key=lambda i: (values[i], i))  # stable for equal scores
    xs = [float(values[i]) for i in order]

    prefix = [0.0] * (n + 1)
    prefix_sq = [0.0] * (n + 1)
    for i, x in enumerate(xs):
        prefix[i + 1] = prefix[i] + x
        prefix_sq[i + 1] = prefix_sq[i] + x * x

    def seg_cost(i: int, j: int) -> float:
        # sum of squared deviations from the mean over xs[i..j]
        cnt = j - i + 1
        s = prefix[j + 1] - prefix[i]
        sq = prefix_sq[j + 1] - prefix_sq[i]
        return max(sq - s * s / cnt, 0.0)

    # best[m][i]: optimal cost of clustering xs[i:] into m clusters
    # choice[m][i]: smallest segment end achieving it
    best = [[math.inf] * (n + 1) for _ in range(k + 1)]
    choice = [[-1] * (n + 1) for _ in range(k + 1)]
    for i in range(n):
        best[1][i] = seg_cost(i, n - 1)
        choice[1][i] = n - 1
    for m in range(2, k + 1):
        # leave at least m-1 points for the remaining clusters
        for i in range(n - m + 1):
            b, c = math.inf, -1
            for e in range(i, n - m + 1):
                cost = seg_cost(i, e) + best[m - 1][e + 1]
                if cost < b:
                    b, c = cost, e
            best[m][i] = b
            choice[m][i] = c

    clusters = []
    i = 0
    for m in range(k, 0, -1):
        e = choice[m][i]
        clusters.append([order[p] for p in range(i, e + 1)])
        i = e + 1
    return clusters


def clustering_cost(values: Sequence[float], clusters: Sequence[Sequence[int]]) -> float:
    total = 0.0
    for cluster in clusters:
        xs = [values[i] for i in cluster]
        mean = math.fsum(xs) / len(xs)
        total += math.fsum((x - mean) ** 2 for x in xs)
    return total


def _nearest_anchor(mean: float) -> str:
    best_cat, best_dist = None, math.inf
    for cat, anchor in ANCHORS:
        d = abs(mean - anchor)
        if d < best_dist:
            best_cat, best_dist = cat, d
    return best_cat


def group_by_clustering(reports: Sequence[MiScoreReport], k: int = 3) -> GroupAssignment:
    """Exact optimal k-cluster partition of the scores, labeled by nearest anchor."""
    if k != 3:
        raise InputError("labeled grouping assumes the three interaction anchors; k must be 3")
    ids = [r.dataset_id for r in reports]
    if len(set(ids)) != len(ids):
        raise InputError("duplicate dataset ids")
    if len(reports) < k:
        raise InputError(f"need at least {k} datasets to form {k} clusters, got {len(reports)}")

    scores = [r.mi_score for r in reports]
    clusters = cluster_scores_1d(scores, k)

    labeled: dict[str, list[int]] = {}
    centroids: dict[str, float] = {}
    for cluster in clusters:
        mean = math.fsum(scores[i] for i in cluster) / len(cluster)
        category = _nearest_anchor(mean)
        label = GROUP_LABELS[category]
        if label in labeled:
            raise GroupingConflictError(
                f"clusters {sorted(ids[i] for i in labeled[label])} and "
                f"{sorted(ids[i] for i in cluster)} both map to anchor group {label}"
            )
        labeled[label] = cluster
        centroids[label] = mean

    membership: dict[str, str] = {}
    for label, cluster in labeled.items():
        for i in cluster:
            membership[ids[i]] = label

    disagreements = tuple(
        r.dataset_id for r in reports if membership[r.dataset_id] != GROUP_LABELS[r.category]
    )
    return GroupAssignment(
        method="dp_cluster",
        groups=_ordered_groups(reports, membership),
        centroids=tuple((label, centroids[label]) for label in ALL_GROUP_LABELS),
        disagreements=disagreements,
    )


def write_grouping_artifact(
    path: Path,
    anchor: GroupAssignment,
    clustered: GroupAssignment | None,
    matrix: DistanceMatrix | None = None,
) -> None:
    obj: dict = {"anchor": anchor.to_json()}
    if clustered is not None:
        obj["dp_cluster"] = clustered.to_json()
    if matrix is not None:
        obj["distance_matrix"] = matrix.to_json()
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
