"""Duplicate-context suppression.

Satellites revisit the same ground tracks, so many captured tiles show the
same scene again (possibly rotated or flipped).  Tiles are summarized by nine
color moments, canonicalized over a transform group, and clustered; only one
representative per cluster is processed downstream, with the cluster size
carried along as a multiplicity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ValidationError

FEATURE_DIM = 9


def color_moments(raster_stats: Sequence) -> np.ndarray:
    """Nine-dimensional color-moment feature from per-channel pixel values.

    For each of the three channels: mean, population standard deviation, and
    the cube root of the third central moment (a signed skewness measure that
    stays in pixel-value units).
    """
    if len(raster_stats) != 3:
        raise ValidationError("raster_stats must have exactly 3 channels")
    out = np.empty(FEATURE_DIM, dtype=np.float64)
    for c, channel in enumerate(raster_stats):
        values = np.asarray(channel, dtype=np.float64)
        if values.size == 0:
            raise ValidationError(f"channel {c} is empty")
        mean = values.mean()
        centered = values - mean
        std = np.sqrt(np.mean(centered**2))
        third = np.mean(centered**3)
        out[3 * c : 3 * c + 3] = (mean, std, np.cbrt(third))
    return out


# Channel-preserving flips and rotations leave channel moments unchanged, so
# the default orbit is just the feature itself.
IDENTITY_GROUP: tuple[Callable[[np.ndarray], np.ndarray], ...] = (lambda f: f,)


def canonicalize(
    feature: np.ndarray,
    transform_group: Iterable[Callable[[np.ndarray], np.ndarray]] | None = None,
) -> np.ndarray:
    """Lexicographically smallest image of ``feature`` under the group.

    Revisited scenes may be captured rotated or flipped; mapping every
    feature to a canonical orbit element makes such revisits collide in
    feature space.
    """
    feature = np.asarray(feature, dtype=np.float64)
    if feature.shape != (FEATURE_DIM,):
        raise ValidationError(f"feature must have shape ({FEATURE_DIM},)")
    group = IDENTITY_GROUP if transform_group is None else tuple(transform_group)
    if not group:
        raise ValidationError("transform_group must not be empty")
    orbit = []
    for transform in group:
        image = np.asarray(transform(feature), dtype=np.float64)
        if image.shape != (FEATURE_DIM,):
            raise ValidationError("transform changed feature dimensionality")
        orbit.append(image)
    return min(orbit, key=lambda v: tuple(v))


def _kmeans_pp_seed(
    points: np.ndarray, k: int, rng: np.random.Generator
) -> np.ndarray:
    """k-means++ seeding: spread initial centroids by squared-distance sampling."""
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centroids[0] = points[first]
    d2 = np.sum((points - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # all remaining mass at already-chosen locations; fall back to uniform
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[j] = points[idx]
        d2 = np.minimum(d2, np.sum((points - centroids[j]) ** 2, axis=1))
    return centroids


def kmeans(
    features: np.ndarray,
    k: int,
    rng: np.random.Generator,
    max_iter: int = 100,
    tol: float = 1e-8,
    init: str = "kmeans++",
) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm with k-means++ seeding.

    Returns (assignment, centroids).  Assignment ties go to the lowest
    centroid index; a cluster left empty keeps its previous centroid.  All
    randomness comes from ``rng``.
    """
    points = np.asarray(features, dtype=np.float64)
    if points.ndim != 2:
        raise ValidationError("features must be a 2-D array")
    n = points.shape[0]
    if n == 0:
        raise ValidationError("features must be non-empty")
    if not 1 <= k <= n:
        raise ValidationError(f"k must be in [1, {n}], got {k}")
    if max_iter < 1:
        raise ValidationError("max_iter must be >= 1")
    if init == "kmeans++":
        centroids = _kmeans_pp_seed(points, k, rng)
    elif init == "random":
        centroids = points[rng.choice(n, size=k, replace=False)].copy()
    else:
        raise ValidationError("init must be 'kmeans++' or 'random'")

    assignment = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        # squared distances point x centroid; argmin takes the lowest index on ties
        d2 = np.sum((points[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        assignment = np.argmin(d2, axis=1)
        moved = 0.0
        for j in range(k):
            members = points[assignment == j]
            if len(members) == 0:
                continue
            new_c = members.mean(axis=0)
            moved = max(moved, float(np.sum((new_c - centroids[j]) ** 2)))
            centroids[j] = new_c
        if moved < tol:
            break
    d2 = np.sum((points[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
    assignment = np.argmin(d2, axis=1)
    return assignment, centroids


def inertia(features: np.ndarray, assignment: np.ndarray, centroids: np.ndarray) -> float:
    """Sum of squared distances from each point to its assigned centroid."""
    points = np.asarray(features, dtype=np.float64)
    return float(np.sum((points - centroids[assignment]) ** 2))


@dataclass(frozen=True)
class DedupResult:
    """Clustering outcome: who represents whom, and how many they stand for."""

    representatives: tuple[int, ...]  # tile ids, one per non-empty cluster
    multiplicity: dict  # representative tile id -> member count (incl. itself)
    assignment: dict  # tile id -> cluster index
    representative_of: dict  # tile id -> its cluster's representative tile id

    def to_records(self) -> list[dict]:
        """Audit records, one per tile, in tile id order."""
        rows = []
        for tile_id in sorted(self.assignment):
            rep = self.representative_of[tile_id]
            rows.append(
                {
                    "tile_id": tile_id,
                    "cluster": int(self.assignment[tile_id]),
                    "representative": rep,
                    "is_representative": tile_id == rep,
                }
            )
        return rows


def deduplicate(
    tiles: Sequence,
    k: int,
    rng: np.random.Generator,
    transform_group: Iterable | None = None,
) -> DedupResult:
    """Cluster tiles by canonicalized feature and pick one representative each.

    The representative is the member closest to its cluster centroid (ties to
    the lowest tile id).  Multiplicities sum to the number of input tiles, so
    scaling each representative's count by its multiplicity conserves totals.
    """
    if len(tiles) == 0:
        raise ValidationError("tiles must be non-empty")
    feats = np.stack([canonicalize(t.feature, transform_group) for t in tiles])
    assignment, centroids = kmeans(feats, k, rng)
    tile_ids = [t.id for t in tiles]

    reps: list[int] = []
    multiplicity: dict = {}
    rep_of: dict = {}
    for j in range(int(assignment.max()) + 1 if len(assignment) else 0):
        member_idx = np.flatnonzero(assignment == j)
        if len(member_idx) == 0:
            continue
        d2 = np.sum((feats[member_idx] - centroids[j]) ** 2, axis=1)
        best = min(
            range(len(member_idx)),
            key=lambda i: (d2[i], tile_ids[member_idx[i]]),
        )
        rep_id = tile_ids[member_idx[best]]
        reps.append(rep_id)
        multiplicity[rep_id] = int(len(member_idx))
        for i in member_idx:
            rep_of[tile_ids[i]] = rep_id
    return DedupResult(
        representatives=tuple(reps),
        multiplicity=multiplicity,
        assignment={tile_ids[i]: int(assignment[i]) for i in range(len(tile_ids))},
        representative_of=rep_of,
    )
