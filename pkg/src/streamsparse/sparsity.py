"""User sparsity categories: Normal, MidTail, LongTail, Extreme.

Users with more than ``dense_threshold`` reviews are split by a two-cluster
K-means over their daily-count statistics (the high-variability cluster is
MidTail). The remaining users are split by second-order degree.
"""

from __future__ import annotations

import enum
import math
import random
from collections import Counter, defaultdict
from dataclasses import dataclass

import numpy as np

from .ingest import ReviewStream
from .temporal_graph import TemporalGraph, second_order_global

SECONDS_PER_DAY = 86400
MAX_ITER = 100
N_INIT = 20


class Category(str, enum.Enum):
    NORMAL = "Normal"
    MIDTAIL = "MidTail"
    LONGTAIL = "LongTail"
    EXTREME = "Extreme"

    def __str__(self) -> str:
        return self.value


SPARSE_CATEGORIES = (Category.MIDTAIL, Category.LONGTAIL, Category.EXTREME)


@dataclass(frozen=True)
class SparsityConfig:
    dense_threshold: int = 5
    so_threshold: int = 10
    seed: int = 0


@dataclass(frozen=True)
class UserActivityStats:
    user_id: str
    review_count: int
    daily_counts: dict[int, int]
    mean: float
    std: float
    min: int
    max: int
    second_order_degree: int

    def features(self) -> tuple[float, float, float, float]:
        return (self.mean, self.std, float(self.min), float(self.max))


@dataclass(frozen=True)
class SparsityAssignment:
    user_id: str
    category: Category
    stats: UserActivityStats


def utc_day(ts: int) -> int:
    return ts // SECONDS_PER_DAY


def compute_activity_stats(stream: ReviewStream, tg: TemporalGraph) -> list[UserActivityStats]:
    """Per-user daily review-count statistics over active days, ordered by user id."""
    per_user: dict[str, Counter] = defaultdict(Counter)
    for rec in stream:
        per_user[rec.user_id][utc_day(rec.timestamp)] += 1

    out = []
    for user in sorted(per_user):
        days = per_user[user]
        counts = np.array(list(days.values()), dtype=float)
        out.append(
            UserActivityStats(
                user_id=user,
                review_count=int(counts.sum()),
                daily_counts=dict(sorted(days.items())),
                mean=float(counts.mean()),
                std=float(counts.std()),
                min=int(counts.min()),
                max=int(counts.max()),
                second_order_degree=len(second_order_global(tg, user)),
            )
        )
    return out


def standardize(points: np.ndarray) -> np.ndarray:
    """Zero mean / unit variance per column; constant columns become zero."""
    points = np.asarray(points, dtype=float)
    if len(points) == 0:
        return points.reshape(0, 0)
    centered = points - points.mean(axis=0)
    scale = points.std(axis=0)
    safe = np.where(scale > 0, scale, 1.0)
    z = np.where(scale > 0, centered / safe, 0.0)
    # shaves float noise so a constant translation cannot flip near-ties
    return np.round(z, 10)


def _farthest_pair(z: np.ndarray) -> tuple[int, int]:
    n = len(z)
    best, pair = -1.0, (0, min(1, n - 1))
    for i in range(n):
        d = ((z[i + 1 :] - z[i]) ** 2).sum(axis=1)
        if len(d) == 0:
            continue
        j = int(np.argmax(d))
        if d[j] > best:
            best, pair = float(d[j]), (i, i + 1 + j)
    return pair


def _lloyd(z: np.ndarray, i: int, j: int) -> np.ndarray:
    n = len(z)
    centroids = np.stack([z[i], z[j]])
    labels = None
    for _ in range(MAX_ITER):
        d = ((z[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new = (d[:, 1] < d[:, 0]).astype(int)
        for k in (0, 1):
            if not (new == k).any() and n > 1:
                # re-seed the empty cluster with the point worst served by the other one
                other = 1 - k
                far = int(np.argmax(np.where(new == other, d[:, other], -1.0)))
                if d[far, other] > 0:
                    new[far] = k
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for k in (0, 1):
            members = z[labels == k]
            if len(members):
                centroids[k] = members.mean(axis=0)
    return labels


def kmeans_two(points, seed: int = 0, n_init: int = N_INIT) -> list[int]:
    """Two-cluster Lloyd's algorithm on standardized features.

    The first run starts from the two points farthest apart (lowest indices
    win ties); ``n_init - 1`` further runs start from point pairs drawn with
    ``seed``. The run with the lowest within-cluster SSE wins, earliest run on
    ties. Distance ties go to cluster 0.
    """
    z = standardize(np.asarray(points, dtype=float))
    n = len(z)
    if n == 0:
        return []
    best = _lloyd(z, *_farthest_pair(z))
    best_cost = within_cluster_sse(z, best)
    rng = random.Random(seed)
    for _ in range(n_init - 1 if n > 2 else 0):
        i, j = rng.sample(range(n), 2)
        labels = _lloyd(z, i, j)
        cost = within_cluster_sse(z, labels)
        if cost < best_cost - 1e-12:
            best, best_cost = labels, cost
    return [int(x) for x in best]


def within_cluster_sse(points: np.ndarray, labels) -> float:
    labels = np.asarray(labels)
    total = 0.0
    for k in set(labels.tolist()):
        members = points[labels == k]
        total += float(((members - members.mean(axis=0)) ** 2).sum())
    return total


def classify_users(
    stream: ReviewStream,
    tg: TemporalGraph,
    cfg: SparsityConfig = SparsityConfig(),
    stats: list[UserActivityStats] | None = None,
) -> list[SparsityAssignment]:
    if stats is None:
        stats = compute_activity_stats(stream, tg)

    dense = [s for s in stats if s.review_count > cfg.dense_threshold]
    category: dict[str, Category] = {}

    if dense:
        labels = kmeans_two([s.features() for s in dense], seed=cfg.seed)
        std_by_cluster = {}
        for k in (0, 1):
            member_std = [s.std for s, lab in zip(dense, labels) if lab == k]
            if member_std:
                std_by_cluster[k] = math.fsum(member_std) / len(member_std)
        mid_cluster = None
        if len(std_by_cluster) == 2 and std_by_cluster[0] != std_by_cluster[1]:
            mid_cluster = max(std_by_cluster, key=std_by_cluster.get)
        for s, lab in zip(dense, labels):
            category[s.user_id] = Category.MIDTAIL if lab == mid_cluster else Category.NORMAL

    for s in stats:
        if s.review_count <= cfg.dense_threshold:
            category[s.user_id] = (
                Category.LONGTAIL if s.second_order_degree >= cfg.so_threshold else Category.EXTREME
            )

    return [SparsityAssignment(s.user_id, category[s.user_id], s) for s in stats]


def category_counts(assignments: list[SparsityAssignment]) -> dict[Category, int]:
    counts = Counter(a.category for a in assignments)
    return {c: counts.get(c, 0) for c in Category}


def calibrate_so_threshold(stats: list[UserActivityStats], dense_threshold: int, target_extreme: int) -> int:
    """Smallest second-order threshold giving an Extreme count closest to ``target_extreme``."""
    degrees = sorted(s.second_order_degree for s in stats if s.review_count <= dense_threshold)
    best_t, best_err = 0, None
    for t in sorted({0, *degrees, (degrees[-1] + 1) if degrees else 1}):
        n_extreme = sum(d < t for d in degrees)
        err = abs(n_extreme - target_extreme)
        if best_err is None or err < best_err:
            best_t, best_err = t, err
    return best_t


def review_share(stream: ReviewStream, max_reviews: int) -> float:
    """Fraction of all reviews written by users with at most ``max_reviews`` reviews."""
    if len(stream) == 0:
        return 0.0
    per_user = Counter(r.user_id for r in stream)
    covered = sum(c for c in per_user.values() if c <= max_reviews)
    return covered / len(stream)
