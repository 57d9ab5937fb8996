"""k-medoids clustering with restarts, L1/L2 metrics, and optional
feature weights.

Voronoi iteration: alternate nearest-medoid assignment with
within-cluster medoid minimization until assignments stabilize, repeat
from fresh random medoids, keep the cheapest run. Everything is
deterministic given the seed; restart r derives its generator from
seed XOR r.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.exceptions import NotFittedError

from .errors import DimensionMismatch, NonFiniteInput, TooFewPoints

METRICS = ("l1", "l2")


def distance(
    x: Sequence[float],
    y: Sequence[float],
    metric: str = "l2",
    weights: Sequence[float] | None = None,
) -> float:
    """Pointwise distance: L1 sum w|x-y| or L2 sqrt(sum w(x-y)^2)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DimensionMismatch(f"vectors must share one dimension, got {x.shape} vs {y.shape}")
    if weights is None:
        w = np.ones_like(x)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != x.shape:
            raise DimensionMismatch("weights length must match the vectors")
        if np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
    diff = np.abs(x - y)
    if metric == "l1":
        return float(np.sum(w * diff))
    if metric == "l2":
        return float(np.sqrt(np.sum(w * diff * diff)))
    raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")


def pairwise_distances(
    X: np.ndarray, metric: str = "l2", weights: Sequence[float] | None = None
) -> np.ndarray:
    """All-pairs distance matrix.

    Weighted metrics reduce to unweighted ones on rescaled coordinates:
    w-weighted L1 is plain L1 on X*w, w-weighted L2 is plain L2 on
    X*sqrt(w).
    """
    X = np.asarray(X, dtype=np.float64)
    if weights is not None:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (X.shape[1],):
            raise DimensionMismatch("weights length must match the feature count")
        if np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
        X = X * (w if metric == "l1" else np.sqrt(w))
    if metric == "l1":
        return cdist(X, X, metric="cityblock")
    if metric == "l2":
        return cdist(X, X, metric="euclidean")
    raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")


@dataclass(frozen=True)
class KMedoidsResult:
    """Best-of-restarts clustering outcome."""

    assignments: np.ndarray  # length n, cluster index per point
    medoid_rows: tuple[int, ...]  # row index of each cluster's medoid
    total_cost: float  # sum of point-to-medoid distances
    restarts_run: int
    best_restart: int
    cost_history: tuple[float, ...]  # per-iteration cost of the best restart


def _assign(dist_to_medoids: np.ndarray, medoids: np.ndarray) -> np.ndarray:
    # argmin breaks ties toward the lowest cluster index; pinning each
    # medoid to its own cluster keeps duplicate-vector medoids from
    # emptying a cluster (their distance to themselves is 0, so this is
    # still a nearest medoid).
    assign = np.argmin(dist_to_medoids, axis=1)
    assign[medoids] = np.arange(len(medoids))
    return assign


def k_medoids(
    X: np.ndarray,
    n_clusters: int,
    metric: str = "l2",
    restarts: int = 30,
    max_iter: int = 300,
    seed: int = 0,
    feature_weights: Sequence[float] | None = None,
) -> KMedoidsResult:
    """Cluster rows of X around n_clusters medoid rows.

    Initial medoids are k distinct rows per restart, sampled uniformly;
    when the restart budget covers every C(n, k) initial set, the sets
    are enumerated exhaustively instead, which makes small instances
    provably optimal. Ties: nearest-medoid goes to the lowest cluster
    index, medoid update to the lowest row index, best-of to the lowest
    restart index.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatch("X must be a 2-d matrix")
    n = X.shape[0]
    if not np.all(np.isfinite(X)):
        raise NonFiniteInput("X contains NaN or infinite entries")
    if n_clusters < 1:
        raise ValueError("n_clusters must be >= 1")
    if n < n_clusters:
        raise TooFewPoints(f"{n} points cannot form {n_clusters} clusters")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")

    D = pairwise_distances(X, metric=metric, weights=feature_weights)

    exhaustive = comb(n, n_clusters) <= restarts
    if exhaustive:
        initial_sets = [np.array(c) for c in combinations(range(n), n_clusters)]
    else:
        initial_sets = []
        for r in range(restarts):
            rng = np.random.default_rng(seed ^ r)
            initial_sets.append(rng.choice(n, size=n_clusters, replace=False))

    best: tuple[float, int] | None = None
    best_state: tuple[np.ndarray, np.ndarray, tuple[float, ...]] | None = None
    for r, medoids in enumerate(initial_sets):
        medoids = np.array(medoids, dtype=np.int64)
        history: list[float] = []
        assign = _assign(D[:, medoids], medoids)
        for _ in range(max_iter):
            new_medoids = medoids.copy()
            for c in range(n_clusters):
                members = np.nonzero(assign == c)[0]
                within = D[np.ix_(members, members)].sum(axis=0)
                new_medoids[c] = members[int(np.argmin(within))]
            new_assign = _assign(D[:, new_medoids], new_medoids)
            history.append(float(D[np.arange(n), new_medoids[new_assign]].sum()))
            if np.array_equal(new_assign, assign) and np.array_equal(new_medoids, medoids):
                medoids, assign = new_medoids, new_assign
                break
            medoids, assign = new_medoids, new_assign
        cost = float(D[np.arange(n), medoids[assign]].sum())
        if best is None or (cost, r) < best:
            best = (cost, r)
            best_state = (assign, medoids, tuple(history))

    assert best is not None and best_state is not None
    assign, medoids, history = best_state
    return KMedoidsResult(
        assignments=assign,
        medoid_rows=tuple(int(m) for m in medoids),
        total_cost=best[0],
        restarts_run=len(initial_sets),
        best_restart=best[1],
        cost_history=history,
    )


class KMedoids(ClusterMixin, BaseEstimator):
    """sklearn-style wrapper around k_medoids.

    Fitted attributes: labels_, medoid_indices_, cluster_centers_
    (medoid rows of the training data), inertia_ (total cost), and
    n_restarts_run_.
    """

    def __init__(
        self,
        n_clusters: int = 6,
        metric: str = "l2",
        restarts: int = 30,
        max_iter: int = 300,
        random_state: int = 0,
        feature_weights: Sequence[float] | None = None,
    ):
        self.n_clusters = n_clusters
        self.metric = metric
        self.restarts = restarts
        self.max_iter = max_iter
        self.random_state = random_state
        self.feature_weights = feature_weights

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=np.float64)
        result = k_medoids(
            X,
            n_clusters=self.n_clusters,
            metric=self.metric,
            restarts=self.restarts,
            max_iter=self.max_iter,
            seed=self.random_state,
            feature_weights=self.feature_weights,
        )
        self.labels_ = result.assignments
        self.medoid_indices_ = np.array(result.medoid_rows)
        self.cluster_centers_ = X[self.medoid_indices_].copy()
        self.inertia_ = result.total_cost
        self.n_restarts_run_ = result.restarts_run
        self.result_ = result
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "cluster_centers_"):
            raise NotFittedError("KMedoids is not fitted; call fit first")
        X = np.asarray(X, dtype=np.float64)
        if self.feature_weights is not None:
            w = np.asarray(self.feature_weights, dtype=np.float64)
            scale = w if self.metric == "l1" else np.sqrt(w)
            X = X * scale
            centers = self.cluster_centers_ * scale
        else:
            centers = self.cluster_centers_
        kind = "cityblock" if self.metric == "l1" else "euclidean"
        return np.argmin(cdist(X, centers, metric=kind), axis=1)
