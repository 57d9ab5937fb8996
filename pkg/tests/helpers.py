"""Shared test helpers and independent oracles.

The oracles intentionally avoid the package's own code paths: LCS
length via the plain two-row recurrence, clustering cost via exhaustive
medoid enumeration, purity via a naive recount.
"""

from collections import Counter
from itertools import combinations

import numpy as np

from failsift import Trace


def make_trace(exp_id, events, fault_free=False):
    return Trace(experiment_id=exp_id, events=tuple(events), fault_free=fault_free)


def oracle_lcs_len(a, b) -> int:
    prev = [0] * (len(b) + 1)
    for i in range(1, len(a) + 1):
        cur = [0] * (len(b) + 1)
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = prev[j] if prev[j] >= cur[j - 1] else cur[j - 1]
        prev = cur
    return prev[len(b)]


def is_subsequence(needle, haystack) -> bool:
    it = iter(haystack)
    return all(any(x == want for x in it) for want in needle)


def brute_force_kmedoids_cost(X, k, metric="l2") -> float:
    """Exhaustive minimum of sum-of-distances over all medoid sets."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    diffs = X[:, None, :] - X[None, :, :]
    if metric == "l1":
        D = np.abs(diffs).sum(axis=2)
    else:
        D = np.sqrt((diffs * diffs).sum(axis=2))
    best = np.inf
    for medoids in combinations(range(n), k):
        cost = D[:, list(medoids)].min(axis=1).sum()
        best = min(best, cost)
    return float(best)


def oracle_purity(cluster_labels, true_labels) -> float:
    total_matched = 0
    for cluster in set(cluster_labels):
        members = [t for c, t in zip(cluster_labels, true_labels) if c == cluster]
        total_matched += max(Counter(members).values())
    return total_matched / len(cluster_labels)
