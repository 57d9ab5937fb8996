"""Clustering quality against ground truth: purity, cluster-to-mode
mapping, and failure-mode distribution reports.

Each cluster is mapped to the ground-truth label with the largest
overlap; several clusters may share a label but a cluster never splits
across labels. Purity of a cluster is the fraction of its members
matching that label, and the overall purity is the size-weighted sum.
"""

from __future__ import annotations

import csv
import json
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .errors import ShapeMismatch


def _check_aligned(cluster_labels: Sequence[int], true_labels: Sequence[str]) -> None:
    if len(cluster_labels) != len(true_labels):
        raise ShapeMismatch(
            f"{len(cluster_labels)} cluster labels vs {len(true_labels)} ground-truth labels"
        )
    if len(cluster_labels) == 0:
        raise ValueError("cannot evaluate an empty labeling")


def map_clusters(
    cluster_labels: Sequence[int], true_labels: Sequence[str]
) -> dict[int, str]:
    """Majority ground-truth label per cluster; ties break to the
    lexicographically smallest label name."""
    _check_aligned(cluster_labels, true_labels)
    by_cluster: dict[int, Counter] = defaultdict(Counter)
    for cluster, truth in zip(cluster_labels, true_labels):
        by_cluster[int(cluster)][truth] += 1
    mapping: dict[int, str] = {}
    for cluster, counts in by_cluster.items():
        best = min(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        mapping[cluster] = best[0]
    return dict(sorted(mapping.items()))


@dataclass(frozen=True)
class ClusterPurity:
    size: int
    majority_label: str
    matched: int

    @property
    def purity(self) -> float:
        return self.matched / self.size


@dataclass(frozen=True)
class PurityReport:
    per_cluster: dict[int, ClusterPurity]
    overall: float
    n: int
    n_classes: int

    def to_dict(self) -> dict:
        return {
            "overall_purity": self.overall,
            "n": self.n,
            "n_classes": self.n_classes,
            "clusters": {
                str(c): {
                    "size": cp.size,
                    "majority_label": cp.majority_label,
                    "matched": cp.matched,
                    "purity": cp.purity,
                }
                for c, cp in self.per_cluster.items()
            },
        }


def purity(cluster_labels: Sequence[int], true_labels: Sequence[str]) -> PurityReport:
    """Per-cluster and overall purity.

    P_k = max_c |cluster k with label c| / |cluster k|;
    overall = sum_k (n_k / n) P_k.
    """
    _check_aligned(cluster_labels, true_labels)
    mapping = map_clusters(cluster_labels, true_labels)
    by_cluster: dict[int, Counter] = defaultdict(Counter)
    for cluster, truth in zip(cluster_labels, true_labels):
        by_cluster[int(cluster)][truth] += 1
    per_cluster: dict[int, ClusterPurity] = {}
    n = len(cluster_labels)
    weighted = 0.0
    for cluster in sorted(by_cluster):
        counts = by_cluster[cluster]
        size = sum(counts.values())
        majority = mapping[cluster]
        matched = counts[majority]
        per_cluster[cluster] = ClusterPurity(size=size, majority_label=majority, matched=matched)
        weighted += (size / n) * (matched / size)
    return PurityReport(
        per_cluster=per_cluster,
        overall=weighted,
        n=n,
        n_classes=len(set(true_labels)),
    )


@dataclass(frozen=True)
class ModeCount:
    mode: str
    truth_count: int
    clustered_count: int

    @property
    def delta(self) -> int:
        return self.clustered_count - self.truth_count


@dataclass(frozen=True)
class DistributionReport:
    """Ground-truth vs clustered experiment counts per failure mode."""

    modes: tuple[ModeCount, ...]
    n: int

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "modes": [
                {
                    "mode": m.mode,
                    "truth_count": m.truth_count,
                    "clustered_count": m.clustered_count,
                    "delta": m.delta,
                }
                for m in self.modes
            ],
        }


def distribution_report(
    cluster_labels: Sequence[int],
    true_labels: Sequence[str],
    mapping: Mapping[int, str] | None = None,
) -> DistributionReport:
    """Compare the mapped cluster sizes to the actual mode frequencies.

    Every ground-truth mode appears, with clustered count 0 when no
    cluster mapped to it; modes only produced by the mapping appear too.
    """
    _check_aligned(cluster_labels, true_labels)
    if mapping is None:
        mapping = map_clusters(cluster_labels, true_labels)
    truth_counts = Counter(true_labels)
    clustered_counts: Counter = Counter()
    for cluster in cluster_labels:
        clustered_counts[mapping[int(cluster)]] += 1
    all_modes = sorted(set(truth_counts) | set(clustered_counts))
    modes = tuple(
        ModeCount(
            mode=mode,
            truth_count=truth_counts.get(mode, 0),
            clustered_count=clustered_counts.get(mode, 0),
        )
        for mode in all_modes
    )
    return DistributionReport(modes=modes, n=len(cluster_labels))


def write_json_report(payload: dict, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True, ensure_ascii=False)
        handle.write("\n")


def write_purity_csv(report: PurityReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["cluster", "size", "majority_label", "matched", "purity"])
        for cluster, cp in report.per_cluster.items():
            writer.writerow([cluster, cp.size, cp.majority_label, cp.matched, f"{cp.purity:.6f}"])
        writer.writerow(["overall", report.n, "", "", f"{report.overall:.6f}"])


def write_distribution_csv(report: DistributionReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["mode", "truth_count", "clustered_count", "delta"])
        for m in report.modes:
            writer.writerow([m.mode, m.truth_count, m.clustered_count, m.delta])


def write_distribution_svg(report: DistributionReport, path: str | Path) -> None:
    """Grouped-bar chart of truth vs clustered counts, one group per
    failure mode. Hand-written SVG so reruns are byte-identical."""
    modes = report.modes
    width, height = max(480, 90 * len(modes) + 120), 360
    left, bottom, top = 60, 60, 30
    plot_w, plot_h = width - left - 20, height - bottom - top
    peak = max([1] + [max(m.truth_count, m.clustered_count) for m in modes])
    group_w = plot_w / max(1, len(modes))
    bar_w = group_w * 0.35

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        '<style>text{font-family:sans-serif;font-size:11px}</style>',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + plot_h}" stroke="black"/>',
        f'<line x1="{left}" y1="{top + plot_h}" x2="{left + plot_w}" y2="{top + plot_h}" stroke="black"/>',
    ]
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = top + plot_h - frac * plot_h
        value = int(round(frac * peak))
        parts.append(f'<text x="{left - 8}" y="{y + 4:.1f}" text-anchor="end">{value}</text>')
        parts.append(
            f'<line x1="{left - 4}" y1="{y:.1f}" x2="{left}" y2="{y:.1f}" stroke="black"/>'
        )
    for i, m in enumerate(modes):
        gx = left + i * group_w + group_w / 2
        for offset, count, color in (
            (-bar_w, m.truth_count, "#4878a8"),
            (0, m.clustered_count, "#e0803c"),
        ):
            h = plot_h * count / peak
            parts.append(
                f'<rect x="{gx + offset:.1f}" y="{top + plot_h - h:.1f}" '
                f'width="{bar_w:.1f}" height="{h:.1f}" fill="{color}"/>'
            )
        parts.append(
            f'<text x="{gx:.1f}" y="{top + plot_h + 16}" text-anchor="middle">{m.mode}</text>'
        )
    legend_x = left + 10
    parts.append(f'<rect x="{legend_x}" y="8" width="12" height="12" fill="#4878a8"/>')
    parts.append(f'<text x="{legend_x + 16}" y="18">ground truth</text>')
    parts.append(f'<rect x="{legend_x + 110}" y="8" width="12" height="12" fill="#e0803c"/>')
    parts.append(f'<text x="{legend_x + 126}" y="18">clustered</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")
