"""Event-count vectorization of traces (the raw sequence representation).

Each trace becomes a length-d vector whose j-th entry counts how many
events of type j occurred, with the alphabet indexing the d unique
event types lexicographically.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .campaign import Campaign, Trace
from .errors import DimensionMismatch, EmptyInput, UnknownEventType


@dataclass(frozen=True)
class EventAlphabet:
    """Bijection between event type names and indices in [0, d).

    Indices follow lexicographic order of the type names, so the same
    corpus always yields the same alphabet.
    """

    names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if sorted(self.names) != list(self.names) or len(set(self.names)) != len(self.names):
            raise ValueError("alphabet names must be unique and lexicographically sorted")
        object.__setattr__(self, "_index", {name: i for i, name in enumerate(self.names)})

    @property
    def size(self) -> int:
        return len(self.names)

    def index_of(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise UnknownEventType(
                f"event type {name!r} is not in the alphabet (built from a different corpus?)"
            ) from None

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def __len__(self) -> int:
        return len(self.names)


def build_alphabet(traces: Sequence[Trace]) -> EventAlphabet:
    """Alphabet over the union of event types in the given traces."""
    if not traces:
        raise EmptyInput("cannot build an alphabet from zero traces")
    names: set[str] = set()
    for trace in traces:
        names.update(trace.events)
    return EventAlphabet(tuple(sorted(names)))


def vectorize_trace(trace: Trace, alphabet: EventAlphabet) -> np.ndarray:
    """Count vector of the trace over the alphabet (length d, ints)."""
    values = np.zeros(alphabet.size, dtype=np.int64)
    for name in trace.events:
        values[alphabet.index_of(name)] += 1
    return values


@dataclass(frozen=True)
class FeatureMatrix:
    """n x m numeric matrix with stable row identity.

    m equals d for the count representation and 2d for the anomaly
    representation; column_names document which is which.
    """

    values: np.ndarray
    row_ids: tuple[str, ...]
    column_names: tuple[str, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "row_ids", tuple(self.row_ids))
        object.__setattr__(self, "column_names", tuple(self.column_names))
        if values.ndim != 2:
            raise DimensionMismatch("feature matrix must be 2-dimensional")
        if values.shape[0] != len(self.row_ids):
            raise DimensionMismatch("row_ids length must match the number of rows")
        if values.shape[1] != len(self.column_names):
            raise DimensionMismatch("column_names length must match the number of columns")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]


def build_feature_matrix(
    campaign: Campaign,
    alphabet: EventAlphabet | None = None,
    weights: Sequence[float] | None = None,
) -> FeatureMatrix:
    """Count matrix over the campaign's fault-injected traces.

    The alphabet defaults to the union over all campaign traces
    (fault-free included), so anomaly columns and count columns agree.
    Positive per-feature weights, when given, multiply each column.
    """
    if alphabet is None:
        alphabet = build_alphabet(campaign.all_traces)
    rows = [vectorize_trace(t, alphabet) for t in campaign.fault_injected]
    values = (
        np.vstack(rows).astype(np.float64)
        if rows
        else np.zeros((0, alphabet.size), dtype=np.float64)
    )
    values = apply_feature_weights(values, weights)
    return FeatureMatrix(
        values=values,
        row_ids=tuple(t.experiment_id for t in campaign.fault_injected),
        column_names=alphabet.names,
    )


def apply_feature_weights(values: np.ndarray, weights: Sequence[float] | None) -> np.ndarray:
    if weights is None:
        return values
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (values.shape[1],):
        raise DimensionMismatch(
            f"weights length {w.shape} does not match feature count {values.shape[1]}"
        )
    if np.any(w <= 0):
        raise ValueError("feature weights must be strictly positive")
    return values * w


def write_feature_csv(
    matrix: FeatureMatrix, path: str | Path, labels: Mapping[str, str] | None = None
) -> None:
    """CSV-matrix export: experiment_id, one column per feature, label."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["experiment_id", *matrix.column_names, "label"])
        for row_id, row in zip(matrix.row_ids, matrix.values):
            cells = [_format_cell(v) for v in row]
            label = (labels or {}).get(row_id, "")
            writer.writerow([row_id, *cells, label])


def _format_cell(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(float(value))


def read_feature_csv(path: str | Path) -> tuple[FeatureMatrix, dict[str, str]]:
    """Inverse of write_feature_csv; returns (matrix, labels)."""
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        column_names = tuple(header[1:-1])
        row_ids: list[str] = []
        rows: list[list[float]] = []
        labels: dict[str, str] = {}
        for row in reader:
            if not row:
                continue
            row_ids.append(row[0])
            rows.append([float(c) for c in row[1:-1]])
            if row[-1]:
                labels[row[0]] = row[-1]
    values = np.array(rows, dtype=np.float64) if rows else np.zeros((0, len(column_names)))
    return FeatureMatrix(values=values, row_ids=tuple(row_ids), column_names=column_names), labels


class TraceCountVectorizer(TransformerMixin, BaseEstimator):
    """Turn traces into event-count vectors, sklearn style.

    fit() builds the alphabet from the given traces; transform() counts
    against that alphabet and optionally applies multiplicative feature
    weights. Unknown event types at transform time raise
    UnknownEventType.
    """

    def __init__(self, weights: Sequence[float] | None = None):
        self.weights = weights

    def fit(self, X: Iterable[Trace], y=None):
        traces = list(X)
        self.alphabet_ = build_alphabet(traces)
        return self

    def transform(self, X: Iterable[Trace]) -> np.ndarray:
        if not hasattr(self, "alphabet_"):
            raise NotFittedError("TraceCountVectorizer is not fitted; call fit first")
        rows = [vectorize_trace(t, self.alphabet_) for t in X]
        values = (
            np.vstack(rows).astype(np.float64)
            if rows
            else np.zeros((0, self.alphabet_.size), dtype=np.float64)
        )
        return apply_feature_weights(values, self.weights)

    def get_feature_names_out(self, input_features=None):
        if not hasattr(self, "alphabet_"):
            raise NotFittedError("TraceCountVectorizer is not fitted; call fit first")
        return np.asarray(self.alphabet_.names, dtype=object)
