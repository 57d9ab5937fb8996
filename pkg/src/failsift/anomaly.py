"""Anomaly-vector preprocessing: sequence matching plus a variable-order
Markov model over fault-free behavior.

The pipeline is: fold the fault-free traces into a common backbone with
pairwise longest-common-subsequence, train a context model on the same
corpus, then score each fault-injected trace. Events outside the
backbone alignment are *spurious* when the model finds them improbable
in context; backbone events missing from the alignment are *omissions*
when the model says they were probable where they should have occurred.
The result is a 2d-wide vector per trace: d spurious counts followed by
d omission counts.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .campaign import Campaign, Trace
from .errors import EmptyInput, UnknownEventType, UnknownSymbol
from .vectorize import EventAlphabet, FeatureMatrix

# Start-of-trace boundary symbol used to pad contexts shorter than the
# model order. NUL-prefixed so it cannot collide with real event names.
START = "\x00^"

ANOMALY_MODEL_VERSION = 1


def _lcs_table(a: Sequence, b: Sequence) -> np.ndarray:
    """Full (len(a)+1) x (len(b)+1) LCS length table.

    Row recurrence vectorized with a running max: with
    r[j] = max(dp[i-1][j], dp[i-1][j-1] + match(i,j)),
    dp[i][j] equals the prefix maximum of r, because dp[i][j-1] enters
    the cell only through max().
    """
    la, lb = len(a), len(b)
    dp = np.zeros((la + 1, lb + 1), dtype=np.int32)
    if la == 0 or lb == 0:
        return dp
    # integer-encode for fast elementwise comparison
    codes: dict = {}
    a_arr = np.fromiter((codes.setdefault(x, len(codes)) for x in a), dtype=np.int64, count=la)
    b_arr = np.fromiter((codes.setdefault(x, len(codes)) for x in b), dtype=np.int64, count=lb)
    for i in range(1, la + 1):
        prev = dp[i - 1]
        match = (b_arr == a_arr[i - 1]).astype(np.int32)
        r = np.maximum(prev[1:], prev[:-1] + match)
        dp[i, 1:] = np.maximum.accumulate(r)
    return dp


def lcs_align(a: Sequence, b: Sequence) -> list[tuple[int, int]]:
    """Matched index pairs (i, j) of one longest common subsequence.

    Backtrace is deterministic: diagonal on equal symbols, otherwise up
    (drop from a) wins ties over left (drop from b).
    """
    dp = _lcs_table(a, b)
    i, j = len(a), len(b)
    pairs: list[tuple[int, int]] = []
    while i > 0 and j > 0:
        if a[i - 1] == b[j - 1]:
            pairs.append((i - 1, j - 1))
            i -= 1
            j -= 1
        elif dp[i - 1, j] >= dp[i, j - 1]:
            i -= 1
        else:
            j -= 1
    pairs.reverse()
    return pairs


def lcs_pair(a: Sequence[str], b: Sequence[str]) -> tuple[str, ...]:
    """A longest common subsequence of a and b (deterministic choice)."""
    return tuple(a[i] for i, _ in lcs_align(a, b))


@dataclass(frozen=True)
class CommonBackbone:
    """Event sequence common to all fault-free traces that built it."""

    events: tuple[str, ...]

    def is_subsequence_of(self, events: Sequence[str]) -> bool:
        it = iter(events)
        return all(any(x == want for x in it) for want in self.events)

    def __len__(self) -> int:
        return len(self.events)


def fold_backbone(fault_free: Sequence[Trace], order: str = "dataset") -> CommonBackbone:
    """Left-fold pairwise LCS over the fault-free traces.

    order="dataset" keeps the given order; order="length" folds longest
    first (a canonical alternative, since fold order can matter). The
    result is a subsequence of every input trace either way.
    """
    if not fault_free:
        raise EmptyInput("need at least one fault-free trace to build a backbone")
    traces = list(fault_free)
    if order == "length":
        traces.sort(key=len, reverse=True)
    elif order != "dataset":
        raise ValueError(f"unknown fold order {order!r}")
    acc: Sequence[str] = traces[0].events
    for trace in traces[1:]:
        acc = lcs_pair(acc, trace.events)
    return CommonBackbone(tuple(acc))


@dataclass
class VmmModel:
    """Variable-order Markov model with escape smoothing.

    Prediction blends the longest-suffix estimate with shorter suffixes,
    giving escape mass proportional to the number of distinct successors
    seen after the context (the PPM method-C rule):

        P(s | ctx) = (count(ctx, s) + q * P(s | ctx[1:])) / (total(ctx) + q)

    with q = distinct successors of ctx, falling through unseen contexts,
    and a uniform distribution over the alphabet at the bottom. This
    keeps every in-alphabet probability strictly positive and the
    distribution exactly normalized for any context.
    """

    max_order: int
    alphabet: tuple[str, ...]
    context_counts: dict[tuple[str, ...], dict[str, int]]
    _totals: dict[tuple[str, ...], int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.max_order < 1:
            raise ValueError("max_order must be >= 1")
        if not self._totals:
            self._totals = {ctx: sum(c.values()) for ctx, c in self.context_counts.items()}

    def probability(self, context: Sequence[str], symbol: str) -> float:
        """Smoothed P(symbol | context), in (0, 1].

        The context is the events preceding the position of interest;
        only its last max_order symbols matter, and short contexts are
        padded with the start-of-trace boundary exactly as in training.
        """
        if symbol not in self._symbols:
            raise UnknownSymbol(f"symbol {symbol!r} was never seen in the training corpus")
        ctx = (START,) * self.max_order + tuple(context)
        return self._blend(ctx[len(ctx) - self.max_order :], symbol)

    def _blend(self, ctx: tuple[str, ...] | None, symbol: str) -> float:
        if ctx is None:
            return 1.0 / len(self.alphabet)
        shorter = ctx[1:] if ctx else None
        counts = self.context_counts.get(ctx)
        if not counts:
            return self._blend(shorter, symbol)
        total = self._totals[ctx]
        q = len(counts)
        return (counts.get(symbol, 0) + q * self._blend(shorter, symbol)) / (total + q)

    @property
    def _symbols(self) -> frozenset:
        cached = getattr(self, "_symbol_set", None)
        if cached is None:
            cached = frozenset(self.alphabet)
            self._symbol_set = cached
        return cached


def sequence_probability(model: VmmModel, context: Sequence[str], symbol: str) -> float:
    """Functional form of VmmModel.probability."""
    return model.probability(context, symbol)


def train_vmm(fault_free: Sequence[Trace], max_order: int = 3) -> VmmModel:
    """Count (context, next-symbol) occurrences for orders 0..max_order.

    Contexts shorter than the requested order (near the start of a
    trace) are left-padded with the boundary symbol.
    """
    if max_order < 1:
        raise ValueError("max_order must be >= 1")
    if not fault_free:
        raise EmptyInput("need at least one trace to train the model")
    counts: dict[tuple[str, ...], dict[str, int]] = {}
    symbols: set[str] = set()
    for trace in fault_free:
        events = trace.events
        symbols.update(events)
        padded = (START,) * max_order + events
        for t, symbol in enumerate(events):
            pos = max_order + t
            for order in range(max_order + 1):
                ctx = padded[pos - order : pos]
                bucket = counts.setdefault(ctx, {})
                bucket[symbol] = bucket.get(symbol, 0) + 1
    if not symbols:
        raise EmptyInput("training traces contain no events")
    return VmmModel(max_order=max_order, alphabet=tuple(sorted(symbols)), context_counts=counts)


@dataclass(frozen=True)
class AnomalyThresholds:
    """Probability cutoffs for counting anomalies.

    An unmatched trace event counts as spurious when its in-context
    probability is below p_spur (likelier ones are benign variation).
    A missing backbone event counts as an omission when the model put
    at least p_omit on it at its backbone position (unlikelier ones
    were not really expected).
    """

    p_spur: float = 0.10
    p_omit: float = 0.50

    def __post_init__(self):
        for name, value in (("p_spur", self.p_spur), ("p_omit", self.p_omit)):
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")


@dataclass(frozen=True)
class AnomalyVector:
    """Spurious and omission counts per event type (2d entries total)."""

    alphabet: EventAlphabet
    spurious: np.ndarray
    omission: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "spurious", np.asarray(self.spurious, dtype=np.int64))
        object.__setattr__(self, "omission", np.asarray(self.omission, dtype=np.int64))
        d = self.alphabet.size
        if self.spurious.shape != (d,) or self.omission.shape != (d,):
            raise ValueError("spurious and omission must each have one entry per event type")
        if np.any(self.spurious < 0) or np.any(self.omission < 0):
            raise ValueError("anomaly counts must be non-negative")

    def concat(self) -> np.ndarray:
        return np.concatenate([self.spurious, self.omission])


def anomaly_counts(
    trace: Trace,
    backbone: CommonBackbone,
    model: VmmModel,
    thresholds: AnomalyThresholds = AnomalyThresholds(),
) -> tuple[Counter, Counter]:
    """Per-type spurious and omission counts for one trace.

    The trace is aligned against the backbone by LCS; matched events are
    non-anomalous. Unmatched trace events are scored given the matched
    events preceding them (symbols outside the model alphabet are
    automatically spurious). Unmatched backbone events are scored at
    their own backbone context, i.e. the model's view of where the event
    should have occurred.
    """
    pairs = lcs_align(trace.events, backbone.events)
    matched_t = {i for i, _ in pairs}
    matched_b = {j for _, j in pairs}

    spurious: Counter = Counter()
    matched_prefix: list[str] = []
    for i, event in enumerate(trace.events):
        if i in matched_t:
            matched_prefix.append(event)
            continue
        try:
            p = model.probability(matched_prefix[-model.max_order :], event)
        except UnknownSymbol:
            spurious[event] += 1
            continue
        if p < thresholds.p_spur:
            spurious[event] += 1

    omission: Counter = Counter()
    for j, event in enumerate(backbone.events):
        if j in matched_b:
            continue
        p = model.probability(backbone.events[max(0, j - model.max_order) : j], event)
        if p >= thresholds.p_omit:
            omission[event] += 1
    return spurious, omission


def detect_anomalies(
    trace: Trace,
    backbone: CommonBackbone,
    model: VmmModel,
    thresholds: AnomalyThresholds = AnomalyThresholds(),
    alphabet: EventAlphabet | None = None,
) -> AnomalyVector:
    """Anomaly vector for one fault-injected trace.

    With no explicit alphabet the vector is indexed over the union of
    the model alphabet and the trace's own event types, so previously
    unseen (automatically spurious) types get a slot. An explicit
    alphabet must cover every counted type, else UnknownEventType.
    """
    spurious, omission = anomaly_counts(trace, backbone, model, thresholds)
    if alphabet is None:
        names = set(model.alphabet) | set(trace.events)
        alphabet = EventAlphabet(tuple(sorted(names)))
    spur = np.zeros(alphabet.size, dtype=np.int64)
    omit = np.zeros(alphabet.size, dtype=np.int64)
    for event, count in spurious.items():
        spur[alphabet.index_of(event)] = count
    for event, count in omission.items():
        omit[alphabet.index_of(event)] = count
    return AnomalyVector(alphabet=alphabet, spurious=spur, omission=omit)


def anomaly_column_names(alphabet: EventAlphabet) -> tuple[str, ...]:
    return tuple(f"spur:{n}" for n in alphabet.names) + tuple(
        f"omit:{n}" for n in alphabet.names
    )


def build_anomaly_matrix(
    campaign: Campaign,
    backbone: CommonBackbone,
    model: VmmModel,
    thresholds: AnomalyThresholds = AnomalyThresholds(),
    alphabet: EventAlphabet | None = None,
) -> FeatureMatrix:
    """n x 2d anomaly matrix over the campaign's fault-injected traces.

    Columns are spurious counts for every event type followed by
    omission counts, over the campaign-wide alphabet by default.
    """
    from .vectorize import build_alphabet

    if alphabet is None:
        alphabet = build_alphabet(campaign.all_traces)
    rows = [
        detect_anomalies(t, backbone, model, thresholds, alphabet).concat()
        for t in campaign.fault_injected
    ]
    d2 = 2 * alphabet.size
    values = np.vstack(rows).astype(np.float64) if rows else np.zeros((0, d2))
    return FeatureMatrix(
        values=values,
        row_ids=tuple(t.experiment_id for t in campaign.fault_injected),
        column_names=anomaly_column_names(alphabet),
    )


def save_anomaly_model(
    path: str | Path,
    backbone: CommonBackbone,
    model: VmmModel,
    thresholds: AnomalyThresholds = AnomalyThresholds(),
) -> None:
    """Persist backbone + model + thresholds as a versioned JSON artifact."""
    payload = {
        "version": ANOMALY_MODEL_VERSION,
        "max_order": model.max_order,
        "alphabet": list(model.alphabet),
        "backbone": list(backbone.events),
        "p_spur": thresholds.p_spur,
        "p_omit": thresholds.p_omit,
        "contexts": [
            [list(ctx), dict(sorted(counts.items()))]
            for ctx, counts in sorted(model.context_counts.items())
        ],
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, ensure_ascii=False)


def load_anomaly_model(
    path: str | Path,
) -> tuple[CommonBackbone, VmmModel, AnomalyThresholds]:
    with open(path, encoding="utf-8") as handle:
        payload = json.load(handle)
    version = payload.get("version")
    if version != ANOMALY_MODEL_VERSION:
        raise ValueError(f"unsupported anomaly model version {version!r}")
    model = VmmModel(
        max_order=payload["max_order"],
        alphabet=tuple(payload["alphabet"]),
        context_counts={
            tuple(ctx): {str(k): int(v) for k, v in counts.items()}
            for ctx, counts in payload["contexts"]
        },
    )
    backbone = CommonBackbone(tuple(payload["backbone"]))
    thresholds = AnomalyThresholds(p_spur=payload["p_spur"], p_omit=payload["p_omit"])
    return backbone, model, thresholds


class AnomalyVectorizer(TransformerMixin, BaseEstimator):
    """Fit on fault-free traces, transform traces into anomaly vectors.

    The output width is fixed at fit time: 2 * len(alphabet), where the
    alphabet defaults to the model's own (pass the campaign-wide
    alphabet to leave room for event types that only fault injection
    produces).
    """

    def __init__(
        self,
        max_order: int = 3,
        p_spur: float = 0.10,
        p_omit: float = 0.50,
        fold_order: str = "dataset",
        alphabet: EventAlphabet | Sequence[str] | None = None,
    ):
        self.max_order = max_order
        self.p_spur = p_spur
        self.p_omit = p_omit
        self.fold_order = fold_order
        self.alphabet = alphabet

    def fit(self, X: Iterable[Trace], y=None):
        traces = list(X)
        self.backbone_ = fold_backbone(traces, order=self.fold_order)
        self.model_ = train_vmm(traces, max_order=self.max_order)
        if self.alphabet is None:
            self.alphabet_ = EventAlphabet(self.model_.alphabet)
        elif isinstance(self.alphabet, EventAlphabet):
            self.alphabet_ = self.alphabet
        else:
            self.alphabet_ = EventAlphabet(tuple(sorted(self.alphabet)))
        return self

    def transform(self, X: Iterable[Trace]) -> np.ndarray:
        self._check_fitted()
        thresholds = AnomalyThresholds(p_spur=self.p_spur, p_omit=self.p_omit)
        rows = [
            detect_anomalies(t, self.backbone_, self.model_, thresholds, self.alphabet_).concat()
            for t in X
        ]
        width = 2 * self.alphabet_.size
        return np.vstack(rows).astype(np.float64) if rows else np.zeros((0, width))

    def get_feature_names_out(self, input_features=None):
        self._check_fitted()
        return np.asarray(anomaly_column_names(self.alphabet_), dtype=object)

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("AnomalyVectorizer is not fitted; call fit first")
