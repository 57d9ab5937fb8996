"""Domain model and ingestion for fault-injection campaigns.

A campaign is one workload's worth of experiments. Every experiment is a
trace: the ordered sequence of message event types recorded while the
system ran. Fault-free traces capture normal behavior; fault-injected
traces may carry a ground-truth failure label for evaluation.

Canonical on-disk format is JSON Lines, one record per experiment:

    {"experiment_id": "...", "workload": "...", "fault_free": false,
     "events": ["...", ...], "label": "..." | null}

The CSV-matrix format (header of event type names, experiment_id first,
label last) carries event counts only; traces loaded from it have their
events expanded in column order, so sequence information is not
preserved and the anomaly pipeline cannot run on such data.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .errors import (
    DuplicateExperimentId,
    EmptyCampaign,
    MalformedRecord,
)

# Labels used by the OpenStack campaigns. The label set is open: anything
# else is accepted verbatim and only surfaces as a validation warning.
KNOWN_FAILURE_LABELS = frozenset(
    {
        "InstanceFailure",
        "VolumeFailure",
        "NetworkFailure",
        "SshFailure",
        "CleanupFailure",
        "NoFailure",
    }
)

# An event is just its type name; invariants live on Trace.
EventType = str


@dataclass(frozen=True)
class Trace:
    """One experiment's ordered event sequence."""

    experiment_id: str
    events: tuple[EventType, ...]
    fault_free: bool = False

    def __post_init__(self):
        if not self.experiment_id:
            raise ValueError("experiment_id must be non-empty")
        object.__setattr__(self, "events", tuple(self.events))
        for name in self.events:
            if not isinstance(name, str) or not name:
                raise ValueError(
                    f"trace {self.experiment_id!r}: event type names must be non-empty strings"
                )

    def __len__(self) -> int:
        return len(self.events)


@dataclass(frozen=True)
class Campaign:
    """All traces of one workload plus optional ground truth.

    ground_truth maps fault-injected experiment ids to failure labels;
    it may cover only part of the campaign (or be empty for unlabeled
    data). Instances are immutable and safe to share across workers.
    """

    workload_id: str
    fault_injected: tuple[Trace, ...]
    fault_free: tuple[Trace, ...] = ()
    ground_truth: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "fault_injected", tuple(self.fault_injected))
        object.__setattr__(self, "fault_free", tuple(self.fault_free))
        object.__setattr__(self, "ground_truth", dict(self.ground_truth))
        injected_ids = {t.experiment_id for t in self.fault_injected}
        stray = sorted(set(self.ground_truth) - injected_ids)
        if stray:
            raise ValueError(f"ground_truth keys without a fault-injected trace: {stray[:5]}")

    @property
    def all_traces(self) -> tuple[Trace, ...]:
        return self.fault_injected + self.fault_free

    def experiment_ids(self) -> tuple[str, ...]:
        return tuple(t.experiment_id for t in self.fault_injected)

    def label_of(self, experiment_id: str) -> str | None:
        return self.ground_truth.get(experiment_id)


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        """True when the campaign is usable downstream (warnings allowed)."""
        return not self.errors


def validate_campaign(campaign: Campaign) -> ValidationReport:
    """Report structural problems without raising.

    Duplicate ids are errors; zero-event traces and labels outside the
    known set are warnings only.
    """
    report = ValidationReport()
    seen: set[str] = set()
    for trace in campaign.all_traces:
        if trace.experiment_id in seen:
            report.errors.append(f"duplicate experiment_id {trace.experiment_id!r}")
        seen.add(trace.experiment_id)
        if len(trace) == 0:
            report.warnings.append(f"trace {trace.experiment_id!r} has zero events")
    for exp_id, label in campaign.ground_truth.items():
        if label not in KNOWN_FAILURE_LABELS:
            report.warnings.append(f"experiment {exp_id!r} has unknown label {label!r}")
    return report


def load_campaign(path: str | Path, format: str = "jsonl") -> Campaign:
    """Load a campaign from disk.

    format is "jsonl" (canonical) or "csv-matrix". Re-loading the same
    file yields an identical Campaign.
    """
    path = Path(path)
    if format == "jsonl":
        return _load_jsonl(path)
    if format == "csv-matrix":
        return _load_csv_matrix(path)
    raise ValueError(f"unsupported campaign format {format!r}")


def _load_jsonl(path: Path) -> Campaign:
    fault_injected: list[Trace] = []
    fault_free: list[Trace] = []
    ground_truth: dict[str, str] = {}
    seen_ids: set[str] = set()
    workload_id: str | None = None

    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(f"invalid JSON ({exc.msg})", line=lineno) from exc
            trace, label, workload = _parse_record(record, lineno)
            if trace.experiment_id in seen_ids:
                raise DuplicateExperimentId(
                    f"experiment_id {trace.experiment_id!r} appears more than once"
                )
            seen_ids.add(trace.experiment_id)
            if workload_id is None:
                workload_id = workload
            if trace.fault_free:
                fault_free.append(trace)
            else:
                fault_injected.append(trace)
                if label is not None:
                    ground_truth[trace.experiment_id] = label

    if not fault_injected and not fault_free:
        raise EmptyCampaign(f"{path} contains no records")
    return Campaign(
        workload_id=workload_id or path.stem,
        fault_injected=tuple(fault_injected),
        fault_free=tuple(fault_free),
        ground_truth=ground_truth,
    )


def _parse_record(record: object, lineno: int) -> tuple[Trace, str | None, str]:
    if not isinstance(record, dict):
        raise MalformedRecord("record is not a JSON object", line=lineno)
    for key in ("experiment_id", "fault_free", "events"):
        if key not in record:
            raise MalformedRecord(f"missing key {key!r}", line=lineno)
    experiment_id = record["experiment_id"]
    events = record["events"]
    fault_free = record["fault_free"]
    label = record.get("label")
    workload = record.get("workload", "")
    if not isinstance(experiment_id, str) or not experiment_id:
        raise MalformedRecord("experiment_id must be a non-empty string", line=lineno)
    if not isinstance(fault_free, bool):
        raise MalformedRecord("fault_free must be a boolean", line=lineno)
    if not isinstance(events, list) or any(not isinstance(e, str) or not e for e in events):
        raise MalformedRecord("events must be a list of non-empty strings", line=lineno)
    if label is not None and not isinstance(label, str):
        raise MalformedRecord("label must be a string or null", line=lineno)
    if fault_free and label is not None:
        raise MalformedRecord("fault-free records must carry a null label", line=lineno)
    trace = Trace(experiment_id=experiment_id, events=tuple(events), fault_free=fault_free)
    return trace, label, workload if isinstance(workload, str) else ""


def _load_csv_matrix(path: Path) -> Campaign:
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyCampaign(f"{path} contains no records") from None
        if len(header) < 3:
            raise MalformedRecord(
                "header needs experiment_id, at least one event column, and label", line=1
            )
        event_names = header[1:-1]
        traces: list[Trace] = []
        ground_truth: dict[str, str] = {}
        seen_ids: set[str] = set()
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise MalformedRecord(
                    f"expected {len(header)} columns, found {len(row)}", line=lineno
                )
            experiment_id = row[0]
            if not experiment_id:
                raise MalformedRecord("empty experiment_id", line=lineno)
            if experiment_id in seen_ids:
                raise DuplicateExperimentId(
                    f"experiment_id {experiment_id!r} appears more than once"
                )
            seen_ids.add(experiment_id)
            events: list[str] = []
            for name, cell in zip(event_names, row[1:-1]):
                try:
                    count = int(cell)
                except ValueError:
                    raise MalformedRecord(
                        f"count for {name!r} is not an integer: {cell!r}", line=lineno
                    ) from None
                if count < 0:
                    raise MalformedRecord(f"negative count for {name!r}", line=lineno)
                events.extend([name] * count)
            label = row[-1] or None
            trace = Trace(experiment_id=experiment_id, events=tuple(events), fault_free=False)
            traces.append(trace)
            if label is not None:
                ground_truth[experiment_id] = label

    if not traces:
        raise EmptyCampaign(f"{path} contains no records")
    return Campaign(
        workload_id=path.stem,
        fault_injected=tuple(traces),
        fault_free=(),
        ground_truth=ground_truth,
    )


def save_campaign(campaign: Campaign, path: str | Path) -> None:
    """Write the canonical JSONL form. load(save(c)) == c."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as handle:
        for trace in campaign.all_traces:
            record = {
                "experiment_id": trace.experiment_id,
                "workload": campaign.workload_id,
                "fault_free": trace.fault_free,
                "events": list(trace.events),
                "label": campaign.ground_truth.get(trace.experiment_id),
            }
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")


def resolve_dataset_path(path: str | Path) -> Path:
    """Accept either a campaign file or a directory holding one.

    A directory must contain exactly one *.jsonl file (or a file named
    campaign.jsonl).
    """
    path = Path(path)
    if path.is_dir():
        preferred = path / "campaign.jsonl"
        if preferred.is_file():
            return preferred
        candidates = sorted(path.glob("*.jsonl"))
        if len(candidates) == 1:
            return candidates[0]
        if not candidates:
            raise FileNotFoundError(f"no *.jsonl campaign file in {path}")
        raise FileNotFoundError(
            f"multiple campaign files in {path}; pass one explicitly: "
            + ", ".join(c.name for c in candidates)
        )
    return path


def truth_labels_for(campaign: Campaign, experiment_ids: Iterable[str]) -> list[str]:
    """Ground-truth labels aligned to experiment_ids.

    Raises MissingGroundTruth listing every id without a label.
    """
    from .errors import MissingGroundTruth

    ids = list(experiment_ids)
    missing = [i for i in ids if i not in campaign.ground_truth]
    if missing:
        raise MissingGroundTruth(missing)
    return [campaign.ground_truth[i] for i in ids]
