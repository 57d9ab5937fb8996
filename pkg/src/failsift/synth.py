"""Deterministic synthetic campaigns with planted failure modes.

The generator builds one canonical fault-free sequence that cycles a
core alphabet round-robin (so every context of order >= 1 determines
its successor, which keeps omission probabilities high everywhere).
Fault-free traces are noise-perturbed copies. Each failure mode plants
a unique signature on top of the noise: a few insertions of
mode-exclusive event types (never seen fault-free, hence unambiguously
spurious) and the removal of one occurrence each of a few
mode-distinct core types. Mode 0 is the no-failure mode and plants
nothing. Noise models benign non-determinism: with probability
noise_rate per position, either swap the event with its successor or
insert an event from a small asynchronous sub-alphabet.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import count as _count

import numpy as np

from .campaign import Campaign, Trace
from .errors import InvalidSpec

# Reused for the first six modes so synthetic labels validate cleanly.
_MODE_LABELS = (
    "NoFailure",
    "InstanceFailure",
    "VolumeFailure",
    "NetworkFailure",
    "SshFailure",
    "CleanupFailure",
)


@dataclass(frozen=True)
class SynthSpec:
    num_modes: int = 4  # including the no-failure mode
    base_trace_length: int = 60
    alphabet_size: int = 12  # core event types
    mode_signature_length: int = 4  # insertions and omissions per failure mode
    noise_rate: float = 0.0
    traces_per_mode: int = 40
    fault_free_count: int = 20
    seed: int = 0

    def __post_init__(self):
        for name in (
            "num_modes",
            "base_trace_length",
            "alphabet_size",
            "mode_signature_length",
            "traces_per_mode",
            "fault_free_count",
        ):
            if getattr(self, name) < 1:
                raise InvalidSpec(f"{name} must be >= 1")
        if not 0.0 <= self.noise_rate < 1.0:
            raise InvalidSpec("noise_rate must be in [0, 1)")
        omitted_types_needed = (self.num_modes - 1) * self.mode_signature_length
        if omitted_types_needed > self.alphabet_size:
            raise InvalidSpec(
                "disjoint omission signatures need "
                f"{omitted_types_needed} core types, alphabet has {self.alphabet_size}"
            )
        if self.base_trace_length < self.alphabet_size:
            raise InvalidSpec("base_trace_length must cover the core alphabet at least once")


def core_alphabet(spec: SynthSpec) -> tuple[str, ...]:
    return tuple(f"proc{i:02d}" for i in range(spec.alphabet_size))


def async_alphabet(spec: SynthSpec) -> tuple[str, ...]:
    return tuple(f"async{i}" for i in range(max(2, spec.alphabet_size // 4)))


def canonical_sequence(spec: SynthSpec) -> tuple[str, ...]:
    core = core_alphabet(spec)
    return tuple(core[i % len(core)] for i in range(spec.base_trace_length))


def mode_label(mode: int) -> str:
    return _MODE_LABELS[mode] if mode < len(_MODE_LABELS) else f"Mode{mode}Failure"


def mode_signature(spec: SynthSpec, mode: int) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """(inserted types, omitted core types) planted by a failure mode.

    Mode 0 plants nothing. Signatures are disjoint across modes: each
    failure mode gets its own insertion symbols and its own block of
    core types to omit.
    """
    if mode == 0:
        return (), ()
    core = core_alphabet(spec)
    sig = spec.mode_signature_length
    inserted = tuple(f"fault{mode}_{j}" for j in range(sig))
    start = (mode - 1) * sig
    omitted = tuple(core[(start + j) % len(core)] for j in range(sig))
    return inserted, omitted


def _apply_noise(events: list[str], rate: float, rng: np.random.Generator, asyncs) -> list[str]:
    if rate <= 0.0:
        return list(events)
    out: list[str] = []
    i = 0
    while i < len(events):
        if rng.random() < rate:
            if rng.random() < 0.5 and i + 1 < len(events):
                out.append(events[i + 1])
                out.append(events[i])
                i += 2
                continue
            out.append(asyncs[int(rng.integers(len(asyncs)))])
        out.append(events[i])
        i += 1
    return out


def _plant_mode(events: list[str], spec: SynthSpec, mode: int) -> list[str]:
    inserted, omitted = mode_signature(spec, mode)
    out = list(events)
    for name in omitted:  # drop the first occurrence of each omitted type
        try:
            out.remove(name)
        except ValueError:
            pass
    step = max(1, len(out) // (len(inserted) + 1)) if inserted else 1
    for j, name in enumerate(inserted):
        out.insert(min(len(out), (j + 1) * step + mode), name)
    return out


def generate_campaign(spec: SynthSpec) -> Campaign:
    """Deterministic synthetic campaign with ground truth.

    Trace ids are ff-### for fault-free runs and exp-#### for
    fault-injected ones; labels follow the planted mode.
    """
    rng = np.random.default_rng(spec.seed)
    base = list(canonical_sequence(spec))
    asyncs = async_alphabet(spec)

    fault_free = [
        Trace(
            experiment_id=f"ff-{i:03d}",
            events=tuple(_apply_noise(base, spec.noise_rate, rng, asyncs)),
            fault_free=True,
        )
        for i in range(spec.fault_free_count)
    ]

    fault_injected: list[Trace] = []
    ground_truth: dict[str, str] = {}
    exp_counter = _count()
    for mode in range(spec.num_modes):
        label = mode_label(mode)
        for _ in range(spec.traces_per_mode):
            noisy = _apply_noise(base, spec.noise_rate, rng, asyncs)
            events = _plant_mode(noisy, spec, mode)
            exp_id = f"exp-{next(exp_counter):04d}"
            fault_injected.append(
                Trace(experiment_id=exp_id, events=tuple(events), fault_free=False)
            )
            ground_truth[exp_id] = label

    return Campaign(
        workload_id=f"synth-{spec.seed}",
        fault_injected=tuple(fault_injected),
        fault_free=tuple(fault_free),
        ground_truth=ground_truth,
    )
