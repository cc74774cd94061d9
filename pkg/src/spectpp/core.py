"""Event sequences, reproducible RNG streams, and shared numeric helpers.

Every other module builds on the types here: marked events on a finite
observation window, counter-based random streams that can be split into
named sub-streams without perturbing each other, and the log-space clamp
used whenever two densities are compared by ratio.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

# exp() underflows below and overflows above these bounds in float64;
# log-ratios are clamped here before exponentiation.
LOG_RATIO_MIN = -745.0
LOG_RATIO_MAX = 709.0

_MASK64 = (1 << 64) - 1


def clamped_exp(log_value: float) -> float:
    """exp() of a log-ratio, clamped so the result is finite and nonzero."""
    return math.exp(min(max(log_value, LOG_RATIO_MIN), LOG_RATIO_MAX))


@dataclass(frozen=True)
class Event:
    """A single marked event: occurrence time and integer mark in [0, K)."""

    time: float
    mark: int = 0


@dataclass(frozen=True)
class EventSequence:
    """A time-ordered list of events observed on the window (0, t_end].

    The sequence may be empty; ``t_end`` is the observation horizon, not
    the time of the last event.
    """

    events: tuple[Event, ...]
    t_end: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "events", tuple(self.events))

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    @property
    def times(self) -> np.ndarray:
        return np.array([e.time for e in self.events], dtype=float)

    @property
    def marks(self) -> np.ndarray:
        return np.array([e.mark for e in self.events], dtype=int)

    def inter_event_times(self) -> np.ndarray:
        """Gaps between consecutive events, with the first gap taken from 0."""
        times = self.times
        if times.size == 0:
            return times
        return np.diff(np.concatenate([[0.0], times]))


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of validate_sequence: ok, or the first violation found."""

    ok: bool
    message: str = ""
    index: int | None = None


def validate_sequence(seq: EventSequence, k_cardinality: int) -> ValidationReport:
    """Check ordering, horizon, and mark-range invariants of a sequence.

    Returns the first violation (with the offending event index) rather
    than collecting all of them; an empty sequence is vacuously valid.
    """
    if not math.isfinite(seq.t_end) or seq.t_end <= 0:
        return ValidationReport(False, f"t_end must be positive and finite, got {seq.t_end}")
    prev = 0.0
    for i, event in enumerate(seq.events):
        if not math.isfinite(event.time) or event.time < 0:
            return ValidationReport(False, f"non-finite or negative time at index {i}", i)
        if event.time <= prev and i > 0:
            return ValidationReport(False, f"non-monotone at index {i}", i)
        if event.time > seq.t_end:
            return ValidationReport(False, f"time exceeds horizon at index {i}", i)
        if not 0 <= event.mark < k_cardinality:
            return ValidationReport(False, f"mark out of range at index {i}", i)
        prev = event.time
    return ValidationReport(True)


def _derive_stream_id(parent_stream: int, name: str) -> int:
    digest = hashlib.blake2b(f"{parent_stream}/{name}".encode("utf-8"), digest_size=8)
    return int.from_bytes(digest.digest(), "little")


@dataclass
class RngStream:
    """A named, reproducible random stream backed by counter-based Philox.

    The same (seed, stream) pair always yields the same draw sequence;
    distinct stream ids are statistically independent. Children derive
    their stream id from the parent id and a label, so e.g. drafting and
    residual resampling can consume independently of each other.
    """

    seed: int
    stream: int = 0
    _generator: np.random.Generator | None = field(default=None, repr=False, compare=False)

    @property
    def generator(self) -> np.random.Generator:
        if self._generator is None:
            key = np.array([self.seed & _MASK64, self.stream & _MASK64], dtype=np.uint64)
            self._generator = np.random.Generator(np.random.Philox(key=key))
        return self._generator

    def child(self, name: str) -> "RngStream":
        """Fresh independent stream labelled relative to this one."""
        return RngStream(self.seed, _derive_stream_id(self.stream, name))

    def uniform(self, size=None):
        return self.generator.random(size)

    def normal(self, size=None):
        return self.generator.standard_normal(size)

    def exponential(self, rate: float) -> float:
        return float(self.generator.standard_exponential() / rate)

    def categorical(self, probabilities: np.ndarray) -> int:
        """Single draw from a probability vector via inverse CDF."""
        cdf = np.cumsum(probabilities)
        u = self.generator.random() * cdf[-1]
        return int(min(np.searchsorted(cdf, u, side="right"), len(cdf) - 1))

    def shuffled(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)


def uniform01(rng: RngStream) -> float:
    """One uniform draw in [0, 1)."""
    return float(rng.uniform())


def standard_normal(rng: RngStream) -> float:
    """One standard normal draw."""
    return float(rng.normal())


# ---------------------------------------------------------------------------
# Sequence file format: one JSON record per line, fields "t_end" and
# "events" (list of [time, mark] pairs), UTF-8.
# ---------------------------------------------------------------------------


def sequence_to_record(seq: EventSequence) -> dict:
    return {"t_end": seq.t_end, "events": [[e.time, e.mark] for e in seq.events]}


def sequence_from_record(record: dict) -> EventSequence:
    events = tuple(Event(float(t), int(k)) for t, k in record["events"])
    return EventSequence(events, float(record["t_end"]))


def write_sequences(path: str | Path, sequences: Iterable[EventSequence]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for seq in sequences:
            fh.write(json.dumps(sequence_to_record(seq)) + "\n")


def read_sequences(path: str | Path) -> list[EventSequence]:
    sequences = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                sequences.append(sequence_from_record(json.loads(line)))
    return sequences


def sequence_from_arrays(times: Sequence[float], marks: Sequence[int], t_end: float) -> EventSequence:
    events = tuple(Event(float(t), int(k)) for t, k in zip(times, marks))
    return EventSequence(events, float(t_end))
