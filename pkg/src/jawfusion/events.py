"""Jaw-movement event classes and labeled intervals.

Ground truth and predictions share one shape: (class, onset, offset) in
seconds. Event lists are serialized as tab-separated ``onset<TAB>offset<TAB>class``
lines with at least 3 decimals on the times.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

EVENT_CLASSES = ("bite", "chew-bite", "grazing-chew", "rumination-chew")
NO_EVENT = "no-event"
MODEL_CLASSES = EVENT_CLASSES + (NO_EVENT,)

CLASS_TO_ID = {name: i for i, name in enumerate(MODEL_CLASSES)}
NO_EVENT_ID = CLASS_TO_ID[NO_EVENT]

ACTIVITIES = ("grazing", "rumination")


@dataclass(frozen=True)
class EventLabel:
    """One labeled jaw-movement interval."""

    label: str
    onset: float
    offset: float

    def __post_init__(self):
        if self.label not in EVENT_CLASSES:
            raise ValueError(f"unknown event class {self.label!r}")
        if self.onset < 0:
            raise ValueError(f"negative onset {self.onset}")
        if not self.onset < self.offset:
            raise ValueError(
                f"onset must precede offset, got [{self.onset}, {self.offset}]"
            )

    @property
    def duration(self) -> float:
        return self.offset - self.onset

    def overlap(self, start: float, end: float) -> float:
        """Length of intersection with [start, end]."""
        return max(0.0, min(self.offset, end) - max(self.onset, start))


def events_to_tsv(events: list[EventLabel]) -> str:
    lines = [f"{e.onset:.6f}\t{e.offset:.6f}\t{e.label}" for e in events]
    return "".join(line + "\n" for line in lines)


def events_from_tsv(text: str) -> list[EventLabel]:
    events = []
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"label line {lineno}: expected 3 tab-separated fields, got {len(parts)}")
        try:
            onset, offset = float(parts[0]), float(parts[1])
        except ValueError as exc:
            raise ValueError(f"label line {lineno}: non-numeric time") from exc
        try:
            events.append(EventLabel(parts[2], onset, offset))
        except ValueError as exc:
            raise ValueError(f"label line {lineno}: {exc}") from exc
    return events


def write_events_tsv(events: list[EventLabel], path: str | Path) -> None:
    Path(path).write_text(events_to_tsv(events))


def read_events_tsv(path: str | Path) -> list[EventLabel]:
    return events_from_tsv(Path(path).read_text())


def check_non_overlapping(events: list[EventLabel]) -> None:
    """Events of the four classes must not overlap each other."""
    ordered = sorted(events, key=lambda e: e.onset)
    for prev, nxt in zip(ordered, ordered[1:]):
        if nxt.onset < prev.offset - 1e-9:
            raise ValueError(
                f"overlapping events: {prev.label} [{prev.onset}, {prev.offset}] and "
                f"{nxt.label} [{nxt.onset}, {nxt.offset}]"
            )
