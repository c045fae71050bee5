"""Event reconstruction: location-scoped co-presence snapshots.

A fold over the chronological action log maintains one current event per
location. Every state change closes the previous event at that location
and emits a new immutable snapshot, which is appended to the chronological
list of each member and of the location itself.
"""

from __future__ import annotations

import heapq
import json
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .actions import Act, ActionLog, ActionRecord, FactorId, FactorKind, format_time
from .errors import (
    ExitWithoutPresenceWarning,
    ReadWithUnplacedDeviceWarning,
    UnknownLocation,
)


@dataclass
class DwellConfig:
    """How long a document stays in an event after its last read."""

    document_dwell: int = 300
    close_on_device_exit: bool = True

    def __post_init__(self):
        if self.document_dwell <= 0:
            raise ValueError("document_dwell must be positive")


@dataclass
class Event:
    """Snapshot of the factors co-present at one location.

    ``end_time`` is assigned when the next state change at the location
    supersedes this snapshot (or when the log ends); the member set never
    changes after emission.
    """

    location: FactorId
    members: frozenset[FactorId]
    start_time: int
    end_time: int
    seq: int  # global emission order, used for deterministic sampling

    @property
    def duration(self) -> int:
        return self.end_time - self.start_time

    def to_json_obj(self) -> dict:
        return {
            "location": self.location.token(),
            "members": sorted(m.token() for m in self.members),
            "start": format_time(self.start_time),
            "end": format_time(self.end_time),
        }


@dataclass(frozen=True)
class ReadObservation:
    """One read action resolved to its physical context."""

    time: int
    device: FactorId
    document: FactorId
    location: FactorId
    event_seq: int
    record_index: int


@dataclass
class EventIndex:
    """Chronological event lists per element and per location."""

    by_element: dict[FactorId, list[Event]] = field(default_factory=dict)
    by_location: dict[FactorId, list[Event]] = field(default_factory=dict)
    reads: list[ReadObservation] = field(default_factory=list)
    events: list[Event] = field(default_factory=list)
    last_time: int = 0
    state_changes: dict[FactorId, int] = field(default_factory=dict)
    warnings: dict[str, int] = field(default_factory=dict)

    def locations(self) -> list[FactorId]:
        return sorted(self.by_location, key=lambda f: f.id)

    def elements(self, kind: Optional[FactorKind] = None) -> list[FactorId]:
        out = [f for f in self.by_element if kind is None or f.kind == kind]
        return sorted(out, key=lambda f: f.id)


class EventStateMachine:
    """Incremental event builder; also drives the live decision service."""

    def __init__(self, dwell: Optional[DwellConfig] = None):
        self.dwell = dwell or DwellConfig()
        self.index = EventIndex()
        self._current: dict[FactorId, Event] = {}
        self._element_loc: dict[FactorId, FactorId] = {}
        self._expiry_heap: list[tuple[int, int, FactorId, FactorId]] = []
        self._last_read: dict[tuple[FactorId, FactorId], int] = {}
        self._opened_by: dict[tuple[FactorId, FactorId], FactorId] = {}
        self._seq = 0
        self._record_index = 0

    # -- internal transitions -------------------------------------------

    def _warn(self, category, message: str):
        warnings.warn(message, category, stacklevel=3)
        name = category.__name__
        self.index.warnings[name] = self.index.warnings.get(name, 0) + 1

    def _emit(self, loc: FactorId, members: frozenset[FactorId], time: int):
        prev = self._current.get(loc)
        if prev is not None:
            prev.end_time = time
        event = Event(loc, members, time, time, self._seq)
        self._seq += 1
        self._current[loc] = event
        self.index.events.append(event)
        self.index.by_location.setdefault(loc, []).append(event)
        for member in members:
            self.index.by_element.setdefault(member, []).append(event)
        self.index.state_changes[loc] = self.index.state_changes.get(loc, 0) + 1
        return event

    def _remove(self, factor: FactorId, loc: FactorId, time: int):
        members = self._current[loc].members - {factor}
        self._element_loc.pop(factor, None)
        if factor.kind == FactorKind.DEVICE and self.dwell.close_on_device_exit:
            for doc in [
                d
                for (l, d), dev in self._opened_by.items()
                if l == loc and dev == factor and d in members
            ]:
                members = members - {doc}
                self._element_loc.pop(doc, None)
                self._opened_by.pop((loc, doc), None)
                self._last_read.pop((loc, doc), None)
        self._emit(loc, members, time)

    def _add(self, factor: FactorId, loc: FactorId, time: int):
        old_loc = self._element_loc.get(factor)
        if old_loc is not None and old_loc != loc:
            self._remove(factor, old_loc, time)
        current = self._current.get(loc)
        members = current.members if current is not None else frozenset()
        if factor in members:
            return current
        self._element_loc[factor] = loc
        return self._emit(loc, members | {factor}, time)

    def _apply_expiries(self, now: int):
        while self._expiry_heap and self._expiry_heap[0][0] <= now:
            deadline, _, loc, doc = heapq.heappop(self._expiry_heap)
            key = (loc, doc)
            # stale entry: the document was re-read, released or moved
            if self._last_read.get(key) is None:
                continue
            if self._last_read[key] + self.dwell.document_dwell != deadline:
                continue
            if self._element_loc.get(doc) != loc:
                continue
            self._last_read.pop(key, None)
            self._opened_by.pop(key, None)
            self._remove(doc, loc, deadline)

    # -- public API ------------------------------------------------------

    def apply(self, record: ActionRecord) -> Optional[Event]:
        """Fold one record into the state; returns the event relevant to
        the record (for reads: the event the read happens in), or None if
        the record was skipped."""
        self._apply_expiries(record.time)
        self.index.last_time = max(self.index.last_time, record.time)
        index_in_log = self._record_index
        self._record_index += 1

        if record.act is Act.ENTER:
            return self._add(record.agent, record.location, record.time)

        if record.act is Act.EXIT:
            loc = record.location
            current = self._current.get(loc)
            if current is None or record.agent not in current.members:
                self._warn(
                    ExitWithoutPresenceWarning,
                    f"exit of absent factor {record.agent.token()} at {loc.token()}",
                )
                return None
            self._remove(record.agent, loc, record.time)
            return self._current[loc]

        if record.act is Act.READ:
            loc = self._element_loc.get(record.device)
            if loc is None:
                self._warn(
                    ReadWithUnplacedDeviceWarning,
                    f"read from unplaced device {record.device.token()}",
                )
                return None
            doc = record.document
            event = self._add(doc, loc, record.time) or self._current[loc]
            key = (loc, doc)
            self._last_read[key] = record.time
            self._opened_by[key] = record.device
            heapq.heappush(
                self._expiry_heap,
                (record.time + self.dwell.document_dwell, self._seq, loc, doc),
            )
            self.index.reads.append(
                ReadObservation(
                    record.time, record.device, doc, loc, event.seq, index_in_log
                )
            )
            return event

        if record.act is Act.RELEASE:
            doc = record.document
            loc = self._element_loc.get(doc)
            if loc is None:
                self._warn(
                    ExitWithoutPresenceWarning,
                    f"release of absent document {doc.token()}",
                )
                return None
            self._last_read.pop((loc, doc), None)
            self._opened_by.pop((loc, doc), None)
            self._remove(doc, loc, record.time)
            return self._current[loc]

        raise ValueError(f"unhandled act {record.act!r}")

    def finalize(self) -> EventIndex:
        """Close every open event at the log's last timestamp."""
        for event in self._current.values():
            event.end_time = max(event.end_time, self.index.last_time)
        return self.index

    def current_members(self, loc: FactorId) -> frozenset[FactorId]:
        current = self._current.get(loc)
        return current.members if current is not None else frozenset()

    def location_of(self, factor: FactorId) -> Optional[FactorId]:
        return self._element_loc.get(factor)


def build_event_index(log: ActionLog, dwell: Optional[DwellConfig] = None) -> EventIndex:
    """Replay the log into an immutable event index. Deterministic: the
    same log always produces identical indexes."""
    machine = EventStateMachine(dwell)
    for record in log:
        machine.apply(record)
    return machine.finalize()


def current_event(index: EventIndex, location: FactorId) -> Event:
    """Last known state at ``location``."""
    events = index.by_location.get(location)
    if not events:
        raise UnknownLocation(f"no events at {location.token()}")
    return events[-1]


class SampleSelector:
    ALL_EVENTS = "all"
    EVENTS_WITH_DOCUMENT = "with_document"


def event_samples(index: EventIndex, selector: str = SampleSelector.ALL_EVENTS) -> list[Event]:
    """Deterministic, emission-ordered event snapshots for clustering."""
    events = sorted(index.events, key=lambda e: e.seq)
    if selector == SampleSelector.ALL_EVENTS:
        return events
    if selector == SampleSelector.EVENTS_WITH_DOCUMENT:
        return [
            e
            for e in events
            if any(m.kind == FactorKind.DOCUMENT for m in e.members)
        ]
    raise ValueError(f"unknown selector {selector!r}")


def export_event_trace(index: EventIndex, path) -> None:
    """JSON Lines of {location, members, start, end} for debugging."""
    with open(path, "w", encoding="utf-8") as handle:
        for event in sorted(index.events, key=lambda e: e.seq):
            handle.write(json.dumps(event.to_json_obj(), separators=(",", ":")) + "\n")
