"""Action log schema: parsing, validation and chronological loading.

The canonical wire formats are JSON Lines (one object per line, keys
``time, act, agent, device, document, location, monitor``; absent keys
omitted) and an equivalent 7-column CSV with a header row.
"""

from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Optional

from .errors import MalformedLine, MissingField, UnknownAction


class FactorKind(enum.Enum):
    PERSON = "person"
    DEVICE = "device"
    DOCUMENT = "document"
    LOCATION = "location"


# Canonical prefixes used when serializing factor tokens.
_KIND_PREFIX = {
    FactorKind.PERSON: "actor",
    FactorKind.DEVICE: "dev",
    FactorKind.DOCUMENT: "doc",
    FactorKind.LOCATION: "loc",
}

_PREFIX_KIND = {
    "actor": FactorKind.PERSON,
    "ppl": FactorKind.PERSON,
    "person": FactorKind.PERSON,
    "dev": FactorKind.DEVICE,
    "device": FactorKind.DEVICE,
    "doc": FactorKind.DOCUMENT,
    "document": FactorKind.DOCUMENT,
    "loc": FactorKind.LOCATION,
    "location": FactorKind.LOCATION,
}


@dataclass(frozen=True)
class FactorId:
    """Identity of one tracked object. ``(kind, id)`` is globally unique."""

    kind: FactorKind
    id: str

    def __post_init__(self):
        if not self.id:
            raise ValueError("factor id must be non-empty")

    def __lt__(self, other: "FactorId") -> bool:
        return (self.kind.value, self.id) < (other.kind.value, other.id)

    def token(self) -> str:
        return f"{_KIND_PREFIX[self.kind]}:{self.id}"

    @classmethod
    def parse(cls, token: str, default_kind: FactorKind) -> "FactorId":
        token = token.strip()
        if ":" in token:
            prefix, _, rest = token.partition(":")
            kind = _PREFIX_KIND.get(prefix.strip().lower())
            if kind is not None:
                return cls(kind, rest.strip())
        return cls(default_kind, token)


def person(id: str) -> FactorId:
    return FactorId(FactorKind.PERSON, id)


def device(id: str) -> FactorId:
    return FactorId(FactorKind.DEVICE, id)


def document(id: str) -> FactorId:
    return FactorId(FactorKind.DOCUMENT, id)


def location(id: str) -> FactorId:
    return FactorId(FactorKind.LOCATION, id)


class Act(enum.Enum):
    ENTER = "enter"
    EXIT = "exit"
    READ = "read"
    RELEASE = "release"


class LogFormat(enum.Enum):
    JSON_LINES = "jsonl"
    CSV = "csv"


CSV_COLUMNS = ("time", "act", "agent", "device", "document", "location", "monitor")

# default factor kind per column when the token carries no prefix
_FIELD_KIND = {
    "agent": FactorKind.PERSON,
    "device": FactorKind.DEVICE,
    "document": FactorKind.DOCUMENT,
    "location": FactorKind.LOCATION,
    "monitor": FactorKind.DEVICE,
}


def _parse_time(value) -> int:
    if isinstance(value, (int, float)):
        t = int(value)
    else:
        text = str(value).strip()
        try:
            if text.endswith("Z"):
                text = text[:-1] + "+00:00"
            dt = datetime.fromisoformat(text)
        except ValueError:
            try:
                t = int(text)
            except ValueError:
                raise MalformedLine(f"unparseable timestamp: {value!r}")
            else:
                dt = None
        else:
            if dt.tzinfo is None:
                dt = dt.replace(tzinfo=timezone.utc)
        if dt is not None:
            t = int(dt.timestamp())
    if t < 0:
        raise MalformedLine(f"negative timestamp: {value!r}")
    return t


def format_time(t: int) -> str:
    return datetime.fromtimestamp(t, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class ActionRecord:
    """One parsed log line, timestamps in UTC epoch seconds."""

    time: int
    act: Act
    agent: Optional[FactorId] = None
    device: Optional[FactorId] = None
    document: Optional[FactorId] = None
    location: Optional[FactorId] = None
    monitor: Optional[FactorId] = None

    def __post_init__(self):
        if self.time < 0:
            raise MissingField("time must be non-negative")
        if self.act in (Act.ENTER, Act.EXIT):
            if self.agent is None or self.location is None:
                raise MissingField(
                    f"{self.act.value} requires agent and location"
                )
        elif self.act in (Act.READ, Act.RELEASE):
            if self.device is None or self.document is None:
                raise MissingField(
                    f"{self.act.value} requires device and document"
                )

    def to_json_line(self) -> str:
        obj = {"time": format_time(self.time), "act": self.act.value}
        for key in ("agent", "device", "document", "location", "monitor"):
            fac = getattr(self, key)
            if fac is not None:
                obj[key] = fac.token()
        return json.dumps(obj, separators=(",", ":"))

    def to_csv_row(self) -> list[str]:
        row = [format_time(self.time), self.act.value]
        for key in ("agent", "device", "document", "location", "monitor"):
            fac = getattr(self, key)
            row.append(fac.token() if fac is not None else "")
        return row


def _build_record(fields: dict) -> ActionRecord:
    if "time" not in fields or fields.get("time") in ("", None):
        raise MissingField("record has no time")
    if "act" not in fields or fields.get("act") in ("", None):
        raise MissingField("record has no act")
    act_text = str(fields["act"]).strip().lower()
    try:
        act = Act(act_text)
    except ValueError:
        raise UnknownAction(f"unknown action {act_text!r}")
    kwargs = {"time": _parse_time(fields["time"]), "act": act}
    for key, default_kind in _FIELD_KIND.items():
        value = fields.get(key)
        if value in (None, ""):
            continue
        kwargs[key] = FactorId.parse(str(value), default_kind)
    return ActionRecord(**kwargs)


def parse_record(line: str, format: LogFormat, strict: bool = True) -> ActionRecord:
    """Parse one complete record from ``line`` in the declared format.

    In strict mode unknown extra fields are rejected; lenient mode
    ignores them.
    """
    if format is LogFormat.JSON_LINES:
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedLine(f"invalid JSON: {exc}")
        if not isinstance(obj, dict):
            raise MalformedLine("JSON record must be an object")
        extra = set(obj) - set(CSV_COLUMNS)
        if extra and strict:
            raise MalformedLine(f"unknown fields: {sorted(extra)}")
        return _build_record({k: obj.get(k) for k in CSV_COLUMNS})
    if format is LogFormat.CSV:
        try:
            row = next(csv.reader(io.StringIO(line)))
        except StopIteration:
            raise MalformedLine("empty CSV line")
        if len(row) > len(CSV_COLUMNS) and strict:
            raise MalformedLine(f"expected {len(CSV_COLUMNS)} columns, got {len(row)}")
        fields = dict(zip(CSV_COLUMNS, row))
        return _build_record(fields)
    raise ValueError(f"unsupported format {format!r}")


@dataclass(frozen=True)
class ActionLog:
    """Chronologically ordered action records (stable for equal times)."""

    records: tuple[ActionRecord, ...]

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def act_counts(self) -> dict[str, int]:
        counts = {act.value: 0 for act in Act}
        for rec in self.records:
            counts[rec.act.value] += 1
        return counts

    @classmethod
    def from_records(cls, records: Iterable[ActionRecord]) -> "ActionLog":
        indexed = list(enumerate(records))
        indexed.sort(key=lambda pair: (pair[1].time, pair[0]))
        return cls(tuple(rec for _, rec in indexed))


def iter_lines(path, format: LogFormat):
    """Yield (line_number, payload_line) pairs, skipping blank lines and
    the CSV header row."""
    with open(path, "r", encoding="utf-8") as handle:
        for number, raw in enumerate(handle, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            if format is LogFormat.CSV and number == 1:
                first = line.split(",")[0].strip().lower()
                if first == "time":
                    continue
            yield number, line


def load_log(path, format: LogFormat, strict: bool = True) -> ActionLog:
    """Load and stably time-sort every record in ``path``.

    Parse failures carry the offending line number.
    """
    path = Path(path)
    records = []
    for number, line in iter_lines(path, format):
        try:
            records.append(parse_record(line, format, strict=strict))
        except MalformedLine as exc:
            exc.line_number = number
            raise
    return ActionLog.from_records(records)


def save_log(log: ActionLog, path, format: LogFormat) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        if format is LogFormat.JSON_LINES:
            for rec in log:
                handle.write(rec.to_json_line() + "\n")
        else:
            writer = csv.writer(handle)
            writer.writerow(CSV_COLUMNS)
            for rec in log:
                writer.writerow(rec.to_csv_row())


def format_from_path(path) -> LogFormat:
    return LogFormat.CSV if str(path).endswith(".csv") else LogFormat.JSON_LINES
