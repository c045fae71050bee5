"""Pairwise co-presence statistics and normalized coupling matrices.

Raw frequency counts the maximal co-presence episodes of two objects;
raw duration totals the seconds they share an event. Normalization
divides each A-element row by its own row maximum over B, so a value of
1 marks the strongest context of that element and values near 0 mark
rare (risky) pairings.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .actions import FactorId, FactorKind
from .events import Event, EventIndex
from .errors import UnknownFactor


class Flavor(enum.Enum):
    FREQUENCY = "frequency"
    DURATION = "duration"


# Orientation tie-break and the pinned matrix layout both follow this order.
CANONICAL_KIND_ORDER = (
    FactorKind.PERSON,
    FactorKind.DOCUMENT,
    FactorKind.DEVICE,
    FactorKind.LOCATION,
)

KIND_LABEL = {
    FactorKind.PERSON: "ppl",
    FactorKind.DOCUMENT: "doc",
    FactorKind.DEVICE: "dev",
    FactorKind.LOCATION: "loc",
}
_LABEL_KIND = {v: k for k, v in KIND_LABEL.items()}


@dataclass
class CouplingMatrix:
    """Raw and normalized coupling values for one (A, B) factor-set pair.

    Rows are A elements, columns are B elements; self-pairs on a same-kind
    matrix are NaN. ``normalized`` is filled by :func:`normalize`.
    """

    a_kind: FactorKind
    b_kind: FactorKind
    a_ids: tuple[FactorId, ...]
    b_ids: tuple[FactorId, ...]
    raw: np.ndarray
    flavor: Flavor
    normalized: Optional[np.ndarray] = None

    @property
    def name(self) -> str:
        return f"{KIND_LABEL[self.a_kind]}_{KIND_LABEL[self.b_kind]}_{self.flavor.value}"

    def a_index(self, factor: FactorId) -> Optional[int]:
        try:
            return self.a_ids.index(factor)
        except ValueError:
            return None

    def b_index(self, factor: FactorId) -> Optional[int]:
        try:
            return self.b_ids.index(factor)
        except ValueError:
            return None

    def value(self, a: FactorId, b: FactorId) -> Optional[float]:
        """Normalized coupling for a concrete pair, or None when either
        element is outside the training population."""
        i, j = self.a_index(a), self.b_index(b)
        if i is None or j is None:
            return None
        v = self.normalized[i, j]
        return None if math.isnan(v) else float(v)


def _contains(event: Event, factor: FactorId) -> bool:
    if factor.kind == FactorKind.LOCATION:
        return event.location == factor
    return factor in event.members


def _event_list(index: EventIndex, factor: FactorId) -> list[Event]:
    if factor.kind == FactorKind.LOCATION:
        events = index.by_location.get(factor)
    else:
        events = index.by_element.get(factor)
    if events is None:
        raise UnknownFactor(f"{factor.token()} never appears in the index")
    return events


def _episodes(intervals: Iterable[tuple[int, int]]) -> tuple[int, int]:
    """Merge positive-length [start, end) intervals; return (count of
    maximal runs, total length). Inputs must be chronological."""
    freq = 0
    dur = 0
    run_end = None
    for start, end in intervals:
        if end <= start:
            continue
        if run_end is not None and start <= run_end:
            run_end = max(run_end, end)
        else:
            freq += 1
            run_end = end
        dur += end - start
    return freq, dur


def accumulate_pair_stats(
    index: EventIndex, a_i: FactorId, b_j: FactorId
) -> tuple[int, int]:
    """Count maximal co-presence episodes of ``a_i`` and ``b_j`` and the
    total seconds of co-presence, scanning ``a_i``'s event list."""
    if a_i == b_j:
        raise ValueError("self-pairs are undefined")
    events = _event_list(index, a_i)
    _event_list(index, b_j)  # raises UnknownFactor for unseen elements
    intervals = (
        (e.start_time, e.end_time) for e in events if _contains(e, b_j)
    )
    return _episodes(intervals)


def _population(index: EventIndex, kind: FactorKind) -> tuple[FactorId, ...]:
    if kind == FactorKind.LOCATION:
        return tuple(index.locations())
    return tuple(index.elements(kind))


def build_pair_matrices(
    index: EventIndex, a_kind: FactorKind, b_kind: FactorKind
) -> list[CouplingMatrix]:
    """Frequency and duration matrices for one oriented kind pair."""
    a_ids = _population(index, a_kind)
    b_ids = _population(index, b_kind)
    freq = np.zeros((len(a_ids), len(b_ids)))
    dur = np.zeros((len(a_ids), len(b_ids)))
    for i, a in enumerate(a_ids):
        for j, b in enumerate(b_ids):
            if a == b:
                freq[i, j] = np.nan
                dur[i, j] = np.nan
                continue
            f, d = accumulate_pair_stats(index, a, b)
            freq[i, j] = f
            dur[i, j] = d
    return [
        normalize(CouplingMatrix(a_kind, b_kind, a_ids, b_ids, freq, Flavor.FREQUENCY)),
        normalize(CouplingMatrix(a_kind, b_kind, a_ids, b_ids, dur, Flavor.DURATION)),
    ]


def normalize(matrix: CouplingMatrix) -> CouplingMatrix:
    """Fill ``normalized`` with each raw row divided by its row maximum
    over the B dimension; all-zero rows map to all-zero rows."""
    raw = matrix.raw
    with np.errstate(invalid="ignore"):
        row_max = np.nanmax(raw, axis=1, keepdims=True) if raw.size else np.zeros((raw.shape[0], 1))
        safe = np.where(row_max > 0, row_max, 1.0)
        matrix.normalized = raw / safe
    return matrix


def per_element_totals(raw: np.ndarray, axis: int) -> np.ndarray:
    return np.nansum(raw, axis=1 - axis)


def orient_pair(
    stats_ab: CouplingMatrix, stats_ba: CouplingMatrix
) -> CouplingMatrix:
    """Pick the orientation whose A side has the larger variance of
    per-element raw totals; exact ties fall back to the canonical kind
    order (people, documents, devices, locations)."""
    var_a = float(np.var(per_element_totals(stats_ab.raw, 0))) if stats_ab.raw.size else 0.0
    var_b = float(np.var(per_element_totals(stats_ba.raw, 0))) if stats_ba.raw.size else 0.0
    if var_a > var_b:
        return stats_ab
    if var_b > var_a:
        return stats_ba
    order = {k: i for i, k in enumerate(CANONICAL_KIND_ORDER)}
    return stats_ab if order[stats_ab.a_kind] <= order[stats_ba.a_kind] else stats_ba


@dataclass
class TripleCoupling:
    """Frequency of (person, document, location) co-occurrence episodes,
    normalized per person over the (document, location) cells."""

    persons: tuple[FactorId, ...]
    cells: tuple[tuple[FactorId, FactorId], ...]  # (document, location)
    raw: np.ndarray
    normalized: Optional[np.ndarray] = None

    def value(self, person: FactorId, doc: FactorId, loc: FactorId) -> Optional[float]:
        try:
            i = self.persons.index(person)
            j = self.cells.index((doc, loc))
        except ValueError:
            return None
        return float(self.normalized[i, j])


def build_triple_coupling(index: EventIndex) -> TripleCoupling:
    persons = _population(index, FactorKind.PERSON)
    docs = _population(index, FactorKind.DOCUMENT)
    locs = _population(index, FactorKind.LOCATION)
    cells = tuple((d, l) for d in docs for l in locs)
    raw = np.zeros((len(persons), len(cells)))
    for i, p in enumerate(persons):
        events = index.by_element.get(p, [])
        for j, (d, l) in enumerate(cells):
            intervals = (
                (e.start_time, e.end_time)
                for e in events
                if e.location == l and d in e.members
            )
            freq, _ = _episodes(intervals)
            raw[i, j] = freq
    triple = TripleCoupling(persons, cells, raw)
    row_max = raw.max(axis=1, keepdims=True) if raw.size else np.zeros((len(persons), 1))
    safe = np.where(row_max > 0, row_max, 1.0)
    triple.normalized = raw / safe
    return triple


@dataclass
class DocTimeCoupling:
    """Hour-of-day read frequencies per document, max-normalized per
    document over the buckets."""

    docs: tuple[FactorId, ...]
    buckets: int
    raw: np.ndarray
    normalized: Optional[np.ndarray] = None

    def value(self, doc: FactorId, hour: int) -> Optional[float]:
        try:
            i = self.docs.index(doc)
        except ValueError:
            return None
        return float(self.normalized[i, hour * self.buckets // 24])


def build_doc_time_coupling(index: EventIndex, buckets: int = 24) -> DocTimeCoupling:
    docs = _population(index, FactorKind.DOCUMENT)
    raw = np.zeros((len(docs), buckets))
    doc_pos = {d: i for i, d in enumerate(docs)}
    for read in index.reads:
        hour = (read.time // 3600) % 24
        raw[doc_pos[read.document], hour * buckets // 24] += 1
    coupling = DocTimeCoupling(docs, buckets, raw)
    row_max = raw.max(axis=1, keepdims=True) if raw.size else np.zeros((len(docs), 1))
    safe = np.where(row_max > 0, row_max, 1.0)
    coupling.normalized = raw / safe
    return coupling


# The four feature couplings, in the fixed feature-vector order.
FEATURE_PAIRS = (
    (FactorKind.DOCUMENT, FactorKind.LOCATION),
    (FactorKind.PERSON, FactorKind.DOCUMENT),
    (FactorKind.PERSON, FactorKind.LOCATION),
    (FactorKind.PERSON, FactorKind.PERSON),
)

# All canonically oriented pairs considered by build_all_couplings.
_ALL_PAIRS = (
    (FactorKind.PERSON, FactorKind.DOCUMENT),
    (FactorKind.PERSON, FactorKind.DEVICE),
    (FactorKind.PERSON, FactorKind.LOCATION),
    (FactorKind.PERSON, FactorKind.PERSON),
    (FactorKind.DOCUMENT, FactorKind.DEVICE),
    (FactorKind.DOCUMENT, FactorKind.LOCATION),
    (FactorKind.DEVICE, FactorKind.LOCATION),
)


@dataclass
class CouplingBundle:
    """Every coupling statistic mined from one event index."""

    matrices: dict[tuple[FactorKind, FactorKind, Flavor], CouplingMatrix]
    triple: TripleCoupling
    doc_time: DocTimeCoupling
    skipped: list[str] = field(default_factory=list)

    def matrix(
        self, a_kind: FactorKind, b_kind: FactorKind, flavor: Flavor
    ) -> Optional[CouplingMatrix]:
        return self.matrices.get((a_kind, b_kind, flavor))


def build_all_couplings(index: EventIndex, time_buckets: int = 24) -> CouplingBundle:
    """Build frequency and duration matrices for every canonically
    oriented pair with at least two B-side elements (plus person-person),
    the person-document-location triple coupling and the per-document
    hour-of-day coupling. Skipped pairs are reported by name."""
    matrices = {}
    skipped = []
    for a_kind, b_kind in _ALL_PAIRS:
        a_ids = _population(index, a_kind)
        b_ids = _population(index, b_kind)
        if not a_ids or not b_ids:
            skipped.append(f"{KIND_LABEL[a_kind]}_{KIND_LABEL[b_kind]}: empty side")
            continue
        if a_kind != b_kind and len(b_ids) < 2:
            skipped.append(
                f"{KIND_LABEL[a_kind]}_{KIND_LABEL[b_kind]}: "
                f"single-element B side"
            )
            continue
        if a_kind == b_kind and len(a_ids) < 2:
            skipped.append(f"{KIND_LABEL[a_kind]}_{KIND_LABEL[b_kind]}: too few elements")
            continue
        for matrix in build_pair_matrices(index, a_kind, b_kind):
            matrices[(a_kind, b_kind, matrix.flavor)] = matrix
    return CouplingBundle(
        matrices=matrices,
        triple=build_triple_coupling(index),
        doc_time=build_doc_time_coupling(index, time_buckets),
        skipped=skipped,
    )


# -- CSV fixture format ---------------------------------------------------
#
# <name>.csv: header row = B ids, first column = A ids, empty cell = NaN.
# <name>.meta.json sidecar: {"a_kind", "b_kind", "flavor", "values"}.


def save_matrix(matrix: CouplingMatrix, path, values: str = "raw") -> None:
    path = Path(path)
    data = matrix.raw if values == "raw" else matrix.normalized
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow([""] + [b.id for b in matrix.b_ids])
        for i, a in enumerate(matrix.a_ids):
            row = [a.id] + [
                "" if math.isnan(v) else repr(float(v)) for v in data[i]
            ]
            writer.writerow(row)
    meta = {
        "a_kind": KIND_LABEL[matrix.a_kind],
        "b_kind": KIND_LABEL[matrix.b_kind],
        "flavor": matrix.flavor.value,
        "values": values,
    }
    path.with_suffix(".meta.json").write_text(json.dumps(meta, indent=2))


def load_matrix(path) -> CouplingMatrix:
    path = Path(path)
    meta = json.loads(path.with_suffix(".meta.json").read_text())
    a_kind = _LABEL_KIND[meta["a_kind"]]
    b_kind = _LABEL_KIND[meta["b_kind"]]
    flavor = Flavor(meta["flavor"])
    with open(path, "r", encoding="utf-8", newline="") as handle:
        rows = list(csv.reader(handle))
    b_ids = tuple(FactorId(b_kind, name) for name in rows[0][1:])
    a_ids = tuple(FactorId(a_kind, row[0]) for row in rows[1:])
    data = np.array(
        [[float(cell) if cell else np.nan for cell in row[1:]] for row in rows[1:]]
    )
    matrix = CouplingMatrix(a_kind, b_kind, a_ids, b_ids, data, flavor)
    if meta.get("values") == "normalized":
        matrix.normalized = data
    return matrix
