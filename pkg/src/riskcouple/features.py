"""Risk binning of coupling values and per-event min-coupling features.

Each coupling matrix gets two thresholds: the high cut ``mean - alpha *
stdev`` (clamped at zero) and the medium cut at the mean. Per event and
per coupling type, the feature value is the minimum normalized coupling
over all present pairs of that type, so a single risky pairing drives the
whole feature.
"""

from __future__ import annotations

import csv
import enum
import warnings
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Optional, Sequence

import numpy as np

from .actions import FactorId, FactorKind
from .coupling import (
    FEATURE_PAIRS,
    CouplingBundle,
    CouplingMatrix,
    Flavor,
    KIND_LABEL,
)
from .events import Event
from .errors import (
    DegenerateDistributionWarning,
    NoPresentFeatures,
    UnknownMemberWarning,
)


class RiskLevel(enum.IntEnum):
    LOW = 1
    MEDIUM = 2
    HIGH = 3


class FeatureFlavor(enum.Enum):
    FREQUENCY = "frequency"
    DURATION = "duration"
    COMBINED = "combined"


@dataclass
class RiskBinningConfig:
    alpha: float = 1.0
    population: str = "all"  # "all" or "nonzero"
    absent_value: float = 1.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.population not in ("all", "nonzero"):
            raise ValueError("population must be 'all' or 'nonzero'")


@dataclass
class Binning:
    """Thresholds from one value population. High below ``t_high``,
    medium below ``t_med``, low otherwise."""

    t_high: float
    t_med: float
    degenerate: bool = False

    def code(self, value: float) -> RiskLevel:
        if self.degenerate:
            return RiskLevel.LOW
        if value < self.t_high:
            return RiskLevel.HIGH
        if value < self.t_med:
            return RiskLevel.MEDIUM
        return RiskLevel.LOW


def bin_values(values: Sequence[float], cfg: Optional[RiskBinningConfig] = None) -> Binning:
    """Mean/stdev binning of an arbitrary value population."""
    cfg = cfg or RiskBinningConfig()
    data = np.asarray(values, dtype=float)
    data = data[~np.isnan(data)]
    if cfg.population == "nonzero":
        data = data[data != 0]
    if data.size == 0:
        warnings.warn("empty value population", DegenerateDistributionWarning)
        return Binning(0.0, 0.0, degenerate=True)
    mean = float(data.mean())
    stdev = float(data.std())  # population standard deviation
    if stdev == 0.0:
        warnings.warn(
            "zero-variance value population; every value binned Low",
            DegenerateDistributionWarning,
        )
        return Binning(0.0, 0.0, degenerate=True)
    return Binning(max(0.0, mean - cfg.alpha * stdev), mean)


def bin_matrix(
    matrix: CouplingMatrix, cfg: Optional[RiskBinningConfig] = None
) -> tuple[Binning, np.ndarray]:
    """Thresholds plus the per-cell risk codes of a normalized matrix.
    Undefined (self-pair) cells are coded 0."""
    if matrix.normalized is None:
        raise ValueError("matrix must be normalized before binning")
    binning = bin_values(matrix.normalized.ravel(), cfg)
    codes = np.zeros(matrix.normalized.shape, dtype=int)
    it = np.nditer(matrix.normalized, flags=["multi_index"])
    for cell in it:
        if not np.isnan(cell):
            codes[it.multi_index] = int(binning.code(float(cell)))
    return binning, codes


@dataclass
class BinningSet:
    """One Binning per coupling matrix, keyed like the bundle."""

    by_matrix: dict[tuple[FactorKind, FactorKind, Flavor], Binning]

    def get(self, a_kind, b_kind, flavor) -> Optional[Binning]:
        return self.by_matrix.get((a_kind, b_kind, flavor))


def bin_bundle(bundle: CouplingBundle, cfg: Optional[RiskBinningConfig] = None) -> BinningSet:
    return BinningSet(
        {key: bin_matrix(m, cfg)[0] for key, m in bundle.matrices.items()}
    )


_FLAVOR_SOURCES = {
    FeatureFlavor.FREQUENCY: (Flavor.FREQUENCY,),
    FeatureFlavor.DURATION: (Flavor.DURATION,),
    FeatureFlavor.COMBINED: (Flavor.FREQUENCY, Flavor.DURATION),
}


def feature_names(flavor: FeatureFlavor) -> list[str]:
    return [
        f"{KIND_LABEL[a]}_{KIND_LABEL[b]}_{source.value}"
        for source in _FLAVOR_SOURCES[flavor]
        for a, b in FEATURE_PAIRS
    ]


@dataclass
class FeatureVector:
    """Min-coupling features of one event sample, with risk codes."""

    sample_id: int  # event emission sequence
    flavor: FeatureFlavor
    values: tuple[float, ...]
    presence: tuple[bool, ...]
    codes: tuple[int, ...]

    def present_codes(self) -> list[int]:
        return [c for c, p in zip(self.codes, self.presence) if p]


def _type_pairs(event: Event, a_kind: FactorKind, b_kind: FactorKind):
    """All (a, b) member pairs of one coupling type present in the event."""
    if a_kind == b_kind:
        members = sorted(
            (m for m in event.members if m.kind == a_kind), key=lambda f: f.id
        )
        return list(combinations(members, 2))
    a_members = [m for m in event.members if m.kind == a_kind]
    if b_kind == FactorKind.LOCATION:
        b_members = [event.location]
    else:
        b_members = [m for m in event.members if m.kind == b_kind]
    return [(a, b) for a in a_members for b in b_members]


def _min_coupling(matrix: CouplingMatrix, pairs) -> Optional[float]:
    """Minimum normalized coupling over the pairs; unknown members count
    as zero coupling (maximal risk) with a warning."""
    if not pairs:
        return None
    best = None
    for a, b in pairs:
        v = matrix.value(a, b)
        if v is None:
            v2 = matrix.value(b, a) if matrix.a_kind == matrix.b_kind else None
            if v2 is None:
                warnings.warn(
                    f"pair ({a.token()}, {b.token()}) outside training "
                    "matrices; treated as zero coupling",
                    UnknownMemberWarning,
                )
                v = 0.0
            else:
                v = v2
        best = v if best is None else min(best, v)
    return best


def extract_feature(
    event: Event,
    bundle: CouplingBundle,
    binnings: BinningSet,
    flavor: FeatureFlavor,
    cfg: Optional[RiskBinningConfig] = None,
) -> FeatureVector:
    cfg = cfg or RiskBinningConfig()
    values: list[float] = []
    presence: list[bool] = []
    codes: list[int] = []
    for source in _FLAVOR_SOURCES[flavor]:
        for a_kind, b_kind in FEATURE_PAIRS:
            matrix = bundle.matrix(a_kind, b_kind, source)
            pairs = _type_pairs(event, a_kind, b_kind) if matrix is not None else []
            value = _min_coupling(matrix, pairs) if matrix is not None else None
            if value is None:
                values.append(cfg.absent_value)
                presence.append(False)
                codes.append(int(RiskLevel.LOW))
            else:
                binning = binnings.get(a_kind, b_kind, source)
                values.append(value)
                presence.append(True)
                codes.append(int(binning.code(value)))
    return FeatureVector(event.seq, flavor, tuple(values), tuple(presence), tuple(codes))


def average_event_risk(vector: FeatureVector) -> tuple[float, RiskLevel]:
    """Mean risk code over present features, mapped at 1.5 / 2.5 cuts."""
    codes = vector.present_codes()
    if not codes:
        raise NoPresentFeatures("event has no present coupling features")
    mean = sum(codes) / len(codes)
    if mean < 1.5:
        level = RiskLevel.LOW
    elif mean < 2.5:
        level = RiskLevel.MEDIUM
    else:
        level = RiskLevel.HIGH
    return mean, level


def featurize_dataset(
    samples: Iterable[Event],
    bundle: CouplingBundle,
    binnings: BinningSet,
    flavors: Sequence[FeatureFlavor] = tuple(FeatureFlavor),
    cfg: Optional[RiskBinningConfig] = None,
) -> dict[FeatureFlavor, list[FeatureVector]]:
    """One vector per sample per flavor, in deterministic sample order."""
    samples = list(samples)
    return {
        flavor: [extract_feature(e, bundle, binnings, flavor, cfg) for e in samples]
        for flavor in flavors
    }


def vectors_to_array(vectors: Sequence[FeatureVector]) -> np.ndarray:
    return np.array([v.values for v in vectors], dtype=float)


def export_features(vectors: Sequence[FeatureVector], path) -> None:
    """CSV feature export, the input for external visualization."""
    if not vectors:
        with open(path, "w", encoding="utf-8", newline="") as handle:
            csv.writer(handle).writerow(["sample_id", "flavor"])
        return
    names = feature_names(vectors[0].flavor)
    header = (
        ["sample_id", "flavor"]
        + names
        + [f"code_{n}" for n in names]
        + [f"present_{n}" for n in names]
        + ["average_risk", "average_level"]
    )
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for v in vectors:
            try:
                avg, level = average_event_risk(v)
                avg_cell, level_cell = f"{avg:.4f}", level.name
            except NoPresentFeatures:
                avg_cell, level_cell = "", ""
            writer.writerow(
                [v.sample_id, v.flavor.value]
                + [f"{x:.6f}" for x in v.values]
                + list(v.codes)
                + [int(p) for p in v.presence]
                + [avg_cell, level_cell]
            )


def load_feature_vectors(path) -> list[FeatureVector]:
    with open(path, "r", encoding="utf-8", newline="") as handle:
        rows = list(csv.reader(handle))
    if len(rows) <= 1:
        return []
    header = rows[0]
    n = (len(header) - 4) // 3
    out = []
    for row in rows[1:]:
        flavor = FeatureFlavor(row[1])
        values = tuple(float(x) for x in row[2 : 2 + n])
        codes = tuple(int(x) for x in row[2 + n : 2 + 2 * n])
        presence = tuple(bool(int(x)) for x in row[2 + 2 * n : 2 + 3 * n])
        out.append(FeatureVector(int(row[0]), flavor, values, presence, codes))
    return out
