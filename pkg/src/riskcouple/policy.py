"""Weighted rule-based access policy and consistency comparison.

Each read is scored on five context components (device placement,
traffic, person-document-location co-existence, document placement,
document time-of-day), every component resolved to a 1..3 risk code.
The overall risk is a fixed weighted sum; unseen context fails closed
at the highest code.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .actions import FactorId, FactorKind
from .coupling import CouplingBundle, Flavor
from .clustering import Decision
from .events import Event
from .features import Binning, BinningSet, RiskBinningConfig, RiskLevel, bin_values
from .errors import LengthMismatch, MissingCouplingWarning


@dataclass
class PolicyWeights:
    w_devloc: float = 0.5
    w_traffic: float = 0.5
    w_coexist: float = 0.5
    w_docloc: float = 0.5
    w_doctime: float = 0.5
    w_dev: float = 0.3
    w_env: float = 0.4
    w_act: float = 0.3
    permit_threshold: float = 1.5

    def __post_init__(self):
        if abs(self.w_dev + self.w_env + self.w_act - 1.0) > 1e-9:
            raise ValueError("overall weights must sum to 1")

    def to_json_obj(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_json_obj(cls, obj: dict) -> "PolicyWeights":
        return cls(**obj)


@dataclass
class TrafficModel:
    """Risk binning over per-event person counts. The default direction
    treats crowding as risky (shoulder surfing); 'rarity' flips it to
    penalize unusually empty rooms instead."""

    mean: float
    stdev: float
    alpha: float = 1.0
    direction: str = "crowding"

    @classmethod
    def fit(
        cls,
        events: Sequence[Event],
        alpha: float = 1.0,
        direction: str = "crowding",
    ) -> "TrafficModel":
        counts = [
            sum(1 for m in e.members if m.kind == FactorKind.PERSON) for e in events
        ]
        arr = np.asarray(counts, dtype=float)
        if arr.size == 0:
            return cls(0.0, 0.0, alpha, direction)
        return cls(float(arr.mean()), float(arr.std()), alpha, direction)

    def code(self, count: int) -> RiskLevel:
        if self.direction == "crowding":
            if count > self.mean + self.alpha * self.stdev:
                return RiskLevel.HIGH
            if count > self.mean:
                return RiskLevel.MEDIUM
            return RiskLevel.LOW
        if count < max(0.0, self.mean - self.alpha * self.stdev):
            return RiskLevel.HIGH
        if count < self.mean:
            return RiskLevel.MEDIUM
        return RiskLevel.LOW

    def to_json_obj(self) -> dict:
        return {
            "mean": self.mean,
            "stdev": self.stdev,
            "alpha": self.alpha,
            "direction": self.direction,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "TrafficModel":
        return cls(**obj)


@dataclass
class PolicyRiskBreakdown:
    r_devloc: int
    r_traffic: int
    r_coexist: int
    r_docloc: int
    r_doctime: int
    r_dev: float
    r_env: float
    r_act: float
    r_overall: float
    decision: Decision

    def to_json_obj(self) -> dict:
        obj = dict(self.__dict__)
        obj["decision"] = self.decision.value
        return obj


@dataclass
class PolicyContext:
    """Trained inputs needed to score a read: frequency couplings, their
    binnings, the auxiliary coupling binnings and the traffic model."""

    bundle: CouplingBundle
    binnings: BinningSet
    triple_binning: Binning
    doctime_binning: Binning
    traffic: TrafficModel

    @classmethod
    def fit(
        cls,
        bundle: CouplingBundle,
        binnings: BinningSet,
        events: Sequence[Event],
        cfg: Optional[RiskBinningConfig] = None,
        traffic_direction: str = "crowding",
    ) -> "PolicyContext":
        cfg = cfg or RiskBinningConfig()
        return cls(
            bundle=bundle,
            binnings=binnings,
            triple_binning=bin_values(bundle.triple.normalized.ravel(), cfg)
            if bundle.triple.normalized.size
            else bin_values([], cfg),
            doctime_binning=bin_values(bundle.doc_time.normalized.ravel(), cfg)
            if bundle.doc_time.normalized.size
            else bin_values([], cfg),
            traffic=TrafficModel.fit(events, alpha=cfg.alpha, direction=traffic_direction),
        )


def _fail_closed(component: str) -> int:
    warnings.warn(
        f"no coupling data for {component}; component fails closed at High",
        MissingCouplingWarning,
    )
    return int(RiskLevel.HIGH)


def _matrix_code(
    ctx: PolicyContext,
    a_kind: FactorKind,
    b_kind: FactorKind,
    a: FactorId,
    b: FactorId,
    component: str,
) -> int:
    matrix = ctx.bundle.matrix(a_kind, b_kind, Flavor.FREQUENCY)
    binning = ctx.binnings.get(a_kind, b_kind, Flavor.FREQUENCY)
    if matrix is None or binning is None:
        return _fail_closed(component)
    value = matrix.value(a, b)
    if value is None:
        return _fail_closed(component)
    return int(binning.code(value))


def evaluate_policy(
    event: Event,
    device: FactorId,
    doc: FactorId,
    ctx: PolicyContext,
    weights: PolicyWeights,
    read_time: Optional[int] = None,
) -> PolicyRiskBreakdown:
    """Score one read against the weighted rule-based policy."""
    loc = event.location
    r_devloc = _matrix_code(
        ctx, FactorKind.DEVICE, FactorKind.LOCATION, device, loc, "device-location"
    )
    persons = [m for m in event.members if m.kind == FactorKind.PERSON]
    r_traffic = int(ctx.traffic.code(len(persons)))

    if persons:
        values = [ctx.bundle.triple.value(p, doc, loc) for p in persons]
        known = [v for v in values if v is not None]
        if any(v is None for v in values):
            warnings.warn(
                "person outside triple-coupling population; "
                "contributes zero coupling",
                MissingCouplingWarning,
            )
            known.append(0.0)
        r_coexist = int(ctx.triple_binning.code(min(known)))
    else:
        r_coexist = _fail_closed("co-existence (no people present)")

    r_docloc = _matrix_code(
        ctx, FactorKind.DOCUMENT, FactorKind.LOCATION, doc, loc, "document-location"
    )

    t = read_time if read_time is not None else event.start_time
    dt_value = ctx.bundle.doc_time.value(doc, (t // 3600) % 24)
    r_doctime = (
        _fail_closed("document-time")
        if dt_value is None
        else int(ctx.doctime_binning.code(dt_value))
    )

    r_dev = weights.w_devloc * r_devloc
    r_env = weights.w_traffic * r_traffic + weights.w_coexist * r_coexist
    r_act = weights.w_docloc * r_docloc + weights.w_doctime * r_doctime
    r_overall = weights.w_dev * r_dev + weights.w_env * r_env + weights.w_act * r_act
    decision = (
        Decision.PERMIT if r_overall < weights.permit_threshold else Decision.DENY
    )
    return PolicyRiskBreakdown(
        r_devloc,
        r_traffic,
        r_coexist,
        r_docloc,
        r_doctime,
        r_dev,
        r_env,
        r_act,
        r_overall,
        decision,
    )


# -- consistency tables ----------------------------------------------------


@dataclass
class ConsistencyTable:
    """Policy {permit, deny} crossed with the cluster-level bucket
    {medium-low-or-safer, high}; escalated reads are reported separately
    and excluded from the agreement rate."""

    permit_medium_low: int = 0
    permit_high: int = 0
    deny_medium_low: int = 0
    deny_high: int = 0
    escalated: int = 0
    level_histogram: dict = field(default_factory=dict)

    @property
    def total(self) -> int:
        return (
            self.permit_medium_low
            + self.permit_high
            + self.deny_medium_low
            + self.deny_high
        )

    @property
    def permit_consistency(self) -> float:
        n = self.permit_medium_low + self.permit_high
        return 100.0 * self.permit_medium_low / n if n else 100.0

    @property
    def deny_consistency(self) -> float:
        n = self.deny_medium_low + self.deny_high
        return 100.0 * self.deny_high / n if n else 100.0

    @property
    def overall_consistency(self) -> float:
        if not self.total:
            return 100.0
        return 100.0 * (self.permit_medium_low + self.deny_high) / self.total


def cluster_bucket(cluster_level: str) -> str:
    """Everything below H aggregates into the safer bucket."""
    return "high" if cluster_level == "H" else "medium_low"


def compare_consistency(
    cluster_levels: Sequence[Optional[str]],
    policy_decisions: Sequence[Decision],
) -> ConsistencyTable:
    """Cross-tabulate the two decision streams per read. ``cluster_levels``
    holds the read's cluster level, or None for escalated outliers."""
    if len(cluster_levels) != len(policy_decisions):
        raise LengthMismatch(
            f"{len(cluster_levels)} cluster levels vs {len(policy_decisions)} policy decisions"
        )
    table = ConsistencyTable()
    for level, decision in zip(cluster_levels, policy_decisions):
        key = level if level is not None else "escalated"
        table.level_histogram[key] = table.level_histogram.get(key, 0) + 1
        if level is None:
            table.escalated += 1
            continue
        bucket = cluster_bucket(level)
        if decision is Decision.PERMIT:
            if bucket == "high":
                table.permit_high += 1
            else:
                table.permit_medium_low += 1
        else:
            if bucket == "high":
                table.deny_high += 1
            else:
                table.deny_medium_low += 1
    return table


def tune_threshold(
    r_overalls: Sequence[float],
    cluster_levels: Sequence[Optional[str]],
    grid: Sequence[float],
) -> tuple[float, float]:
    """Sweep the permit threshold over the grid and keep the value that
    maximizes overall consistency; ties take the smallest threshold."""
    if not grid:
        raise ValueError("threshold grid must be non-empty")
    if len(r_overalls) != len(cluster_levels):
        raise LengthMismatch("risk stream and cluster-level stream differ in length")
    best_theta = None
    best_score = -1.0
    for theta in sorted(grid):
        decisions = [
            Decision.PERMIT if r < theta else Decision.DENY for r in r_overalls
        ]
        score = compare_consistency(cluster_levels, decisions).overall_consistency
        if score > best_score:
            best_score = score
            best_theta = theta
    return best_theta, best_score


def export_consistency(table: ConsistencyTable, path, label: str = "") -> None:
    """CSV mirroring the published comparison layout: policy columns,
    cluster-bucket rows, per-column and overall consistency."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["policy", "permit", "permit", "deny", "deny"])
        writer.writerow(
            ["cluster_bucket", "medium_low", "high", "medium_low", "high"]
        )
        writer.writerow(
            [
                "count",
                table.permit_medium_low,
                table.permit_high,
                table.deny_medium_low,
                table.deny_high,
            ]
        )
        writer.writerow(
            [
                "consistency",
                f"{table.permit_consistency:.2f}%",
                "",
                f"{table.deny_consistency:.2f}%",
                "",
            ]
        )
        writer.writerow(
            ["overall_consistency", f"{table.overall_consistency:.2f}%", "", "", ""]
        )
        writer.writerow(["escalated", table.escalated, "", "", ""])
        for level in sorted(table.level_histogram):
            writer.writerow([f"level_{level}", table.level_histogram[level], "", "", ""])
