"""End-to-end orchestration: log -> events -> couplings -> features ->
clusters -> per-read decisions, plus the rule-based policy stream and the
consistency comparison between the two."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .actions import ActionLog, FactorId
from .clustering import (
    Algorithm,
    ClusterAssignment,
    ClusteringConfig,
    ClusterRiskSummary,
    Decision,
    agglomerative,
    dbscan,
    decide_cluster,
    decide_samples,
    gmm_em,
    summarize_clusters,
)
from .coupling import CouplingBundle, build_all_couplings
from .errors import InvalidConfig
from .events import (
    DwellConfig,
    Event,
    EventIndex,
    ReadObservation,
    SampleSelector,
    build_event_index,
    event_samples,
)
from .features import (
    BinningSet,
    FeatureFlavor,
    FeatureVector,
    RiskBinningConfig,
    bin_bundle,
    extract_feature,
    featurize_dataset,
    vectors_to_array,
)
from .policy import (
    ConsistencyTable,
    PolicyContext,
    PolicyRiskBreakdown,
    PolicyWeights,
    compare_consistency,
    evaluate_policy,
    tune_threshold,
)
from .tree import TrainedTree, TreeConfig, train_tree


@dataclass
class PipelineConfig:
    """Knobs for every stage, JSON round-trippable."""

    dwell: DwellConfig = field(default_factory=DwellConfig)
    binning: RiskBinningConfig = field(default_factory=RiskBinningConfig)
    clustering: ClusteringConfig = field(default_factory=ClusteringConfig)
    weights: PolicyWeights = field(default_factory=PolicyWeights)
    tree: TreeConfig = field(default_factory=TreeConfig)
    flavor: FeatureFlavor = FeatureFlavor.COMBINED
    selector: str = SampleSelector.ALL_EVENTS
    traffic_direction: str = "crowding"
    time_buckets: int = 24

    def to_json_obj(self) -> dict:
        return {
            "dwell": {
                "document_dwell": self.dwell.document_dwell,
                "close_on_device_exit": self.dwell.close_on_device_exit,
            },
            "binning": {
                "alpha": self.binning.alpha,
                "population": self.binning.population,
                "absent_value": self.binning.absent_value,
            },
            "clustering": {
                "algorithm": self.clustering.algorithm.value,
                "eps": self.clustering.eps,
                "min_pts": self.clustering.min_pts,
                "k": self.clustering.k,
                "linkage": self.clustering.linkage.value,
                "gmm_max_iter": self.clustering.gmm_max_iter,
                "gmm_tolerance": self.clustering.gmm_tolerance,
                "covariance": self.clustering.covariance.value,
                "seed": self.clustering.seed,
            },
            "weights": self.weights.to_json_obj(),
            "tree": {
                "max_depth": self.tree.max_depth,
                "min_samples_leaf": self.tree.min_samples_leaf,
            },
            "flavor": self.flavor.value,
            "selector": self.selector,
            "traffic_direction": self.traffic_direction,
            "time_buckets": self.time_buckets,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "PipelineConfig":
        from .clustering import Covariance, Linkage

        cfg = cls()
        if "dwell" in obj:
            cfg.dwell = DwellConfig(**obj["dwell"])
        if "binning" in obj:
            cfg.binning = RiskBinningConfig(**obj["binning"])
        if "clustering" in obj:
            c = dict(obj["clustering"])
            c["algorithm"] = Algorithm(c.get("algorithm", "dbscan"))
            c["linkage"] = Linkage(c.get("linkage", "ward"))
            c["covariance"] = Covariance(c.get("covariance", "diagonal"))
            cfg.clustering = ClusteringConfig(**c)
        if "weights" in obj:
            cfg.weights = PolicyWeights.from_json_obj(obj["weights"])
        if "tree" in obj:
            cfg.tree = TreeConfig(**obj["tree"])
        cfg.flavor = FeatureFlavor(obj.get("flavor", "combined"))
        cfg.selector = obj.get("selector", SampleSelector.ALL_EVENTS)
        cfg.traffic_direction = obj.get("traffic_direction", "crowding")
        cfg.time_buckets = obj.get("time_buckets", 24)
        return cfg

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_obj(), indent=2))

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_json_obj(json.loads(Path(path).read_text()))


def default_pipeline_config() -> PipelineConfig:
    path = Path(__file__).parent / "data" / "default_pipeline.json"
    if path.exists():
        return PipelineConfig.load(path)
    return PipelineConfig()


def run_clustering(vectors: np.ndarray, cfg: ClusteringConfig, k_hint: Optional[int] = None) -> ClusterAssignment:
    if cfg.algorithm is Algorithm.DBSCAN:
        return dbscan(vectors, cfg.eps, cfg.min_pts)
    k = cfg.k or k_hint
    if k is None:
        raise InvalidConfig(
            f"{cfg.algorithm.value} needs an explicit cluster count"
        )
    if cfg.algorithm is Algorithm.AGGLOMERATIVE:
        return agglomerative(vectors, k, cfg.linkage)
    return gmm_em(
        vectors,
        k,
        seed=cfg.seed,
        max_iter=cfg.gmm_max_iter,
        tolerance=cfg.gmm_tolerance,
        covariance=cfg.covariance,
    )


@dataclass
class ReadEvaluation:
    """Both decision streams for one read, plus the combined outcome."""

    read: ReadObservation
    event_seq: int
    cluster_label: int
    cluster_level: Optional[str]  # None when the sample is an outlier
    cluster_decision: Decision
    breakdown: PolicyRiskBreakdown

    @property
    def combined(self) -> Decision:
        """Fail-closed merge: a deny from either stream wins, an outlier
        escalates, otherwise permit."""
        if Decision.DENY in (self.cluster_decision, self.breakdown.decision):
            return Decision.DENY
        if self.cluster_decision is Decision.ESCALATE:
            return Decision.ESCALATE
        return Decision.PERMIT


@dataclass
class PipelineResult:
    config: PipelineConfig
    index: EventIndex
    bundle: CouplingBundle
    binnings: BinningSet
    samples: list[Event]
    vectors: dict[FeatureFlavor, list[FeatureVector]]
    assignment: ClusterAssignment
    summaries: list[ClusterRiskSummary]
    sample_decisions: list[Decision]
    policy_ctx: PolicyContext
    reads: list[ReadEvaluation]
    consistency: ConsistencyTable

    @property
    def cluster_vectors(self) -> list[FeatureVector]:
        return self.vectors[self.config.flavor]

    def sample_position(self, event_seq: int) -> Optional[int]:
        for i, event in enumerate(self.samples):
            if event.seq == event_seq:
                return i
        return None


def _evaluate_reads(
    index: EventIndex,
    samples: Sequence[Event],
    assignment: ClusterAssignment,
    summaries: Sequence[ClusterRiskSummary],
    vectors: Sequence[FeatureVector],
    ctx: PolicyContext,
    weights: PolicyWeights,
) -> list[ReadEvaluation]:
    position = {event.seq: i for i, event in enumerate(samples)}
    events_by_seq = {event.seq: event for event in index.events}
    levels = {s.index: s.level for s in summaries}
    out = []
    for read in index.reads:
        event = events_by_seq[read.event_seq]
        pos = position.get(read.event_seq)
        if pos is None:
            label, level, cluster_decision = -1, None, Decision.ESCALATE
        else:
            label = int(assignment.labels[pos])
            level = None if label == -1 else levels.get(label)
            cluster_decision = decide_cluster(
                levels.get(label, "H"),
                vectors[pos].present_codes(),
                outlier=label == -1,
            )
        breakdown = evaluate_policy(
            event, read.device, read.document, ctx, weights, read_time=read.time
        )
        out.append(ReadEvaluation(read, read.event_seq, label, level, cluster_decision, breakdown))
    return out


def run_pipeline(log: ActionLog, config: Optional[PipelineConfig] = None) -> PipelineResult:
    """Run every stage on one log and cross-check the two decision routes."""
    config = config or default_pipeline_config()
    index = build_event_index(log, config.dwell)
    bundle = build_all_couplings(index, time_buckets=config.time_buckets)
    binnings = bin_bundle(bundle, config.binning)
    samples = event_samples(index, config.selector)
    vectors = featurize_dataset(samples, bundle, binnings, cfg=config.binning)
    cluster_vectors = vectors[config.flavor]
    assignment = run_clustering(vectors_to_array(cluster_vectors), config.clustering)
    summaries = summarize_clusters(assignment, cluster_vectors)
    sample_decisions = decide_samples(assignment, summaries, cluster_vectors)
    ctx = PolicyContext.fit(
        bundle,
        binnings,
        index.events,
        config.binning,
        traffic_direction=config.traffic_direction,
    )
    reads = _evaluate_reads(
        index, samples, assignment, summaries, cluster_vectors, ctx, config.weights
    )
    consistency = compare_consistency(
        [r.cluster_level for r in reads],
        [r.breakdown.decision for r in reads],
    )
    return PipelineResult(
        config=config,
        index=index,
        bundle=bundle,
        binnings=binnings,
        samples=samples,
        vectors=vectors,
        assignment=assignment,
        summaries=summaries,
        sample_decisions=sample_decisions,
        policy_ctx=ctx,
        reads=reads,
        consistency=consistency,
    )


def fit_threshold(result: PipelineResult, grid: Optional[Sequence[float]] = None) -> tuple[float, float]:
    """Pick the permit threshold that best matches the cluster route on
    this log's reads."""
    if grid is None:
        grid = [round(0.85 + 0.05 * i, 2) for i in range(35)]
    return tune_threshold(
        [r.breakdown.r_overall for r in result.reads],
        [r.cluster_level for r in result.reads],
        grid,
    )


# -- supervised labels -------------------------------------------------------


def decision_labels(
    result: PipelineResult, mode: str = "decision"
) -> tuple[np.ndarray, list[str], list[int]]:
    """Training matrix and cluster-route labels.

    ``mode="decision"`` gives binary permit/deny labels; ``mode="level"``
    gives the seven-step cluster risk level instead. Outlier samples carry
    neither and are left out; the returned index list maps rows back to
    sample positions."""
    if mode not in ("decision", "level"):
        raise InvalidConfig(f"unknown label mode {mode!r}")
    levels = {s.index: s.level for s in result.summaries}
    xs, ys, idx = [], [], []
    for i, (vec, label, decision) in enumerate(
        zip(
            result.cluster_vectors,
            result.assignment.labels,
            result.sample_decisions,
        )
    ):
        if decision is Decision.ESCALATE or int(label) == -1:
            continue
        xs.append(vec.values)
        ys.append(decision.value if mode == "decision" else levels[int(label)])
        idx.append(i)
    return np.array(xs, dtype=float), ys, idx


def train_decision_tree(
    result: PipelineResult, cfg: Optional[TreeConfig] = None
) -> tuple[TrainedTree, float]:
    """Distill the cluster-route decisions into a tree; returns the tree
    and its training accuracy."""
    from .tree import cross_dataset_accuracy

    x, y, _ = decision_labels(result)
    tree = train_tree(x, y, cfg or result.config.tree)
    return tree, cross_dataset_accuracy(tree, x, y)


# -- incremental decision model ----------------------------------------------


@dataclass
class TrainedModel:
    """Everything needed to score unseen events against a fitted run."""

    config: PipelineConfig
    bundle: CouplingBundle
    binnings: BinningSet
    policy_ctx: PolicyContext
    train_points: np.ndarray
    train_labels: np.ndarray
    cluster_levels: dict[int, str]

    @classmethod
    def from_result(cls, result: PipelineResult) -> "TrainedModel":
        return cls(
            config=result.config,
            bundle=result.bundle,
            binnings=result.binnings,
            policy_ctx=result.policy_ctx,
            train_points=vectors_to_array(result.cluster_vectors),
            train_labels=np.asarray(result.assignment.labels),
            cluster_levels={s.index: s.level for s in result.summaries},
        )

    def classify_event(self, event: Event) -> tuple[FeatureVector, int, Optional[str], Decision]:
        """Nearest-assigned-neighbor cluster lookup within the density
        radius; anything farther escalates."""
        vec = extract_feature(
            event, self.bundle, self.binnings, self.config.flavor, self.config.binning
        )
        mask = self.train_labels != -1
        if not mask.any():
            return vec, -1, None, Decision.ESCALATE
        points = self.train_points[mask]
        labels = self.train_labels[mask]
        d2 = ((points - np.asarray(vec.values)) ** 2).sum(axis=1)
        nearest = int(np.argmin(d2))
        if d2[nearest] > self.config.clustering.eps**2:
            return vec, -1, None, Decision.ESCALATE
        label = int(labels[nearest])
        level = self.cluster_levels.get(label, "H")
        return vec, label, level, decide_cluster(level, vec.present_codes(), False)

    def evaluate_read(
        self, event: Event, device: FactorId, doc: FactorId, read_time: Optional[int] = None
    ) -> tuple[Decision, dict]:
        vec, label, level, cluster_decision = self.classify_event(event)
        breakdown = evaluate_policy(
            event, device, doc, self.policy_ctx, self.config.weights, read_time
        )
        if Decision.DENY in (cluster_decision, breakdown.decision):
            combined = Decision.DENY
        elif cluster_decision is Decision.ESCALATE:
            combined = Decision.ESCALATE
        else:
            combined = Decision.PERMIT
        detail = {
            "decision": combined.value,
            "cluster": {
                "label": label,
                "level": level,
                "decision": cluster_decision.value,
            },
            "policy": breakdown.to_json_obj(),
        }
        return combined, detail


def fit_model(log: ActionLog, config: Optional[PipelineConfig] = None) -> TrainedModel:
    return TrainedModel.from_result(run_pipeline(log, config))
