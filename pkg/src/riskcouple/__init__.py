"""Coupling-based risk scoring for co-presence action logs.

The library turns an enter/exit/read/release action log into co-presence
events, builds frequency and duration coupling statistics between people,
documents, devices and locations, bins them into risk codes, clusters
per-event feature vectors, and cross-checks the clustering decisions
against a weighted rule-based access policy.
"""

from .actions import (
    Act,
    ActionLog,
    ActionRecord,
    FactorId,
    FactorKind,
    LogFormat,
    device,
    document,
    format_time,
    load_log,
    location,
    parse_record,
    person,
    save_log,
)
from .clustering import (
    Algorithm,
    ClusterAssignment,
    ClusteringConfig,
    ClusterRiskSummary,
    Covariance,
    Decision,
    Linkage,
    agglomerative,
    crv_to_level,
    dataset_risk,
    dbscan,
    decide_cluster,
    decide_samples,
    gmm_em,
    summarize_clusters,
)
from .coupling import (
    CouplingBundle,
    CouplingMatrix,
    Flavor,
    build_all_couplings,
    load_matrix,
    normalize,
    orient_pair,
    save_matrix,
)
from .errors import RiskCoupleError
from .events import (
    DwellConfig,
    Event,
    EventIndex,
    EventStateMachine,
    SampleSelector,
    build_event_index,
    current_event,
    event_samples,
)
from .features import (
    FeatureFlavor,
    FeatureVector,
    RiskBinningConfig,
    RiskLevel,
    average_event_risk,
    bin_bundle,
    bin_values,
    extract_feature,
    featurize_dataset,
)
from .pipeline import (
    PipelineConfig,
    PipelineResult,
    TrainedModel,
    fit_model,
    fit_threshold,
    run_pipeline,
    train_decision_tree,
)
from .policy import (
    ConsistencyTable,
    PolicyContext,
    PolicyWeights,
    compare_consistency,
    evaluate_policy,
    tune_threshold,
)
from .simulate import GroundTruth, ScenarioConfig, default_scenario, generate, make_pair
from .tree import TrainedTree, TreeConfig, predict, train_tree

__version__ = "0.1.0"
