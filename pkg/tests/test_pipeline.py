import warnings

import numpy as np
import pytest

from riskcouple.actions import Act, ActionLog, ActionRecord, device, document, location, person
from riskcouple.clustering import Algorithm, ClusteringConfig, Decision
from riskcouple.errors import InvalidConfig
from riskcouple.events import Event
from riskcouple.features import FeatureFlavor
from riskcouple.pipeline import (
    PipelineConfig,
    TrainedModel,
    decision_labels,
    default_pipeline_config,
    fit_model,
    fit_threshold,
    run_clustering,
    run_pipeline,
    train_decision_tree,
)

WARD = location("ward")
HALL = location("hall")
ALICE = person("alice")
BOB = person("bob")
CARA = person("cara")
TABLET = device("tablet")
CHART = document("chart")


def tiny_log():
    """A routine ward pattern repeated, plus one odd hall read."""
    records = []
    t = 0
    for _ in range(12):
        records += [
            ActionRecord(t, Act.ENTER, agent=ALICE, location=WARD),
            ActionRecord(t, Act.ENTER, agent=BOB, location=WARD),
            ActionRecord(t, Act.ENTER, agent=TABLET, location=WARD),
            ActionRecord(t + 10, Act.READ, device=TABLET, document=CHART),
            ActionRecord(t + 100, Act.RELEASE, device=TABLET, document=CHART),
            ActionRecord(t + 200, Act.EXIT, agent=ALICE, location=WARD),
            ActionRecord(t + 200, Act.EXIT, agent=BOB, location=WARD),
            ActionRecord(t + 200, Act.EXIT, agent=TABLET, location=WARD),
        ]
        t += 3600
    records += [
        ActionRecord(t, Act.ENTER, agent=CARA, location=HALL),
        ActionRecord(t, Act.ENTER, agent=TABLET, location=HALL),
        ActionRecord(t + 5, Act.READ, device=TABLET, document=CHART),
        ActionRecord(t + 50, Act.RELEASE, device=TABLET, document=CHART),
        ActionRecord(t + 60, Act.EXIT, agent=CARA, location=HALL),
        ActionRecord(t + 60, Act.EXIT, agent=TABLET, location=HALL),
    ]
    return ActionLog.from_records(records)


def tiny_config():
    cfg = PipelineConfig()
    cfg.clustering = ClusteringConfig(eps=0.3, min_pts=3)
    return cfg


@pytest.fixture()
def tiny_result():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return run_pipeline(tiny_log(), tiny_config())


class TestConfig:
    def test_round_trip(self):
        cfg = default_pipeline_config()
        restored = PipelineConfig.from_json_obj(cfg.to_json_obj())
        assert restored.to_json_obj() == cfg.to_json_obj()

    def test_save_load(self, tmp_path):
        cfg = PipelineConfig()
        cfg.flavor = FeatureFlavor.FREQUENCY
        path = tmp_path / "pipeline.json"
        cfg.save(path)
        assert PipelineConfig.load(path).flavor is FeatureFlavor.FREQUENCY

    def test_bundled_defaults(self):
        cfg = default_pipeline_config()
        assert cfg.clustering.algorithm is Algorithm.DBSCAN
        assert cfg.clustering.eps == 0.15
        assert cfg.clustering.min_pts == 10
        assert cfg.weights.permit_threshold == 1.6
        assert cfg.flavor is FeatureFlavor.COMBINED


class TestRunClustering:
    def test_non_density_algorithms_need_k(self):
        vectors = np.random.default_rng(0).uniform(size=(10, 2))
        cfg = ClusteringConfig(algorithm=Algorithm.GMM)
        with pytest.raises(InvalidConfig):
            run_clustering(vectors, cfg)
        cfg.k = 2
        assert run_clustering(vectors, cfg).algorithm is Algorithm.GMM

    def test_k_hint_fallback(self):
        vectors = np.random.default_rng(0).uniform(size=(10, 2))
        cfg = ClusteringConfig(algorithm=Algorithm.AGGLOMERATIVE)
        got = run_clustering(vectors, cfg, k_hint=3)
        assert got.n_clusters == 3


class TestRunPipeline:
    def test_result_shapes_align(self, tiny_result):
        r = tiny_result
        n = len(r.samples)
        assert len(r.assignment.labels) == n
        assert len(r.sample_decisions) == n
        for flavor, vectors in r.vectors.items():
            assert len(vectors) == n
        assert len(r.reads) == 13
        assert r.consistency.total + r.consistency.escalated == 13

    def test_routine_reads_permitted_odd_read_flagged(self, tiny_result):
        routine = tiny_result.reads[:-1]
        odd = tiny_result.reads[-1]
        assert all(e.combined is Decision.PERMIT for e in routine)
        assert odd.combined in (Decision.DENY, Decision.ESCALATE)

    def test_sample_position(self, tiny_result):
        seq = tiny_result.samples[3].seq
        assert tiny_result.sample_position(seq) == 3
        assert tiny_result.sample_position(-999) is None

    def test_default_run_consistency(self, default_run):
        # the bundled config was tuned on this scenario, so the two
        # decision routes should rarely disagree
        assert default_run.consistency.overall_consistency >= 97.0

    def test_fit_threshold_returns_gridpoint(self, tiny_result):
        theta, score = fit_threshold(tiny_result)
        assert 0.85 <= theta <= 2.55
        assert 0.0 <= score <= 100.0


class TestDecisionLabels:
    def test_binary_mode(self, tiny_result):
        x, y, idx = decision_labels(tiny_result)
        assert len(x) == len(y) == len(idx)
        assert set(y) <= {"permit", "deny"}
        # outliers are excluded
        assert all(int(tiny_result.assignment.labels[i]) != -1 for i in idx)

    def test_level_mode(self, tiny_result):
        _, y, _ = decision_labels(tiny_result, mode="level")
        assert set(y) <= {"L", "LM", "ML", "M", "MH", "HM", "H"}

    def test_unknown_mode(self, tiny_result):
        with pytest.raises(InvalidConfig):
            decision_labels(tiny_result, mode="color")

    def test_train_decision_tree_fits_training_set(self, tiny_result):
        from riskcouple.tree import TreeConfig

        tree, accuracy = train_decision_tree(
            tiny_result, TreeConfig(max_depth=None, min_samples_leaf=1)
        )
        assert accuracy == 1.0


class TestTrainedModel:
    def test_known_event_gets_permitted(self, tiny_result):
        model = TrainedModel.from_result(tiny_result)
        event = Event(WARD, frozenset({ALICE, BOB, TABLET, CHART}), 10, 100, -1)
        decision, detail = model.evaluate_read(event, TABLET, CHART, read_time=10)
        assert decision is Decision.PERMIT
        assert detail["decision"] == "permit"
        assert detail["cluster"]["label"] != -1
        assert detail["policy"]["decision"] == "permit"

    def test_unseen_context_escalates_or_denies(self, tiny_result):
        model = TrainedModel.from_result(tiny_result)
        event = Event(HALL, frozenset({CARA, TABLET, CHART}), 10, 100, -1)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            decision, detail = model.evaluate_read(event, TABLET, CHART, read_time=10)
        assert decision in (Decision.DENY, Decision.ESCALATE)

    def test_fit_model_matches_from_result(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model = fit_model(tiny_log(), tiny_config())
        assert model.train_points.shape[0] > 0
        assert model.config.clustering.eps == 0.3
