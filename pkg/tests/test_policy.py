import csv

import pytest

from riskcouple.actions import (
    Act,
    ActionLog,
    ActionRecord,
    device,
    document,
    location,
    person,
)
from riskcouple.clustering import Decision
from riskcouple.coupling import build_all_couplings
from riskcouple.errors import LengthMismatch, MissingCouplingWarning
from riskcouple.events import Event, build_event_index, event_samples
from riskcouple.features import bin_bundle
from riskcouple.policy import (
    ConsistencyTable,
    PolicyContext,
    PolicyRiskBreakdown,
    PolicyWeights,
    TrafficModel,
    compare_consistency,
    evaluate_policy,
    export_consistency,
    cluster_bucket,
    tune_threshold,
)

WARD = location("ward")
HALL = location("hall")
ALICE = person("alice")
BOB = person("bob")
CARA = person("cara")
TABLET = device("tablet")
CHART = document("chart")
NOTES = document("notes")


def log_of(*records):
    return ActionLog.from_records(records)


def enter(t, who, where=WARD):
    return ActionRecord(t, Act.ENTER, agent=who, location=where)


def exit_(t, who, where=WARD):
    return ActionRecord(t, Act.EXIT, agent=who, location=where)


def read(t, dev=TABLET, doc=CHART):
    return ActionRecord(t, Act.READ, device=dev, document=doc)


def release(t, dev=TABLET, doc=CHART):
    return ActionRecord(t, Act.RELEASE, device=dev, document=doc)


def trained_context():
    """Routine: alice+bob read the chart in the ward; cara reads the notes
    in the hall. Repeated enough to shape both coupling distributions."""
    records = []
    t = 0
    for _ in range(8):
        records += [
            enter(t, ALICE),
            enter(t, BOB),
            enter(t, TABLET),
            read(t + 10),
            release(t + 100),
            exit_(t + 200, ALICE),
            exit_(t + 200, BOB),
            exit_(t + 200, TABLET),
            enter(t + 300, CARA, HALL),
            enter(t + 300, TABLET, HALL),
            read(t + 310, doc=NOTES),
            release(t + 350, doc=NOTES),
            exit_(t + 400, CARA, HALL),
            exit_(t + 400, TABLET, HALL),
        ]
        t += 3600
    # one rare crossover so the hall sees the chart once
    records += [
        enter(t, CARA, HALL),
        enter(t, TABLET, HALL),
        read(t + 5),
        release(t + 30),
        exit_(t + 60, CARA, HALL),
        exit_(t + 60, TABLET, HALL),
    ]
    index = build_event_index(log_of(*records))
    bundle = build_all_couplings(index)
    binnings = bin_bundle(bundle)
    ctx = PolicyContext.fit(bundle, binnings, event_samples(index))
    return ctx


class TestWeights:
    def test_overall_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            PolicyWeights(w_dev=0.5, w_env=0.4, w_act=0.3)
        PolicyWeights(w_dev=0.2, w_env=0.5, w_act=0.3)

    def test_round_trip(self):
        w = PolicyWeights(permit_threshold=1.8)
        assert PolicyWeights.from_json_obj(w.to_json_obj()) == w


class TestTrafficModel:
    def test_crowding_direction(self):
        model = TrafficModel(mean=2.0, stdev=1.0, alpha=1.0, direction="crowding")
        assert model.code(4) == 3  # above mean + stdev
        assert model.code(3) == 2  # above mean
        assert model.code(2) == 1
        assert model.code(0) == 1

    def test_rarity_direction(self):
        model = TrafficModel(mean=3.0, stdev=1.0, alpha=1.0, direction="rarity")
        assert model.code(1) == 3  # below mean - stdev
        assert model.code(2) == 2
        assert model.code(3) == 1
        assert model.code(9) == 1

    def test_fit_from_events(self):
        events = [
            Event(WARD, frozenset({ALICE}), 0, 10, 0),
            Event(WARD, frozenset({ALICE, BOB, CHART}), 10, 20, 1),
        ]
        model = TrafficModel.fit(events)
        assert model.mean == 1.5
        assert model.stdev == 0.5

    def test_round_trip(self):
        model = TrafficModel(1.0, 0.5, 2.0, "rarity")
        assert TrafficModel.from_json_obj(model.to_json_obj()) == model


class TestEvaluatePolicy:
    def setup_method(self):
        self.ctx = trained_context()
        self.weights = PolicyWeights()

    def test_weighted_sums(self):
        event = Event(WARD, frozenset({ALICE, BOB, TABLET, CHART}), 10, 100, 0)
        b = evaluate_policy(event, TABLET, CHART, self.ctx, self.weights)
        assert b.r_dev == pytest.approx(0.5 * b.r_devloc)
        assert b.r_env == pytest.approx(0.5 * b.r_traffic + 0.5 * b.r_coexist)
        assert b.r_act == pytest.approx(0.5 * b.r_docloc + 0.5 * b.r_doctime)
        assert b.r_overall == pytest.approx(0.3 * b.r_dev + 0.4 * b.r_env + 0.3 * b.r_act)
        assert all(1 <= c <= 3 for c in (b.r_devloc, b.r_traffic, b.r_coexist, b.r_docloc, b.r_doctime))

    def test_routine_read_scores_lower_than_out_of_place_read(self):
        routine = Event(WARD, frozenset({ALICE, BOB, TABLET, CHART}), 10, 100, 0)
        odd = Event(HALL, frozenset({CARA, TABLET, CHART}), 10, 100, 1)
        b_routine = evaluate_policy(routine, TABLET, CHART, self.ctx, self.weights)
        b_odd = evaluate_policy(odd, TABLET, CHART, self.ctx, self.weights)
        assert b_odd.r_docloc > b_routine.r_docloc
        assert b_odd.r_coexist > b_routine.r_coexist
        assert b_odd.r_act > b_routine.r_act

    def test_decision_threshold(self):
        event = Event(WARD, frozenset({ALICE, BOB, TABLET, CHART}), 10, 100, 0)
        strict = PolicyWeights(permit_threshold=1.0)
        lax = PolicyWeights(permit_threshold=3.1)
        assert evaluate_policy(event, TABLET, CHART, self.ctx, strict).decision is Decision.DENY
        assert evaluate_policy(event, TABLET, CHART, self.ctx, lax).decision is Decision.PERMIT

    def test_unknown_document_fails_closed(self):
        event = Event(WARD, frozenset({ALICE, TABLET}), 10, 100, 0)
        ghost_doc = document("ghost")
        with pytest.warns(MissingCouplingWarning):
            b = evaluate_policy(event, TABLET, ghost_doc, self.ctx, self.weights)
        assert b.r_docloc == 3
        assert b.r_doctime == 3

    def test_no_people_fails_closed_on_coexistence(self):
        event = Event(WARD, frozenset({TABLET, CHART}), 10, 100, 0)
        with pytest.warns(MissingCouplingWarning):
            b = evaluate_policy(event, TABLET, CHART, self.ctx, self.weights)
        assert b.r_coexist == 3

    def test_unknown_person_contributes_zero_coupling(self):
        event = Event(WARD, frozenset({ALICE, person("ghost"), TABLET, CHART}), 10, 100, 0)
        with pytest.warns(MissingCouplingWarning):
            b = evaluate_policy(event, TABLET, CHART, self.ctx, self.weights)
        assert b.r_coexist == int(self.ctx.triple_binning.code(0.0))

    def test_read_time_overrides_event_start_for_time_component(self):
        event = Event(WARD, frozenset({ALICE, BOB, TABLET, CHART}), 10, 100, 0)
        b_day = evaluate_policy(event, TABLET, CHART, self.ctx, self.weights, read_time=10)
        # 3am never sees chart reads in the training data
        b_night = evaluate_policy(
            event, TABLET, CHART, self.ctx, self.weights, read_time=3 * 3600
        )
        assert b_night.r_doctime >= b_day.r_doctime

    def test_json_export(self):
        event = Event(WARD, frozenset({ALICE, BOB, TABLET, CHART}), 10, 100, 0)
        b = evaluate_policy(event, TABLET, CHART, self.ctx, self.weights)
        obj = b.to_json_obj()
        assert obj["decision"] in ("permit", "deny")
        assert obj["r_overall"] == b.r_overall


class TestConsistency:
    def test_bucketing(self):
        assert cluster_bucket("H") == "high"
        for level in ("L", "LM", "ML", "M", "MH", "HM"):
            assert cluster_bucket(level) == "medium_low"

    def test_counts_and_rates(self):
        # a 586-permit / 23+2800-deny split with full permit agreement:
        # permit consistency 100%, deny 2800/2823 = 99.19%, overall 99.32%
        levels = ["L"] * 586 + ["M"] * 23 + ["H"] * 2800
        decisions = [Decision.PERMIT] * 586 + [Decision.DENY] * (23 + 2800)
        table = compare_consistency(levels, decisions)
        assert table.permit_medium_low == 586
        assert table.deny_medium_low == 23
        assert table.deny_high == 2800
        assert table.permit_consistency == 100.0
        assert table.deny_consistency == pytest.approx(99.19, abs=0.005)
        assert table.overall_consistency == pytest.approx(99.33, abs=0.005)

    def test_second_split(self):
        levels = ["LM"] * 586 + ["MH"] * 25 + ["H"] * 2798
        decisions = [Decision.PERMIT] * 586 + [Decision.DENY] * (25 + 2798)
        table = compare_consistency(levels, decisions)
        assert table.deny_consistency == pytest.approx(99.11, abs=0.005)
        assert table.overall_consistency == pytest.approx(99.27, abs=0.005)

    def test_escalated_excluded(self):
        levels = ["L", None, "H"]
        decisions = [Decision.PERMIT, Decision.PERMIT, Decision.DENY]
        table = compare_consistency(levels, decisions)
        assert table.escalated == 1
        assert table.total == 2
        assert table.overall_consistency == 100.0

    def test_empty_table_is_vacuously_consistent(self):
        table = ConsistencyTable()
        assert table.overall_consistency == 100.0

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            compare_consistency(["L"], [])

    def test_level_histogram(self):
        table = compare_consistency(
            ["L", "L", "H", None], [Decision.PERMIT] * 3 + [Decision.DENY]
        )
        assert table.level_histogram == {"L": 2, "H": 1, "escalated": 1}


class TestTuneThreshold:
    def test_picks_best_threshold(self):
        # risks 1.0 (safe) and 2.5 (risky): any theta in (1.0, 2.5] is
        # perfect; ties resolve to the smallest gridpoint
        r = [1.0, 1.0, 2.5, 2.5]
        levels = ["L", "L", "H", "H"]
        theta, score = tune_threshold(r, levels, grid=[0.5, 1.5, 2.0, 3.0])
        assert theta == 1.5
        assert score == 100.0

    def test_degenerate_grid(self):
        theta, score = tune_threshold([1.0], ["H"], grid=[2.0])
        assert theta == 2.0
        assert score == 0.0

    def test_validation(self):
        with pytest.raises(ValueError):
            tune_threshold([1.0], ["L"], grid=[])
        with pytest.raises(LengthMismatch):
            tune_threshold([1.0, 2.0], ["L"], grid=[1.5])


class TestExport:
    def test_layout(self, tmp_path):
        levels = ["L"] * 3 + ["H"] * 2 + [None]
        decisions = [Decision.PERMIT] * 3 + [Decision.DENY] * 2 + [Decision.ESCALATE]
        table = compare_consistency(levels, decisions)
        path = tmp_path / "consistency.csv"
        export_consistency(table, path)
        with open(path, newline="") as handle:
            rows = list(csv.reader(handle))
        assert rows[0] == ["policy", "permit", "permit", "deny", "deny"]
        assert rows[1] == ["cluster_bucket", "medium_low", "high", "medium_low", "high"]
        assert rows[2] == ["count", "3", "0", "0", "2"]
        assert rows[3][0] == "consistency"
        assert rows[4][0] == "overall_consistency"
        assert rows[4][1] == "100.00%"
        assert ["escalated", "1", "", "", ""] in rows
