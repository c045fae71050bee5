import io
import json
import warnings

import pytest

from riskcouple.pipeline import fit_model
from riskcouple.service import DecisionService

from test_pipeline import tiny_config, tiny_log


@pytest.fixture(scope="module")
def service():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = fit_model(tiny_log(), tiny_config())
    return DecisionService(model)


def line(**fields):
    return json.dumps(fields)


class TestHandleLine:
    def test_blank_line_ignored(self, service):
        assert service.handle_line("") is None
        assert service.handle_line("   \n") is None

    def test_invalid_json(self, service):
        response = service.handle_line("{nope")
        assert response["ok"] is False
        assert "invalid JSON" in response["error"]

    def test_malformed_record(self, service):
        response = service.handle_line(line(time=0, act="teleport"))
        assert response["ok"] is False

    def test_bad_timestamp(self, service):
        response = service.handle_line(
            line(time="sometime", act="enter", agent="alice", location="ward")
        )
        assert response["ok"] is False

    def test_shutdown_echo(self, service):
        assert service.handle_line(line(op="shutdown")) == {"ok": True, "op": "shutdown"}

    def test_movement_acknowledged(self, service):
        response = service.handle_line(
            line(time=0, act="enter", agent="alice", location="ward")
        )
        assert response == {"ok": True, "act": "enter"}

    def test_read_with_unplaced_device_escalates(self, service):
        response = service.handle_line(
            line(time=10, act="read", device="ghost-tablet", document="chart")
        )
        assert response["ok"] is True
        assert response["decision"] == "escalate"
        assert "no known location" in response["reason"]

    def test_read_in_trained_context_permitted(self, service):
        for record in (
            line(time=100, act="enter", agent="alice", location="ward"),
            line(time=100, act="enter", agent="bob", location="ward"),
            line(time=100, act="enter", agent="dev:tablet", location="ward"),
        ):
            assert service.handle_line(record)["ok"]
        response = service.handle_line(
            line(time=110, act="read", device="tablet", document="chart")
        )
        assert response["ok"] is True
        assert response["decision"] == "permit"
        assert response["cluster"]["decision"] == "permit"
        assert response["policy"]["decision"] == "permit"
        assert response["location"] == "loc:ward"


class TestRunLoop:
    def test_streams_responses_until_shutdown(self, service):
        stdin = io.StringIO(
            "\n".join(
                [
                    line(time=200, act="enter", agent="alice", location="ward"),
                    "",
                    line(op="shutdown"),
                    line(time=300, act="enter", agent="bob", location="ward"),
                ]
            )
        )
        stdout = io.StringIO()
        service.run(stdin, stdout)
        responses = [json.loads(l) for l in stdout.getvalue().splitlines()]
        assert responses[0]["act"] == "enter"
        assert responses[-1] == {"ok": True, "op": "shutdown"}
        assert len(responses) == 2  # nothing after shutdown
