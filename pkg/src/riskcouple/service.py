"""Live decision service speaking line-delimited JSON.

Each input line is either an action record (the same schema as a log
line) or a control object. Enter/exit/release records update the live
event state and are acknowledged; read records additionally return a
decision with both the cluster-route and policy-route rationales.
Malformed lines get an error response; the service keeps running.
"""

from __future__ import annotations

import json
import warnings
from typing import IO, Optional

from .actions import Act, ActionRecord, LogFormat, parse_record
from .clustering import Decision
from .errors import MalformedLine, RiskCoupleError
from .events import Event, EventStateMachine
from .pipeline import TrainedModel


class DecisionService:
    def __init__(self, model: TrainedModel):
        self.model = model
        self.machine = EventStateMachine(model.config.dwell)

    def _decide_read(self, record: ActionRecord) -> dict:
        loc = self.machine.location_of(record.device)
        if loc is None:
            return {
                "ok": True,
                "act": "read",
                "decision": Decision.ESCALATE.value,
                "reason": "device has no known location",
            }
        event = Event(
            loc,
            self.machine.current_members(loc),
            record.time,
            record.time,
            -1,
        )
        decision, detail = self.model.evaluate_read(
            event, record.device, record.document, read_time=record.time
        )
        return {
            "ok": True,
            "act": "read",
            "location": loc.token(),
            **detail,
        }

    def handle_line(self, line: str) -> Optional[dict]:
        line = line.strip()
        if not line:
            return None
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            return {"ok": False, "error": f"invalid JSON: {exc.msg}"}
        if isinstance(obj, dict) and obj.get("op") == "shutdown":
            return {"ok": True, "op": "shutdown"}
        try:
            record = parse_record(line, LogFormat.JSON_LINES)
        except (MalformedLine, RiskCoupleError) as exc:
            return {"ok": False, "error": str(exc)}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            if record.act is Act.READ:
                response = self._decide_read(record)
                self.machine.apply(record)
                return response
            self.machine.apply(record)
        return {"ok": True, "act": record.act.value}

    def run(self, stdin: IO[str], stdout: IO[str]) -> None:
        for line in stdin:
            response = self.handle_line(line)
            if response is None:
                continue
            stdout.write(json.dumps(response) + "\n")
            stdout.flush()
            if response.get("op") == "shutdown":
                break
