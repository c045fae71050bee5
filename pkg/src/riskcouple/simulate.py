"""Seeded clinical-environment log generator with labeled anomalies.

Agents (physicians, patients, one or more shared display devices) move
between rooms under per-role Markov schedules; reads happen where the
device currently is. Anomalous reads (cross-patient, hallway) and room
entries are spliced into otherwise well-formed schedules and recorded in
a ground-truth sidecar keyed by record index.
"""

from __future__ import annotations

import json
import random
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .actions import (
    Act,
    ActionLog,
    ActionRecord,
    FactorId,
    device as dev_id,
    document as doc_id,
    location as loc_id,
    person as person_id,
)
from .errors import InvalidConfig, SmallPopulationWarning

EPOCH_BASE = 1624665600  # 2021-06-26T00:00:00Z

ROLE_CONSULTATION = "consultation"
ROLE_WARD = "ward"
ROLE_HALLWAY = "hallway"
ROLE_PRIVATE = "private"

ANOMALY_CROSS_PATIENT_READ = "CrossPatientRead"
ANOMALY_HALLWAY_READ = "HallwayRead"
ANOMALY_UNFAMILIAR_ROOM_ENTRY = "UnfamiliarRoomEntry"

_ANOMALY_TYPES = {
    ANOMALY_CROSS_PATIENT_READ,
    ANOMALY_HALLWAY_READ,
    ANOMALY_UNFAMILIAR_ROOM_ENTRY,
}

# sort priority for records sharing a timestamp
_ACT_PRIORITY = {Act.EXIT: 0, Act.ENTER: 1, Act.READ: 2, Act.RELEASE: 3}


@dataclass
class LocationSpec:
    name: str
    role: str


@dataclass
class RoleSchedule:
    """Markov movement model: mean stay seconds per location role and
    transition probabilities between location roles (no self-loops)."""

    mean_visit: dict[str, float]
    transitions: dict[str, dict[str, float]]


@dataclass
class ReadingModel:
    rate_per_hour: float
    read_duration: int
    target: str  # "own" or "copresent_patient"
    where: Optional[list[str]] = None  # location roles; None = anywhere


@dataclass
class AnomalySpec:
    type: str
    count: int
    window: Optional[tuple[int, int]] = None  # offsets into the run


@dataclass
class ScenarioConfig:
    seed: int = 7
    duration: int = 30 * 86400
    physicians: int = 2
    patients: int = 6
    devices: int = 1
    documents: int = 6
    locations: list[LocationSpec] = field(default_factory=list)
    schedules: dict[str, RoleSchedule] = field(default_factory=dict)
    reading: dict[str, ReadingModel] = field(default_factory=dict)
    anomalies: list[AnomalySpec] = field(default_factory=list)

    def validate(self):
        if self.duration < 0:
            raise InvalidConfig("duration must be non-negative")
        for count in (self.physicians, self.patients, self.devices, self.documents):
            if count < 0:
                raise InvalidConfig("population counts must be non-negative")
        roles = {spec.role for spec in self.locations}
        for role, schedule in self.schedules.items():
            for src, probs in schedule.transitions.items():
                total = sum(probs.values())
                if probs and abs(total - 1.0) > 1e-9:
                    raise InvalidConfig(
                        f"transition probabilities from {src!r} for {role!r} "
                        f"sum to {total}, expected 1"
                    )
                missing = set(probs) - roles
                if missing:
                    raise InvalidConfig(f"transitions reference unknown roles {missing}")
        for spec in self.anomalies:
            if spec.type not in _ANOMALY_TYPES:
                raise InvalidConfig(f"unknown anomaly type {spec.type!r}")
            if spec.count < 0:
                raise InvalidConfig("anomaly count must be non-negative")

    def to_json_obj(self) -> dict:
        return {
            "seed": self.seed,
            "duration": self.duration,
            "population": {
                "physicians": self.physicians,
                "patients": self.patients,
                "devices": self.devices,
                "documents": self.documents,
                "locations": [
                    {"name": s.name, "role": s.role} for s in self.locations
                ],
            },
            "schedules": {
                role: {"mean_visit": s.mean_visit, "transitions": s.transitions}
                for role, s in self.schedules.items()
            },
            "reading": {
                role: {
                    "rate_per_hour": m.rate_per_hour,
                    "read_duration": m.read_duration,
                    "target": m.target,
                    **({"where": m.where} if m.where else {}),
                }
                for role, m in self.reading.items()
            },
            "anomalies": [
                {
                    "type": a.type,
                    "count": a.count,
                    **({"window": list(a.window)} if a.window else {}),
                }
                for a in self.anomalies
            ],
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "ScenarioConfig":
        pop = obj.get("population", {})
        cfg = cls(
            seed=obj.get("seed", 7),
            duration=obj.get("duration", 30 * 86400),
            physicians=pop.get("physicians", 2),
            patients=pop.get("patients", 6),
            devices=pop.get("devices", 1),
            documents=pop.get("documents", 6),
            locations=[
                LocationSpec(s["name"], s["role"])
                for s in pop.get("locations", [])
            ],
            schedules={
                role: RoleSchedule(s["mean_visit"], s["transitions"])
                for role, s in obj.get("schedules", {}).items()
            },
            reading={
                role: ReadingModel(
                    m["rate_per_hour"], m["read_duration"], m["target"], m.get("where")
                )
                for role, m in obj.get("reading", {}).items()
            },
            anomalies=[
                AnomalySpec(a["type"], a["count"], tuple(a["window"]) if a.get("window") else None)
                for a in obj.get("anomalies", [])
            ],
        )
        cfg.validate()
        return cfg

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_obj(), indent=2))

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        return cls.from_json_obj(json.loads(Path(path).read_text()))


def default_scenario(seed: int = 7) -> ScenarioConfig:
    """Population shaped like a small emergency unit: two physicians, six
    patients each owning one document, one shared device, seven rooms."""
    locations = [
        LocationSpec("consult", ROLE_CONSULTATION),
        LocationSpec("ward", ROLE_WARD),
        LocationSpec("hall", ROLE_HALLWAY),
        LocationSpec("room1", ROLE_PRIVATE),
        LocationSpec("room2", ROLE_PRIVATE),
        LocationSpec("room3", ROLE_PRIVATE),
        LocationSpec("room4", ROLE_PRIVATE),
    ]
    schedules = {
        "physician": RoleSchedule(
            mean_visit={
                ROLE_CONSULTATION: 5400,
                ROLE_WARD: 2700,
                ROLE_HALLWAY: 120,
                ROLE_PRIVATE: 600,
            },
            transitions={
                ROLE_CONSULTATION: {ROLE_HALLWAY: 1.0},
                ROLE_WARD: {ROLE_HALLWAY: 1.0},
                ROLE_HALLWAY: {
                    ROLE_CONSULTATION: 0.55,
                    ROLE_WARD: 0.35,
                    ROLE_PRIVATE: 0.10,
                },
                ROLE_PRIVATE: {ROLE_HALLWAY: 1.0},
            },
        ),
        "patient": RoleSchedule(
            mean_visit={
                ROLE_CONSULTATION: 1200,
                ROLE_WARD: 7200,
                ROLE_HALLWAY: 90,
                ROLE_PRIVATE: 10800,
            },
            transitions={
                ROLE_CONSULTATION: {ROLE_HALLWAY: 1.0},
                ROLE_WARD: {ROLE_HALLWAY: 1.0},
                ROLE_HALLWAY: {
                    ROLE_CONSULTATION: 0.20,
                    ROLE_WARD: 0.40,
                    ROLE_PRIVATE: 0.40,
                },
                ROLE_PRIVATE: {ROLE_HALLWAY: 1.0},
            },
        ),
        "device": RoleSchedule(
            mean_visit={ROLE_CONSULTATION: 14400, ROLE_WARD: 7200},
            transitions={
                ROLE_CONSULTATION: {ROLE_WARD: 1.0},
                ROLE_WARD: {ROLE_CONSULTATION: 1.0},
            },
        ),
    }
    reading = {
        "physician": ReadingModel(
            rate_per_hour=12.0,
            read_duration=240,
            target="copresent_patient",
            where=[ROLE_CONSULTATION],
        ),
        "patient": ReadingModel(
            rate_per_hour=1.2,
            read_duration=180,
            target="own",
            where=[ROLE_CONSULTATION],
        ),
    }
    anomalies = [
        AnomalySpec(ANOMALY_CROSS_PATIENT_READ, 5),
        AnomalySpec(ANOMALY_HALLWAY_READ, 5),
        AnomalySpec(ANOMALY_UNFAMILIAR_ROOM_ENTRY, 30),
    ]
    cfg = ScenarioConfig(
        seed=seed,
        locations=locations,
        schedules=schedules,
        reading=reading,
        anomalies=anomalies,
    )
    cfg.validate()
    return cfg


@dataclass
class Stay:
    agent: FactorId
    location: str
    start: int
    end: int


@dataclass
class GroundTruth:
    """Anomaly annotations keyed by post-sort record index."""

    annotations: list[dict]

    def save(self, path) -> None:
        Path(path).write_text(json.dumps({"records": self.annotations}, indent=2))

    @classmethod
    def load(cls, path) -> "GroundTruth":
        return cls(json.loads(Path(path).read_text())["records"])


class _Generator:
    def __init__(self, config: ScenarioConfig):
        config.validate()
        self.cfg = config
        self.rng = random.Random(config.seed)
        self.loc_by_role: dict[str, list[str]] = {}
        for spec in config.locations:
            self.loc_by_role.setdefault(spec.role, []).append(spec.name)
        self.physicians = [person_id(f"phys{i+1}") for i in range(config.physicians)]
        self.patients = [person_id(f"pat{i+1}") for i in range(config.patients)]
        self.devices = [dev_id(f"tablet{i+1}") for i in range(config.devices)]
        self.documents = [doc_id(f"chart{i+1}") for i in range(config.documents)]
        # each patient owns one document; spares belong to nobody
        self.owner_doc: dict[FactorId, FactorId] = {
            p: d for p, d in zip(self.patients, self.documents)
        }
        privates = self.loc_by_role.get(ROLE_PRIVATE, [])
        self.home_room: dict[FactorId, str] = {}
        wards = self.loc_by_role.get(ROLE_WARD, [])
        for i, p in enumerate(self.patients):
            if privates:
                self.home_room[p] = privates[i % len(privates)]
            elif wards:
                self.home_room[p] = wards[0]

    # -- movement ---------------------------------------------------------

    def _resolve_location(self, role: str, agent: FactorId, agent_role: str) -> str:
        if role == ROLE_PRIVATE and agent_role == "patient" and agent in self.home_room:
            return self.home_room[agent]
        choices = self.loc_by_role.get(role)
        if not choices:
            raise InvalidConfig(f"no location with role {role!r}")
        return self.rng.choice(choices)

    def _role_of(self, loc_name: str) -> str:
        for spec in self.cfg.locations:
            if spec.name == loc_name:
                return spec.role
        raise InvalidConfig(f"unknown location {loc_name!r}")

    def _stays(self, agent: FactorId, agent_role: str, start_loc: str) -> list[Stay]:
        schedule = self.cfg.schedules[agent_role]
        stays: list[Stay] = []
        t = 0
        loc = start_loc
        while t < self.cfg.duration:
            mean = schedule.mean_visit.get(self._role_of(loc), 600.0)
            length = max(30, int(self.rng.expovariate(1.0 / mean)))
            end = min(t + length, self.cfg.duration)
            stays.append(Stay(agent, loc, t, end))
            t = end
            probs = schedule.transitions.get(self._role_of(loc), {})
            if not probs:
                break
            roles, weights = zip(*sorted(probs.items()))
            next_role = self.rng.choices(roles, weights)[0]
            loc = self._resolve_location(next_role, agent, agent_role)
        return stays

    # -- reads -------------------------------------------------------------

    def _copresent_patients(self, stays_by_loc, loc: str, t: int) -> list[FactorId]:
        out = []
        for stay in stays_by_loc.get(loc, []):
            if stay.start <= t < stay.end and stay.agent in self.owner_doc:
                out.append(stay.agent)
        return out

    def _pick_document(
        self, reader: FactorId, model: ReadingModel, stays_by_loc, loc: str, t: int
    ) -> Optional[FactorId]:
        if model.target == "own":
            return self.owner_doc.get(reader)
        nearby = [
            p for p in self._copresent_patients(stays_by_loc, loc, t) if p != reader
        ]
        if nearby:
            return self.owner_doc[self.rng.choice(nearby)]
        return None

    # -- generation ---------------------------------------------------------

    def run(self) -> tuple[ActionLog, GroundTruth]:
        cfg = self.cfg
        total_people = len(self.physicians) + len(self.patients)
        if total_people <= 2:
            warnings.warn(
                "coupling distributions are unreliable for very small "
                "populations",
                SmallPopulationWarning,
            )
        if cfg.duration == 0:
            return ActionLog(()), GroundTruth([])

        # 1. movement schedules
        agent_stays: dict[FactorId, list[Stay]] = {}
        for phys in self.physicians:
            start = self._resolve_location(ROLE_CONSULTATION, phys, "physician")
            agent_stays[phys] = self._stays(phys, "physician", start)
        for pat in self.patients:
            start = self.home_room.get(pat) or self._resolve_location(
                ROLE_WARD, pat, "patient"
            )
            agent_stays[pat] = self._stays(pat, "patient", start)
        device_stays: dict[FactorId, list[Stay]] = {}
        for dev in self.devices:
            start = self._resolve_location(ROLE_CONSULTATION, dev, "device")
            device_stays[dev] = self._stays(dev, "device", start)

        stays_by_loc: dict[str, list[Stay]] = {}
        for stays in agent_stays.values():
            for stay in stays:
                stays_by_loc.setdefault(stay.location, []).append(stay)

        # 2. benign reads inside (person stay x device stay) overlaps
        reads: list[tuple[int, FactorId, FactorId, int]] = []  # t, dev, doc, end
        role_of_person = {p: "physician" for p in self.physicians}
        role_of_person.update({p: "patient" for p in self.patients})
        for dev, d_stays in device_stays.items():
            for d_stay in d_stays:
                for p_stay in stays_by_loc.get(d_stay.location, []):
                    model = self.cfg.reading.get(role_of_person[p_stay.agent])
                    if model is None or model.rate_per_hour <= 0:
                        continue
                    if model.where is not None and self._role_of(d_stay.location) not in model.where:
                        continue
                    lo = max(d_stay.start, p_stay.start)
                    hi = min(d_stay.end, p_stay.end)
                    if hi - lo < 60:
                        continue
                    t = lo
                    while True:
                        t += max(1, int(self.rng.expovariate(model.rate_per_hour / 3600.0)))
                        if t >= hi:
                            break
                        doc = self._pick_document(
                            p_stay.agent, model, stays_by_loc, d_stay.location, t
                        )
                        if doc is None:
                            continue
                        release = min(t + model.read_duration, d_stay.end - 1)
                        reads.append((t, dev, doc, release))

        # 3. anomalies
        tagged: list[tuple[int, int, ActionRecord, Optional[str]]] = []
        drop_windows: dict[FactorId, list[tuple[int, int]]] = {}

        def emit(time: int, act: Act, tag: Optional[str] = None, **kw):
            record = ActionRecord(EPOCH_BASE + time, act, **kw)
            tagged.append((time, _ACT_PRIORITY[act], record, tag))

        for spec in cfg.anomalies:
            window = spec.window or (0, cfg.duration)
            if spec.type == ANOMALY_CROSS_PATIENT_READ:
                self._inject_cross_patient(
                    spec.count, window, device_stays, stays_by_loc, emit
                )
            elif spec.type == ANOMALY_HALLWAY_READ:
                self._inject_hallway(
                    spec.count, window, device_stays, drop_windows, emit
                )
            elif spec.type == ANOMALY_UNFAMILIAR_ROOM_ENTRY:
                self._inject_room_entry(spec.count, window, agent_stays, emit)

        # 4. movement records; the final stay stays open at log end
        for stays in list(agent_stays.values()) + list(device_stays.values()):
            for i, stay in enumerate(stays):
                emit(stay.start, Act.ENTER, agent=stay.agent, location=loc_id(stay.location))
                if i + 1 < len(stays):
                    emit(stay.end, Act.EXIT, agent=stay.agent, location=loc_id(stay.location))

        # 5. benign read/release records, skipping device splice windows
        for t, dev, doc, release in reads:
            windows = drop_windows.get(dev, [])
            if any(lo <= t < hi or lo <= release < hi for lo, hi in windows):
                continue
            emit(t, Act.READ, device=dev, document=doc)
            if release > t:
                emit(release, Act.RELEASE, device=dev, document=doc)

        tagged.sort(key=lambda item: (item[0], item[1]))
        records = tuple(item[2] for item in tagged)
        annotations = [
            {"index": i, "type": item[3], "time": item[2].time}
            for i, item in enumerate(tagged)
            if item[3] is not None
        ]
        return ActionLog(records), GroundTruth(annotations)

    def _inject_cross_patient(self, count, window, device_stays, stays_by_loc, emit):
        """A patient reads a document owned by another patient."""
        if len(self.patients) < 2 or not self.devices:
            return
        candidates = []
        for dev, d_stays in device_stays.items():
            for d_stay in d_stays:
                lo = max(d_stay.start, window[0])
                hi = min(d_stay.end, window[1])
                if hi - lo < 300:
                    continue
                for p_stay in stays_by_loc.get(d_stay.location, []):
                    o_lo = max(lo, p_stay.start)
                    o_hi = min(hi, p_stay.end)
                    if o_hi - o_lo < 300 or p_stay.agent not in self.owner_doc:
                        continue
                    candidates.append((dev, d_stay.location, p_stay.agent, o_lo, o_hi))
        self.rng.shuffle(candidates)
        injected = 0
        for dev, loc, reader, lo, hi in candidates:
            if injected >= count:
                break
            t = self.rng.randint(lo + 60, hi - 120)
            # only anomalous when the reader browses someone else's chart
            # unaccompanied; skip moments with anyone else around
            others = [
                s.agent
                for s in stays_by_loc.get(loc, [])
                if s.start <= t < s.end and s.agent != reader
            ]
            if others:
                continue
            victims = [p for p in self.patients if p != reader and p in self.owner_doc]
            doc = self.owner_doc[self.rng.choice(victims)]
            emit(t, Act.READ, tag=ANOMALY_CROSS_PATIENT_READ, device=dev, document=doc)
            emit(t + 60, Act.RELEASE, device=dev, document=doc)
            injected += 1

    def _inject_hallway(self, count, window, device_stays, drop_windows, emit):
        """The device is wheeled into the hallway and a document is read
        there; benign reads inside the splice are suppressed."""
        halls = self.loc_by_role.get(ROLE_HALLWAY)
        if not halls or not self.documents:
            return
        candidates = []
        for dev, d_stays in device_stays.items():
            for d_stay in d_stays:
                lo = max(d_stay.start, window[0])
                hi = min(d_stay.end, window[1])
                if hi - lo >= 600:
                    candidates.append((dev, d_stay, lo, hi))
        self.rng.shuffle(candidates)
        used: set[int] = set()
        injected = 0
        for dev, d_stay, lo, hi in candidates:
            if injected >= count:
                break
            if id(d_stay) in used:
                continue
            used.add(id(d_stay))
            ta = self.rng.randint(lo + 60, hi - 300)
            tb = ta + 180
            hall = self.rng.choice(halls)
            doc = self.rng.choice(self.documents)
            emit(ta, Act.EXIT, agent=dev, location=loc_id(d_stay.location))
            emit(ta, Act.ENTER, agent=dev, location=loc_id(hall))
            emit(ta + 30, Act.READ, tag=ANOMALY_HALLWAY_READ, device=dev, document=doc)
            emit(ta + 120, Act.RELEASE, device=dev, document=doc)
            emit(tb, Act.EXIT, agent=dev, location=loc_id(hall))
            emit(tb, Act.ENTER, agent=dev, location=loc_id(d_stay.location))
            drop_windows.setdefault(dev, []).append((ta - 600, tb))
            injected += 1

    def _inject_room_entry(self, count, window, agent_stays, emit):
        """A patient briefly enters another patient's private room."""
        if len(self.patients) < 2 or not self.home_room:
            return
        injected = 0
        attempts = 0
        while injected < count and attempts < count * 50:
            attempts += 1
            intruder = self.rng.choice(self.patients)
            targets = [
                room
                for p, room in self.home_room.items()
                if p != intruder and room != self.home_room.get(intruder)
            ]
            if not targets:
                return
            room = self.rng.choice(targets)
            stays = agent_stays[intruder]
            stay = self.rng.choice(stays)
            lo = max(stay.start, window[0])
            hi = min(stay.end, window[1])
            if hi - lo < 600 or stay.location == room:
                continue
            ta = self.rng.randint(lo + 60, hi - 300)
            tb = ta + 120
            emit(ta, Act.EXIT, agent=intruder, location=loc_id(stay.location))
            emit(
                ta,
                Act.ENTER,
                tag=ANOMALY_UNFAMILIAR_ROOM_ENTRY,
                agent=intruder,
                location=loc_id(room),
            )
            emit(tb, Act.EXIT, agent=intruder, location=loc_id(room))
            emit(tb, Act.ENTER, agent=intruder, location=loc_id(stay.location))
            injected += 1


def generate(config: ScenarioConfig) -> tuple[ActionLog, GroundTruth]:
    """Deterministic log + ground truth; the seed fixes the output
    byte-for-byte."""
    return _Generator(config).run()


def make_pair(
    config: ScenarioConfig, perturbation: float = 0.25
) -> tuple[tuple[ActionLog, GroundTruth], tuple[ActionLog, GroundTruth]]:
    """Two logs over the same population with perturbed schedules, for
    cross-dataset validation."""
    first = generate(config)
    shifted = ScenarioConfig.from_json_obj(config.to_json_obj())
    shifted.seed = config.seed + 1000
    for i, (role, schedule) in enumerate(sorted(shifted.schedules.items())):
        factor = 1.0 + perturbation * (1 if i % 2 == 0 else -0.5)
        schedule.mean_visit = {
            k: v * factor for k, v in schedule.mean_visit.items()
        }
    for role, model in shifted.reading.items():
        model.rate_per_hour *= 1.0 + perturbation / 2.0
    second = generate(shifted)
    return first, second
