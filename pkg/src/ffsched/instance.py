"""Problem data model: stages, facilities, jobs, transporter parameters.

Times are integer ticks; ``delta_t`` converts a tick to seconds.  Transport
time and energy between two located objects derive from Euclidean distance
unless an explicit override exists for the ordered pair of ids.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Any, Union

FORMAT_VERSION = 1

BASE_DISPATCH = "base_dispatch"
JOB = "job"
MACHINE = "machine"
BASE_RECEIVE = "base_receive"
STAGE_KINDS = (BASE_DISPATCH, JOB, MACHINE, BASE_RECEIVE)


class InstanceError(ValueError):
    """Raised when an instance violates a data-model invariant."""


class InstanceFormatError(InstanceError):
    """Raised when an instance file cannot be parsed."""


@dataclass(frozen=True)
class Location:
    x: float
    y: float

    def distance(self, other: Location) -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class Stage:
    index: int
    kind: str
    skippable: bool = False


@dataclass(frozen=True)
class Facility:
    """A machine or a base station.

    ``initial_transporters`` and ``storage_capacity`` are only meaningful for
    bases.  ``attached=False`` means the transporter leaves as soon as it
    arrives and the machine keeps processing without it.
    """

    id: str
    stage: int
    location: Location
    processing_time: int = 0
    capacity: int = 1
    attached: bool = True
    initial_transporters: int = 0
    storage_capacity: int = 1


@dataclass(frozen=True)
class Job:
    id: str
    location: Location
    processing_time: int = 0
    due_time: int | None = None
    skip_stages: tuple[int, ...] = ()

    # jobs always keep their transporter during acquisition
    attached: bool = True


@dataclass(frozen=True)
class TransporterParams:
    e_max: float
    speed: float
    energy_rate: float


@dataclass(frozen=True)
class Weights:
    alpha: float
    beta: float
    k_exponent: int = 1
    zeta: float = 0.0


@dataclass(frozen=True)
class TransportOverride:
    source: str
    target: str
    tt: int
    te: float


Located = Union[Facility, Job]


@dataclass(frozen=True)
class Instance:
    stages: tuple[Stage, ...]
    machines: tuple[Facility, ...]
    bases: tuple[Facility, ...]
    jobs: tuple[Job, ...]
    transporter: TransporterParams
    weights: Weights
    delta_t: float
    transport_overrides: tuple[TransportOverride, ...] = ()

    def __post_init__(self):
        check_instance(self)

    @property
    def n_stages(self) -> int:
        return len(self.stages)

    @cached_property
    def _overrides(self) -> dict[tuple[str, str], TransportOverride]:
        return {(o.source, o.target): o for o in self.transport_overrides}

    @cached_property
    def facility_by_id(self) -> dict[str, Facility]:
        return {f.id: f for f in self.machines + self.bases}

    @cached_property
    def job_by_id(self) -> dict[str, Job]:
        return {j.id: j for j in self.jobs}

    @cached_property
    def base_ids(self) -> frozenset[str]:
        return frozenset(b.id for b in self.bases)

    def machines_at(self, stage: int) -> tuple[Facility, ...]:
        return tuple(m for m in self.machines if m.stage == stage)

    def lookup(self, ident: str) -> Located:
        if ident in self.job_by_id:
            return self.job_by_id[ident]
        return self.facility_by_id[ident]

    def transport_time(self, a: Located, b: Located) -> int:
        """Travel ticks from ``a`` to ``b``, rounded up."""
        o = self._overrides.get((a.id, b.id))
        if o is not None:
            return o.tt
        ticks = a.location.distance(b.location) / self.transporter.speed / self.delta_t
        # snap float noise such as 7.000000000000001 down to the integer, but
        # never round a real nonzero trip down to zero ticks
        n = round(ticks)
        if n > 0 and abs(ticks - n) <= 1e-9 * n:
            return n
        return math.ceil(ticks)

    def transport_energy(self, a: Located, b: Located) -> float:
        o = self._overrides.get((a.id, b.id))
        if o is not None:
            return o.te
        return a.location.distance(b.location) * self.transporter.energy_rate


def transport_time(instance: Instance, a: Located, b: Located) -> int:
    return instance.transport_time(a, b)


def transport_energy(instance: Instance, a: Located, b: Located) -> float:
    return instance.transport_energy(a, b)


def _finite(loc: Location) -> bool:
    return math.isfinite(loc.x) and math.isfinite(loc.y)


def check_instance(inst: Instance) -> None:
    """Raise :class:`InstanceError` naming the first violated rule."""
    stages = inst.stages
    if len(stages) < 3:
        raise InstanceError("stage count: need at least 3 stages (dispatch, job, receive)")
    for i, st in enumerate(stages):
        if st.index != i:
            raise InstanceError(f"stage order: stage at position {i} has index {st.index}")
        if st.kind not in STAGE_KINDS:
            raise InstanceError(f"stage kind: unknown kind {st.kind!r} at stage {i}")
    if stages[0].kind != BASE_DISPATCH:
        raise InstanceError("stage layout: stage 0 must be base_dispatch")
    if stages[1].kind != JOB:
        raise InstanceError("stage layout: stage 1 must be job")
    if stages[-1].kind != BASE_RECEIVE:
        raise InstanceError("stage layout: last stage must be base_receive")
    for st in stages[2:-1]:
        if st.kind != MACHINE:
            raise InstanceError(f"stage layout: stage {st.index} between job and receive must be machine")
    for st in (stages[0], stages[1], stages[-1]):
        if st.skippable:
            raise InstanceError(f"skippable stage: stage {st.index} ({st.kind}) cannot be skipped")

    if not inst.bases:
        raise InstanceError("connectivity: at least one base is required")
    ids: set[str] = set()
    for obj in inst.machines + inst.bases + inst.jobs:
        if obj.id in ids:
            raise InstanceError(f"unique ids: duplicate id {obj.id!r}")
        if obj.id in ("start", "end"):
            raise InstanceError(f"unique ids: id {obj.id!r} is reserved")
        ids.add(obj.id)
        if not _finite(obj.location):
            raise InstanceError(f"finite coordinates: {obj.id!r} has a non-finite location")
        if obj.processing_time < 0:
            raise InstanceError(f"processing time: {obj.id!r} has negative processing_time")

    for m in inst.machines:
        if not (0 <= m.stage < len(stages)) or stages[m.stage].kind != MACHINE:
            raise InstanceError(f"machine stage: {m.id!r} refers to stage {m.stage}, not a machine stage")
        if m.capacity < 1:
            raise InstanceError(f"machine capacity: {m.id!r} must have capacity >= 1")
    for st in stages[2:-1]:
        if not any(m.stage == st.index for m in inst.machines):
            raise InstanceError(f"connectivity: machine stage {st.index} has no machines")
    for b in inst.bases:
        if b.initial_transporters < 0:
            raise InstanceError(f"base stock: {b.id!r} has negative initial_transporters")
        if b.storage_capacity < 1:
            raise InstanceError(f"base storage: {b.id!r} must have storage_capacity >= 1")
        if b.initial_transporters > b.storage_capacity:
            raise InstanceError(
                f"base stock: {b.id!r} initial_transporters ({b.initial_transporters}) "
                f"exceeds storage_capacity ({b.storage_capacity})"
            )
        if not b.attached:
            raise InstanceError(f"base attached: {b.id!r} must be attached")

    skippable = {st.index for st in stages if st.kind == MACHINE and st.skippable}
    for j in inst.jobs:
        bad = [s for s in j.skip_stages if s not in skippable]
        if bad:
            raise InstanceError(f"skip stages: job {j.id!r} skips non-skippable stage(s) {bad}")

    tp = inst.transporter
    if not (tp.e_max > 0 and tp.speed > 0 and tp.energy_rate > 0):
        raise InstanceError("transporter: e_max, speed and energy_rate must be strictly positive")
    w = inst.weights
    if w.alpha < 0 or w.beta < 0 or w.zeta < 0:
        raise InstanceError("weights: alpha, beta and zeta must be nonnegative")
    if not w.alpha + w.beta > 0:
        raise InstanceError("weights: alpha + beta must be positive")
    if w.k_exponent < 1:
        raise InstanceError("weights: k_exponent must be a positive integer")
    if not inst.delta_t > 0:
        raise InstanceError("delta_t: must be positive")
    for o in inst.transport_overrides:
        if o.source not in ids or o.target not in ids:
            raise InstanceError(f"transport override: unknown id in ({o.source!r}, {o.target!r})")
        if o.tt < 0 or o.te < 0:
            raise InstanceError(f"transport override: negative value for ({o.source!r}, {o.target!r})")


# --- serialization -----------------------------------------------------------


def _location_dict(loc: Location) -> dict:
    return {"x": loc.x, "y": loc.y}


def _facility_dict(f: Facility, base: bool) -> dict:
    d = {
        "id": f.id,
        "stage": f.stage,
        "location": _location_dict(f.location),
        "processing_time": f.processing_time,
    }
    if base:
        d["initial_transporters"] = f.initial_transporters
        d["storage_capacity"] = f.storage_capacity
    else:
        d["capacity"] = f.capacity
        d["attached"] = f.attached
    return d


def instance_to_dict(inst: Instance) -> dict:
    d: dict[str, Any] = {
        "format_version": FORMAT_VERSION,
        "stages": [{"index": s.index, "kind": s.kind, "skippable": s.skippable} for s in inst.stages],
        "machines": [_facility_dict(m, base=False) for m in inst.machines],
        "bases": [_facility_dict(b, base=True) for b in inst.bases],
        "jobs": [
            {
                "id": j.id,
                "location": _location_dict(j.location),
                "processing_time": j.processing_time,
                "due_time": j.due_time,
                "skip_stages": list(j.skip_stages),
                "attached": j.attached,
            }
            for j in inst.jobs
        ],
        "transporter": {
            "e_max": inst.transporter.e_max,
            "speed": inst.transporter.speed,
            "energy_rate": inst.transporter.energy_rate,
        },
        "weights": {
            "alpha": inst.weights.alpha,
            "beta": inst.weights.beta,
            "k_exponent": inst.weights.k_exponent,
            "zeta": inst.weights.zeta,
        },
        "delta_t": inst.delta_t,
    }
    if inst.transport_overrides:
        d["transport_overrides"] = [
            {"from": o.source, "to": o.target, "tt": o.tt, "te": o.te} for o in inst.transport_overrides
        ]
    return d


class _Reader:
    """Typed field access that reports the JSON path of a bad value."""

    def __init__(self, data: Any, path: str):
        self.data = data
        self.path = path

    def _fail(self, key: str, msg: str):
        raise InstanceFormatError(f"field {self.path}{key}: {msg}")

    def get(self, key: str, kind: str, default: Any = ...):
        if not isinstance(self.data, dict):
            raise InstanceFormatError(f"field {self.path or '<root>'}: expected an object")
        if key not in self.data:
            if default is ...:
                self._fail(key, "missing")
            return default
        v = self.data[key]
        if kind == "int":
            if isinstance(v, bool) or not isinstance(v, int):
                self._fail(key, f"expected integer, got {v!r}")
        elif kind == "num":
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                self._fail(key, f"expected number, got {v!r}")
            v = float(v)
        elif kind == "str":
            if not isinstance(v, str):
                self._fail(key, f"expected string, got {v!r}")
        elif kind == "bool":
            if not isinstance(v, bool):
                self._fail(key, f"expected boolean, got {v!r}")
        elif kind == "list":
            if not isinstance(v, list):
                self._fail(key, f"expected array, got {type(v).__name__}")
        elif kind == "obj":
            if not isinstance(v, dict):
                self._fail(key, f"expected object, got {type(v).__name__}")
        return v

    def sub(self, key: str) -> _Reader:
        return _Reader(self.get(key, "obj"), f"{self.path}{key}.")

    def items(self, key: str, default: Any = ...):
        seq = self.get(key, "list", default)
        for i, item in enumerate(seq):
            yield _Reader(item, f"{self.path}{key}[{i}].")


def _read_location(r: _Reader) -> Location:
    loc = r.sub("location")
    return Location(loc.get("x", "num"), loc.get("y", "num"))


def instance_from_dict(data: Any) -> Instance:
    r = _Reader(data, "")
    version = r.get("format_version", "int", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise InstanceFormatError(f"field format_version: unsupported version {version}")
    stages = tuple(
        Stage(s.get("index", "int"), s.get("kind", "str"), s.get("skippable", "bool", False))
        for s in r.items("stages")
    )
    machines = tuple(
        Facility(
            id=m.get("id", "str"),
            stage=m.get("stage", "int"),
            location=_read_location(m),
            processing_time=m.get("processing_time", "int", 0),
            capacity=m.get("capacity", "int", 1),
            attached=m.get("attached", "bool", True),
        )
        for m in r.items("machines")
    )
    bases = tuple(
        Facility(
            id=b.get("id", "str"),
            stage=b.get("stage", "int", 0),
            location=_read_location(b),
            processing_time=b.get("processing_time", "int", 0),
            initial_transporters=b.get("initial_transporters", "int"),
            storage_capacity=b.get("storage_capacity", "int"),
        )
        for b in r.items("bases")
    )
    jobs = []
    for j in r.items("jobs"):
        due = j.get("due_time", "int", None) if j.data.get("due_time") is not None else None
        skips = j.get("skip_stages", "list", [])
        for i, s in enumerate(skips):
            if isinstance(s, bool) or not isinstance(s, int):
                raise InstanceFormatError(f"field {j.path}skip_stages[{i}]: expected integer, got {s!r}")
        jobs.append(
            Job(
                id=j.get("id", "str"),
                location=_read_location(j),
                processing_time=j.get("processing_time", "int", 0),
                due_time=due,
                skip_stages=tuple(skips),
                attached=j.get("attached", "bool", True),
            )
        )
    tp = r.sub("transporter")
    w = r.sub("weights")
    overrides = tuple(
        TransportOverride(o.get("from", "str"), o.get("to", "str"), o.get("tt", "int"), o.get("te", "num"))
        for o in r.items("transport_overrides", [])
    )
    return Instance(
        stages=stages,
        machines=machines,
        bases=bases,
        jobs=tuple(jobs),
        transporter=TransporterParams(tp.get("e_max", "num"), tp.get("speed", "num"), tp.get("energy_rate", "num")),
        weights=Weights(
            alpha=w.get("alpha", "num"),
            beta=w.get("beta", "num"),
            k_exponent=w.get("k_exponent", "int", 1),
            zeta=w.get("zeta", "num", 0.0),
        ),
        delta_t=r.get("delta_t", "num"),
        transport_overrides=overrides,
    )


def dumps_instance(inst: Instance) -> str:
    return json.dumps(instance_to_dict(inst), indent=2) + "\n"


def loads_instance(text: str) -> Instance:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise InstanceFormatError(f"line {e.lineno} column {e.colno}: {e.msg}") from None
    return instance_from_dict(data)


def save_instance(inst: Instance, path: str | Path) -> None:
    Path(path).write_text(dumps_instance(inst), encoding="utf-8")


def load_instance(path: str | Path) -> Instance:
    return loads_instance(Path(path).read_text(encoding="utf-8"))
