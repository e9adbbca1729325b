"""Tick-by-tick replay of a finished schedule against the feasibility rules.

Written directly from the problem definition and kept apart from the
program-assembly code, so the two can check each other.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Iterable

from .instance import BASE_DISPATCH, BASE_RECEIVE, JOB, MACHINE, Instance

REPORT_VERSION = 1


@dataclass(frozen=True)
class Violation:
    constraint: str
    tick: int | None
    facility: str | None
    detail: str
    until: int | None = None


def _expected_route(instance: Instance, job_id: str) -> list[str]:
    job = instance.job_by_id[job_id]
    skip = set(job.skip_stages)
    return [st.kind for st in instance.stages if st.index not in skip]


def _check_structure(instance: Instance, k: int, entry) -> list[Violation]:
    out = []
    nodes = list(entry.path.nodes)
    jid = entry.job_id
    bases = instance.base_ids

    def bad(msg):
        out.append(Violation("structure", None, None, f"assignment {k}: {msg}"))

    if len(entry.times) != len(nodes):
        bad(f"{len(entry.times)} ticks for {len(nodes)} facilities")
        return out
    if len(nodes) < 2 or nodes[0] not in bases or nodes[-1] not in bases:
        bad("must start and end at base stations")
        return out
    if jid is None:
        if len(nodes) != 2:
            bad("a relocation visits exactly two bases")
        return out
    if jid not in instance.job_by_id:
        bad(f"unknown job {jid!r}")
        return out
    route = _expected_route(instance, jid)
    if len(route) != len(nodes):
        bad(f"job {jid} needs {len(route)} stops, path has {len(nodes)}")
        return out
    stages = [st.index for st in instance.stages if st.index not in set(instance.job_by_id[jid].skip_stages)]
    for s, (kind, node) in enumerate(zip(route, nodes)):
        if kind == JOB and node != jid:
            bad(f"stop {s} must be job {jid}, got {node!r}")
        elif kind == MACHINE:
            m = instance.facility_by_id.get(node)
            if m is None or m in instance.bases or m.stage != stages[s]:
                bad(f"stop {s} must be a machine of stage {stages[s]}, got {node!r}")
        elif kind in (BASE_DISPATCH, BASE_RECEIVE) and node not in bases:
            bad(f"stop {s} must be a base, got {node!r}")
    return out


def _objects(instance: Instance, nodes):
    return [instance.job_by_id.get(n) or instance.facility_by_id[n] for n in nodes]


def _runs(flags: list[bool]):
    """Yield (first, last) index pairs of consecutive True runs."""
    start = None
    for t, f in enumerate(flags):
        if f and start is None:
            start = t
        elif not f and start is not None:
            yield start, t - 1
            start = None
    if start is not None:
        yield start, len(flags) - 1


def validate(instance: Instance, schedule, complete: bool = True) -> list[Violation]:
    """List every violated rule; an empty list means the schedule is feasible.

    ``schedule`` is a Schedule or any iterable of accepted candidates.  With
    ``complete=False`` jobs may be missing (partial schedules), but never
    duplicated.
    """
    entries = list(getattr(schedule, "accepted", schedule))
    out: list[Violation] = []
    ok_entries = []
    for k, e in enumerate(entries):
        errs = _check_structure(instance, k, e)
        out.extend(errs)
        if not errs:
            ok_entries.append(e)

    e_max = instance.transporter.e_max
    for e in ok_entries:
        objs = _objects(instance, e.path.nodes)
        label = e.job_id or f"relocation {e.path.nodes[0]}->{e.path.nodes[-1]}"
        if e.times[0] < 0:
            out.append(Violation("timing", e.times[0], objs[0].id, f"{label}: negative dispatch tick"))
        # arrival ticks must follow from travel and attached processing
        t = e.times[0]
        for s in range(1, len(objs)):
            prev = objs[s - 1]
            t = t + instance.transport_time(prev, objs[s]) + (prev.processing_time if prev.attached else 0)
            if e.times[s] != t:
                out.append(
                    Violation("timing", e.times[s], objs[s].id, f"{label}: arrival {e.times[s]} should be {t}")
                )
                break
        finish = e.times[-1] + objs[-1].processing_time
        if e.finish != finish:
            out.append(Violation("timing", e.finish, objs[-1].id, f"{label}: finish {e.finish} should be {finish}"))
        energy = 0.0
        for a, b in zip(objs, objs[1:]):
            energy += instance.transport_energy(a, b)
        if not energy < e_max:
            out.append(Violation("energy", e.times[0], None, f"{label}: energy {energy:g} is not below {e_max:g}"))
        if abs(energy - e.energy) > 1e-6 * max(1.0, abs(energy)):
            out.append(Violation("energy", e.times[0], None, f"{label}: recorded energy {e.energy:g} != {energy:g}"))

    count: dict[str, int] = {}
    for e in entries:
        if e.job_id is not None:
            count[e.job_id] = count.get(e.job_id, 0) + 1
    for j in instance.jobs:
        n = count.get(j.id, 0)
        if n > 1 or (complete and n == 0):
            out.append(Violation("job_once", None, j.id, f"job {j.id} scheduled {n} times"))

    out.extend(_replay(instance, ok_entries))
    return out


def _replay(instance: Instance, entries) -> Iterable[Violation]:
    horizon = 1
    for e in entries:
        horizon = max(horizon, e.finish + 1, max(e.times) + 1)
        for n, t in zip(e.path.nodes, e.times):
            f = instance.facility_by_id.get(n)
            if f is not None:
                horizon = max(horizon, t + f.processing_time + 1)

    # machines: busy on every tick from arrival through arrival + processing time
    busy = {m.id: [0] * horizon for m in instance.machines}
    for e in entries:
        for n, t in zip(e.path.nodes[1:-1], e.times[1:-1]):
            if n in busy:
                row = busy[n]
                for tick in range(max(t, 0), t + instance.facility_by_id[n].processing_time + 1):
                    row[tick] += 1
    for m in instance.machines:
        row = busy[m.id]
        for a, b in _runs([x > m.capacity for x in row]):
            yield Violation(
                "machine_capacity", a, m.id, f"{max(row[a:b + 1])} operations exceed capacity {m.capacity}", b
            )

    # bases: transporters leave at dispatch, are stored on arrival, usable after recharge
    for b in instance.bases:
        d_avail = [0] * (horizon + 1)
        d_store = [0] * (horizon + 1)
        for e in entries:
            if e.path.nodes[0] == b.id and e.times[0] >= 0:
                d_avail[e.times[0]] -= 1
                d_store[e.times[0]] -= 1
            if e.path.nodes[-1] == b.id:
                d_avail[e.times[-1] + b.processing_time] += 1
                d_store[e.times[-1]] += 1
        avail, stored = [], []
        a = s = b.initial_transporters
        for tick in range(horizon):
            a += d_avail[tick]
            s += d_store[tick]
            avail.append(a)
            stored.append(s)
        for x, y in _runs([v < 0 for v in avail]):
            yield Violation("base_availability", x, b.id, f"{min(avail[x:y + 1])} transporters available", y)
        for x, y in _runs([v > b.storage_capacity for v in stored]):
            yield Violation(
                "base_storage", x, b.id, f"{max(stored[x:y + 1])} stored exceeds capacity {b.storage_capacity}", y
            )


def report_to_dict(violations: list[Violation]) -> dict:
    return {
        "format_version": REPORT_VERSION,
        "feasible": not violations,
        "violations": [asdict(v) for v in violations],
    }


def dumps_report(violations: list[Violation]) -> str:
    return json.dumps(report_to_dict(violations), indent=2, sort_keys=True) + "\n"
