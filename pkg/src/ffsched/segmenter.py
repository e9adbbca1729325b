"""Rolling-horizon optimizer: select jobs, build candidates, solve, accumulate."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path as FsPath
from typing import IO, Union

from .bip import Status, build_program, candidate_cost, solve
from .candidates import Candidate, TimeWindow, generate_candidates
from .cluster import cluster_jobs, select, suggest_n_clusters
from .instance import BASE_DISPATCH, BASE_RECEIVE, JOB, Instance
from .pathfind import Path, build_job_graph, find_disjoint_paths, relocation_paths

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
AUTO_K_MAX = 10


@dataclass
class OptimizerConfig:
    n_select: int = 5
    n_clusters: Union[int, str] = "auto"
    tau_h: int = 10
    gamma: float = 1.0
    p_min: int = 1
    p_max: int | None = None
    dispatch_stride: int = 1
    max_stall_retries: int = 3
    rng_seed: int = 0
    backend: str = "highs"

    def __post_init__(self):
        if self.n_select < 1:
            raise ValueError("n_select must be >= 1")
        if self.tau_h < 1:
            raise ValueError("tau_h must be >= 1")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.n_clusters != "auto" and (not isinstance(self.n_clusters, int) or self.n_clusters < 1):
            raise ValueError("n_clusters must be a positive integer or 'auto'")
        if self.p_min < 1 or (self.p_max is not None and self.p_max < self.p_min):
            raise ValueError("need 1 <= p_min <= p_max")
        if self.dispatch_stride < 1:
            raise ValueError("dispatch_stride must be >= 1")
        if self.max_stall_retries < 0:
            raise ValueError("max_stall_retries must be >= 0")


@dataclass
class SegmentStats:
    index: int
    window: tuple[int, int]
    selected: list[str]
    n_candidates: int
    n_variables: int
    n_constraints: int
    status: str
    objective: float | None
    accepted: list[int]
    retries: int
    nodes: int
    wall_time: float = 0.0


@dataclass
class Schedule:
    accepted: list[Candidate] = field(default_factory=list)
    makespan: int = 0
    segments: list[SegmentStats] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    unschedulable: list[str] = field(default_factory=list)
    n_clusters: int | None = None

    def objective(self, instance: Instance) -> float:
        return math.fsum(candidate_cost(c, instance) for c in self.accepted)

    @property
    def wall_time(self) -> float:
        return sum(s.wall_time for s in self.segments)


class UnschedulableError(RuntimeError):
    """Some jobs could not be scheduled; ``schedule`` holds everything else."""

    def __init__(self, message: str, job_ids: list[str], schedule: Schedule):
        super().__init__(message)
        self.job_ids = job_ids
        self.schedule = schedule


class StallError(UnschedulableError):
    pass


def _warn(schedule: Schedule, msg: str) -> None:
    log.warning(msg)
    schedule.warnings.append(msg)


def run(instance: Instance, config: OptimizerConfig, run_log: IO[str] | None = None) -> Schedule:
    """Schedule every job of ``instance`` segment by segment.

    Raises :class:`UnschedulableError` after the loop when some job has no
    energy-feasible path, and :class:`StallError` as soon as a segment stays
    unsolvable after ``max_stall_retries`` window extensions.
    """
    cfg = config
    e_max = instance.transporter.e_max
    jobs = list(instance.jobs)
    schedule = Schedule()
    if not jobs:
        return schedule
    nc = cfg.n_clusters
    if nc == "auto":
        nc = suggest_n_clusters(jobs, AUTO_K_MAX, cfg.rng_seed)
    nc = min(nc, len(jobs))
    schedule.n_clusters = nc
    state = cluster_jobs(jobs, nc, cfg.rng_seed)
    reloc = relocation_paths(instance, e_max)
    next_id = 0
    seg = 0

    while state.n_unassigned:
        selected = select(state, cfg.n_select)
        job_paths: dict[str, list[Path]] = {}
        for jid in selected:
            found = find_disjoint_paths(
                build_job_graph(instance, instance.job_by_id[jid]), e_max, cfg.p_min, cfg.p_max
            )
            if found.warning:
                _warn(schedule, found.warning)
            if found.paths:
                job_paths[jid] = found.paths
            else:
                schedule.unschedulable.append(jid)
        state.remove([j for j in selected if j not in job_paths])
        if not job_paths:
            continue
        paths = [p for jid in selected if jid in job_paths for p in job_paths[jid]] + reloc

        result = None
        for attempt in range(cfg.max_stall_retries + 1):
            t0 = time.perf_counter()
            start = max(math.floor(schedule.makespan - cfg.gamma * cfg.tau_h), 0)
            window = TimeWindow(start, schedule.makespan + cfg.tau_h * (attempt + 1))
            cands = generate_candidates(paths, window, instance, next_id, cfg.dispatch_stride)
            prog = build_program(cands, schedule.accepted, window, instance)
            result = solve(prog, cfg.backend)
            ok = result.status is Status.OPTIMAL
            stats = SegmentStats(
                index=seg,
                window=(window.start, window.end),
                selected=list(job_paths),
                n_candidates=len(cands),
                n_variables=len(prog.variables),
                n_constraints=len(prog.constraints),
                status=result.status.value,
                objective=result.objective_value if ok else None,
                accepted=[c.var_id for c in cands if ok and result.assignment[c.var_id]],
                retries=attempt,
                nodes=result.nodes,
                wall_time=time.perf_counter() - t0,
            )
            if run_log is not None:
                run_log.write(json.dumps(asdict(stats)) + "\n")
            if ok:
                schedule.segments.append(stats)
                break
            _warn(
                schedule,
                f"segment {seg}: no job assigned in window [{window.start}, {window.end}]; "
                "the time window is not long enough or no transporter can reach the jobs",
            )
        else:
            stuck = list(job_paths)
            msg = f"segment {seg} stalled after {cfg.max_stall_retries} retries; jobs {', '.join(stuck)}"
            _warn(schedule, msg)
            raise StallError(msg, stuck, schedule)

        next_id += len(cands)
        chosen = [c for c in cands if result.assignment[c.var_id]]
        schedule.accepted.extend(chosen)
        schedule.makespan = max([schedule.makespan] + [c.arrival for c in chosen])
        state.remove([c.job_id for c in chosen if c.job_id is not None])
        seg += 1

    if schedule.unschedulable:
        ids = ", ".join(schedule.unschedulable)
        raise UnschedulableError(f"no feasible path for job(s) {ids}", list(schedule.unschedulable), schedule)
    return schedule


# --- serialization -------------------------------------------------------------


def notation(c: Candidate) -> str:
    return ", ".join(f"{n}|{t}" for n, t in zip(c.path.nodes, c.times))


def schedule_to_dict(schedule: Schedule, instance: Instance) -> dict:
    segs = []
    for s in schedule.segments:
        d = asdict(s)
        del d["wall_time"]
        d["window"] = list(s.window)
        segs.append(d)
    return {
        "format_version": FORMAT_VERSION,
        "makespan": schedule.makespan,
        "objective": schedule.objective(instance),
        "n_clusters": schedule.n_clusters,
        "assignments": [
            {
                "var_id": c.var_id,
                "job_id": c.job_id,
                "path": list(c.path.nodes),
                "times": list(c.times),
                "energy": c.energy,
                "finish": c.finish,
                "notation": notation(c),
            }
            for c in schedule.accepted
        ],
        "segments": segs,
        "warnings": list(schedule.warnings),
        "unschedulable": list(schedule.unschedulable),
    }


def dumps_schedule(schedule: Schedule, instance: Instance) -> str:
    return json.dumps(schedule_to_dict(schedule, instance), indent=2, sort_keys=True) + "\n"


def save_schedule(schedule: Schedule, instance: Instance, path) -> None:
    FsPath(path).write_text(dumps_schedule(schedule, instance), encoding="utf-8")


class ScheduleFormatError(ValueError):
    pass


def _kinds(nodes: list[str], job_id: str | None, instance: Instance) -> tuple[str, ...]:
    kinds = []
    for i, n in enumerate(nodes):
        if i == 0:
            kinds.append(BASE_DISPATCH)
        elif i == len(nodes) - 1:
            kinds.append(BASE_RECEIVE)
        elif i == 1 and job_id is not None:
            kinds.append(JOB)
        else:
            kinds.append(instance.stages[instance.facility_by_id[n].stage].kind if n in instance.facility_by_id else "unknown")
    return tuple(kinds)


def schedule_from_dict(data: dict, instance: Instance) -> Schedule:
    """Rebuild a schedule; paths are taken verbatim so a validator can audit them."""
    try:
        if data.get("format_version") != FORMAT_VERSION:
            raise ScheduleFormatError(f"unsupported schedule format_version {data.get('format_version')!r}")
        accepted = []
        for k, a in enumerate(data["assignments"]):
            nodes = [str(n) for n in a["path"]]
            legs = []
            for x, y in zip(nodes, nodes[1:]):
                try:
                    legs.append(instance.transport_time(instance.lookup(x), instance.lookup(y)))
                except KeyError:
                    legs.append(0)
            p = Path(
                nodes=tuple(nodes),
                kinds=_kinds(nodes, a.get("job_id"), instance),
                energy=float(a["energy"]),
                leg_times=tuple(legs),
                job_id=a.get("job_id"),
            )
            accepted.append(Candidate(p, tuple(int(t) for t in a["times"]), int(a["var_id"]), int(a["finish"])))
        return Schedule(
            accepted=accepted,
            makespan=int(data["makespan"]),
            warnings=list(data.get("warnings", [])),
            unschedulable=list(data.get("unschedulable", [])),
            n_clusters=data.get("n_clusters"),
        )
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ScheduleFormatError):
            raise
        raise ScheduleFormatError(f"malformed schedule: {e!r}") from None


def load_schedule(path, instance: Instance) -> Schedule:
    try:
        data = json.loads(FsPath(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ScheduleFormatError(f"line {e.lineno} column {e.colno}: {e.msg}") from None
    return schedule_from_dict(data, instance)


__all__ = [
    "OptimizerConfig",
    "Schedule",
    "SegmentStats",
    "StallError",
    "UnschedulableError",
    "run",
]
