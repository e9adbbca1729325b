"""Per-job stage graphs and facility-disjoint, energy-feasible path search."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import NamedTuple

from .instance import BASE_DISPATCH, BASE_RECEIVE, JOB, MACHINE, Instance, Job

START = "start"
END = "end"
_PREFIX = {BASE_DISPATCH: "D", JOB: "J", MACHINE: "M", BASE_RECEIVE: "R"}
_KIND = {v: k for k, v in _PREFIX.items()}


class PathError(ValueError):
    pass


def node_key(kind: str, ident: str) -> str:
    return f"{_PREFIX[kind]}:{ident}"


def split_key(key: str) -> tuple[str, str]:
    prefix, ident = key.split(":", 1)
    return _KIND[prefix], ident


@dataclass(frozen=True)
class Path:
    """Facility sequence ``[dispatch base, job, machines..., receive base]``.

    Relocation paths carry no job: ``[dispatch base, receive base]``.
    ``leg_times[i]`` is the travel ticks from ``nodes[i]`` to ``nodes[i+1]``.
    """

    nodes: tuple[str, ...]
    kinds: tuple[str, ...]
    energy: float
    leg_times: tuple[int, ...]
    job_id: str | None = None

    @property
    def is_relocation(self) -> bool:
        return self.job_id is None


@dataclass
class JobGraph:
    job_id: str
    adj: dict[str, list[tuple[str, float, int]]] = field(default_factory=dict)

    def add_edge(self, a: str, b: str, te: float, tt: int) -> None:
        self.adj.setdefault(a, []).append((b, te, tt))
        self.adj.setdefault(b, [])

    @property
    def nodes(self) -> list[str]:
        return list(self.adj)

    @property
    def edges(self) -> list[tuple[str, str, float, int]]:
        return [(a, b, te, tt) for a, out in self.adj.items() for b, te, tt in out]


def effective_stages(instance: Instance, job: Job) -> list[int]:
    """Stage indices visited by ``job`` once its skipped stages are bridged."""
    last = instance.n_stages - 1
    for s in job.skip_stages:
        if not 0 <= s <= last:
            raise PathError(f"job {job.id!r}: skip stage {s} does not exist")
        if instance.stages[s].kind != MACHINE:
            raise PathError(
                f"job {job.id!r}: skipping stage {s} ({instance.stages[s].kind}) leaves no route"
            )
    skip = set(job.skip_stages)
    return [s for s in range(instance.n_stages) if s not in skip]


def build_job_graph(instance: Instance, job: Job) -> JobGraph:
    g = JobGraph(job.id)
    layers: list[list] = []
    for s in effective_stages(instance, job):
        kind = instance.stages[s].kind
        if kind in (BASE_DISPATCH, BASE_RECEIVE):
            layers.append([(node_key(kind, b.id), b) for b in instance.bases])
        elif kind == JOB:
            layers.append([(node_key(JOB, job.id), job)])
        else:
            layers.append([(node_key(MACHINE, m.id), m) for m in instance.machines_at(s)])
    for key, _ in layers[0]:
        g.add_edge(START, key, 0.0, 0)
    for here, nxt in zip(layers, layers[1:]):
        for a_key, a in here:
            for b_key, b in nxt:
                g.add_edge(a_key, b_key, instance.transport_energy(a, b), instance.transport_time(a, b))
    for key, _ in layers[-1]:
        g.add_edge(key, END, 0.0, 0)
    return g


def shortest_path(graph: JobGraph, removed=frozenset()):
    """Minimum-energy start-to-end route avoiding ``removed`` nodes.

    Labels are ``(energy, ticks, node sequence)`` compared lexicographically,
    so ties on energy go to the faster route, then to the smaller id sequence.
    Returns the label of the end node or ``None``.
    """
    heap = [(0.0, 0, (START,))]
    settled = set()
    while heap:
        e, t, seq = heapq.heappop(heap)
        node = seq[-1]
        if node in settled:
            continue
        settled.add(node)
        if node == END:
            return e, t, seq
        for nxt, te, tt in graph.adj.get(node, ()):
            if nxt in removed or nxt in settled:
                continue
            heapq.heappush(heap, (e + te, t + tt, seq + (nxt,)))
    return None


def _to_path(graph: JobGraph, label) -> Path:
    energy, _, seq = label
    inner = seq[1:-1]
    legs = []
    for a, b in zip(inner, inner[1:]):
        legs.append(next(tt for n, _, tt in graph.adj[a] if n == b))
    parts = [split_key(k) for k in inner]
    return Path(
        nodes=tuple(i for _, i in parts),
        kinds=tuple(k for k, _ in parts),
        energy=energy,
        leg_times=tuple(legs),
        job_id=graph.job_id,
    )


def _removable(seq) -> list[str]:
    return [k for k in seq if k not in (START, END) and not k.startswith("J:")]


def _finder(graph: JobGraph, found: list, e_max: float):
    """First point of the lexicographic removal product that yields a new feasible route.

    Only the set of removed nodes matters, so shortest-path results are cached
    per set.  A set without a feasible route makes every superset dead too
    (removing nodes never lowers the minimum energy), and a subtree already
    exhausted for the same (depth, removed set) is not walked again.  Both
    prunings skip points that could not have been accepted, so the result is
    the one the plain product scan returns.
    """
    seen = {lab[2] for lab in found}
    choices = [_removable(lab[2]) for lab in found]
    cache: dict[frozenset, tuple | None] = {}
    dead: list[frozenset] = []
    exhausted: set[tuple[int, frozenset]] = set()

    def probe(removed: frozenset):
        if removed not in cache:
            cache[removed] = shortest_path(graph, removed)
        return cache[removed]

    def walk(depth: int, removed: frozenset):
        if any(d <= removed for d in dead):
            return None
        if depth == len(choices):
            lab = probe(removed)
            if lab is None or lab[0] >= e_max:
                dead.append(removed)
                return None
            return lab if lab[2] not in seen else None
        key = (depth, removed)
        if key in exhausted:
            return None
        for node in choices[depth]:
            lab = walk(depth + 1, removed | {node})
            if lab is not None:
                return lab
        exhausted.add(key)
        return None

    return walk(0, frozenset())


class PathSearch(NamedTuple):
    paths: list[Path]
    warning: str | None


def find_disjoint_paths(graph: JobGraph, e_max: float, p_min: int = 1, p_max: int | None = None) -> PathSearch:
    """Energy-feasible routes for one job, each differing from the others in a facility.

    The first route is the global minimum-energy one.  Each further route is
    the shortest one found after deleting one removable node from every route
    found so far, trying deletion combinations in lexicographic order.
    """
    if p_min < 1 or (p_max is not None and p_max < p_min):
        raise ValueError("need 1 <= p_min <= p_max")
    found: list = []
    while p_max is None or len(found) < p_max:
        lab = _finder(graph, found, e_max)
        if lab is None:
            break
        found.append(lab)
    warning = None
    if not found:
        warning = f"job {graph.job_id}: a feasible path does not exist"
    elif len(found) < p_min:
        warning = f"job {graph.job_id}: only {len(found)} of {p_min} required paths found"
    return PathSearch([_to_path(graph, lab) for lab in found], warning)


def relocation_paths(instance: Instance, e_max: float) -> list[Path]:
    """Direct jobless transfers between every ordered pair of distinct bases."""
    out = []
    for b in instance.bases:
        for r in instance.bases:
            if b.id == r.id:
                continue
            te = instance.transport_energy(b, r)
            if te < e_max:
                out.append(
                    Path(
                        nodes=(b.id, r.id),
                        kinds=(BASE_DISPATCH, BASE_RECEIVE),
                        energy=te,
                        leg_times=(instance.transport_time(b, r),),
                    )
                )
    return out
