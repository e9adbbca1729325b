"""Time-stamped candidate schedules built from paths over a dispatch window."""

from __future__ import annotations

from dataclasses import dataclass

from .instance import Instance
from .pathfind import Path


@dataclass(frozen=True)
class TimeWindow:
    start: int
    end: int

    def __post_init__(self):
        if self.start < 0 or self.start > self.end:
            raise ValueError(f"invalid window [{self.start}, {self.end}]")

    def __len__(self) -> int:
        return self.end - self.start + 1

    def __contains__(self, t: int) -> bool:
        return self.start <= t <= self.end


@dataclass(frozen=True)
class Candidate:
    """A path with concrete arrival ticks and one binary decision variable.

    ``times[0]`` is the dispatch tick, ``times[s]`` the arrival at
    ``path.nodes[s]``; ``finish`` adds the receiving base's processing time.
    """

    path: Path
    times: tuple[int, ...]
    var_id: int
    finish: int

    @property
    def job_id(self) -> str | None:
        return self.path.job_id

    @property
    def energy(self) -> float:
        return self.path.energy

    @property
    def dispatch_base(self) -> str:
        return self.path.nodes[0]

    @property
    def receive_base(self) -> str:
        return self.path.nodes[-1]

    @property
    def arrival(self) -> int:
        return self.times[-1]


def path_offsets(path: Path, instance: Instance) -> tuple[tuple[int, ...], int]:
    """Arrival offsets relative to dispatch, and the finish offset."""
    offs = [0]
    for s in range(1, len(path.nodes)):
        prev = instance.lookup(path.nodes[s - 1])
        offs.append(offs[-1] + path.leg_times[s - 1] + prev.processing_time * int(prev.attached))
    last = instance.lookup(path.nodes[-1])
    return tuple(offs), offs[-1] + last.processing_time


def generate_candidates(
    paths: list[Path],
    window: TimeWindow,
    instance: Instance,
    start_id: int = 0,
    stride: int = 1,
) -> list[Candidate]:
    if stride < 1:
        raise ValueError("dispatch stride must be >= 1")
    out = []
    vid = start_id
    for p in paths:
        offs, fin = path_offsets(p, instance)
        for td in range(window.start, window.end + 1, stride):
            out.append(Candidate(p, tuple(td + o for o in offs), vid, td + fin))
            vid += 1
    return out
