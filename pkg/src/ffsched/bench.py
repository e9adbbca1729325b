"""Seeded random instances and the three scaling experiments.

Every experiment row is one engine run on one generated instance and carries
its seed, its configuration, the objective, wall time and validator status.
"""

from __future__ import annotations

import csv
import json
import math
import random
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .instance import (
    BASE_DISPATCH,
    BASE_RECEIVE,
    JOB,
    MACHINE,
    Facility,
    Instance,
    Job,
    Location,
    Stage,
    TransporterParams,
    Weights,
)
from .pathfind import build_job_graph, shortest_path
from .segmenter import OptimizerConfig, UnschedulableError, run
from .validate import validate


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class GenSpec:
    """Knobs for :func:`gen_instance`.

    Distances are meters, times ticks of ``delta_t`` seconds.  Labs release
    the transporter on arrival (``lab_attached=False``); the base processing
    time is the recharge time.
    """

    n_jobs: int = 100
    n_bases: int = 10
    n_labs: int = 10
    seed: int = 0
    area_size: float = 2000.0
    speed: float = 10.0
    energy_rate: float = 1.0
    delta_t: float = 30.0
    job_pt: int = 1
    lab_pt: int = 4
    lab_capacity: int = 1
    lab_attached: bool = False
    base_pt: int = 3
    transporters_per_base: int = 1
    storage_capacity: int = 3
    alpha: float = 0.01
    beta: float = 1.0
    feasible_fraction: float = 0.95
    e_max_start: float | None = None
    e_max_growth: float = 1.2
    max_tune_steps: int = 30


def _min_energy(instance: Instance, job: Job) -> float:
    lab = shortest_path(build_job_graph(instance, job))
    return math.inf if lab is None else lab[0]


def gen_instance(spec: GenSpec | None = None, **overrides) -> Instance:
    """Uniform random layout in ``[0, area_size]^2``.

    ``e_max`` starts at ``e_max_start`` (default: the area side times the
    energy rate) and grows geometrically until at least ``feasible_fraction``
    of the jobs have a path strictly below it.
    """
    spec = replace(spec or GenSpec(), **overrides)
    if min(spec.n_jobs, spec.n_bases, spec.n_labs) < 1:
        raise ValueError("n_jobs, n_bases and n_labs must all be >= 1")
    rng = random.Random(spec.seed)
    a = spec.area_size

    def loc():
        return Location(round(rng.uniform(0, a), 3), round(rng.uniform(0, a), 3))

    wj = len(str(spec.n_jobs - 1))
    bases = tuple(
        Facility(
            id=f"b{i}",
            stage=0,
            location=loc(),
            processing_time=spec.base_pt,
            initial_transporters=spec.transporters_per_base,
            storage_capacity=max(spec.storage_capacity, spec.transporters_per_base),
        )
        for i in range(spec.n_bases)
    )
    labs = tuple(
        Facility(
            id=f"lab{i}",
            stage=2,
            location=loc(),
            processing_time=spec.lab_pt,
            capacity=spec.lab_capacity,
            attached=spec.lab_attached,
        )
        for i in range(spec.n_labs)
    )
    jobs = tuple(Job(id=f"j{i:0{wj}d}", location=loc(), processing_time=spec.job_pt) for i in range(spec.n_jobs))
    stages = (
        Stage(0, BASE_DISPATCH),
        Stage(1, JOB),
        Stage(2, MACHINE),
        Stage(3, BASE_RECEIVE),
    )
    e_max = spec.e_max_start if spec.e_max_start is not None else a * spec.energy_rate
    inst = Instance(
        stages=stages,
        machines=labs,
        bases=bases,
        jobs=jobs,
        transporter=TransporterParams(e_max, spec.speed, spec.energy_rate),
        weights=Weights(spec.alpha, spec.beta),
        delta_t=spec.delta_t,
    )
    need = [_min_energy(inst, j) for j in jobs]
    for _ in range(spec.max_tune_steps):
        ok = sum(1 for e in need if e < e_max)
        if ok >= spec.feasible_fraction * len(jobs):
            return replace(inst, transporter=TransporterParams(round(e_max, 6), spec.speed, spec.energy_rate))
        e_max *= spec.e_max_growth
    raise GenerationError(
        f"fewer than {spec.feasible_fraction:.0%} of jobs reachable after "
        f"{spec.max_tune_steps} steps; try a larger e_max_start"
    )


# --- experiments -------------------------------------------------------------

CSV_FIELDS = [
    "experiment",
    "seed",
    "n_jobs",
    "n_bases",
    "n_labs",
    "n_select",
    "n_clusters",
    "tau_h",
    "gamma",
    "p_max",
    "objective",
    "wall_time",
    "n_segments",
    "makespan",
    "feasible",
    "n_violations",
    "unscheduled",
]

# bench defaults: every job reachable, a handful of disjoint paths per job
BENCH_CONFIG = OptimizerConfig(n_select=5, n_clusters="auto", tau_h=8, p_max=3)


def bench_spec(n_jobs: int, seed: int, **kw) -> GenSpec:
    return GenSpec(n_jobs=n_jobs, seed=seed, feasible_fraction=1.0, **kw)


def run_once(experiment: str, instance: Instance, config: OptimizerConfig, seed: int) -> dict:
    t0 = time.perf_counter()
    unscheduled = 0
    try:
        sched = run(instance, config)
    except UnschedulableError as e:
        sched = e.schedule
        unscheduled = len(e.job_ids)
    wall = time.perf_counter() - t0
    violations = validate(instance, sched, complete=not unscheduled)
    return {
        "experiment": experiment,
        "seed": seed,
        "n_jobs": len(instance.jobs),
        "n_bases": len(instance.bases),
        "n_labs": len(instance.machines),
        "n_select": config.n_select,
        "n_clusters": sched.n_clusters,
        "tau_h": config.tau_h,
        "gamma": config.gamma,
        "p_max": config.p_max,
        "objective": sched.objective(instance),
        "wall_time": wall,
        "n_segments": len(sched.segments),
        "makespan": sched.makespan,
        "feasible": not violations,
        "n_violations": len(violations),
        "unscheduled": unscheduled,
    }


def _run_grid(experiment, grid, workers: int) -> list[dict]:
    if workers <= 1:
        return [run_once(experiment, *args) for args in grid]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(workers) as pool:
        return list(pool.map(run_once, [experiment] * len(grid), *zip(*grid)))


def linear_fit(xs, ys) -> dict:
    """Least-squares line with coefficient of determination."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return {"slope": float(slope), "intercept": float(intercept), "r2": r2}


def group_means(rows, key, value) -> tuple[list, list[float]]:
    groups: dict = {}
    for r in rows:
        groups.setdefault(r[key], []).append(r[value])
    xs = sorted(groups)
    return xs, [float(np.mean(groups[x])) for x in xs]


def experiment_runtime_vs_jobs(seeds, job_counts, n_select=5, config=None, workers=1, **gen) -> tuple[list[dict], dict]:
    cfg = replace(config or BENCH_CONFIG, n_select=n_select)
    grid = [(gen_instance(bench_spec(n, s, **gen)), cfg, s) for n in job_counts for s in seeds]
    rows = _run_grid("runtime_vs_jobs", grid, workers)
    xs, means = group_means(rows, "n_jobs", "wall_time")
    return rows, {"x": xs, "mean_wall_time": means, **linear_fit(xs, means)}


def experiment_cost_vs_ns(seeds, ns_values, n_jobs=100, config=None, workers=1, **gen) -> tuple[list[dict], dict]:
    base = config or BENCH_CONFIG
    insts = {s: gen_instance(bench_spec(n_jobs, s, **gen)) for s in seeds}
    grid = [(insts[s], replace(base, n_select=ns), s) for ns in ns_values for s in seeds]
    rows = _run_grid("cost_vs_ns", grid, workers)
    xs, means = group_means(rows, "n_select", "objective")
    return rows, {"x": xs, "mean_objective": means}


def experiment_runtime_vs_ns(seeds, ns_values, n_jobs=100, config=None, workers=1, **gen) -> tuple[list[dict], dict]:
    base = config or BENCH_CONFIG
    insts = {s: gen_instance(bench_spec(n_jobs, s, **gen)) for s in seeds}
    grid = [(insts[s], replace(base, n_select=ns), s) for ns in ns_values for s in seeds]
    rows = _run_grid("runtime_vs_ns", grid, workers)
    xs, means = group_means(rows, "n_select", "wall_time")
    return rows, {"x": xs, "mean_wall_time": means}


EXPERIMENTS = {
    "runtime-vs-jobs": (experiment_runtime_vs_jobs, "n_jobs", "wall_time", "jobs", "wall time [s]"),
    "cost-vs-ns": (experiment_cost_vs_ns, "n_select", "objective", "jobs per segment", "objective"),
    "runtime-vs-ns": (experiment_runtime_vs_ns, "n_select", "wall_time", "jobs per segment", "wall time [s]"),
}


def write_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        w.writeheader()
        for r in rows:
            w.writerow(r)


def write_outputs(name: str, rows: list[dict], summary: dict, manifest: dict, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _, xkey, ykey, xlabel, ylabel = EXPERIMENTS[name]
    paths = {
        "csv": out / f"{name}.csv",
        "summary": out / f"{name}.summary.json",
        "manifest": out / f"{name}.manifest.json",
        "plot": out / f"{name}.svg",
    }
    write_csv(rows, paths["csv"])
    paths["summary"].write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    paths["manifest"].write_text(json.dumps(manifest, indent=2, default=str) + "\n", encoding="utf-8")
    xs, means = group_means(rows, xkey, ykey)
    scatter = [(r[xkey], r[ykey]) for r in rows]
    paths["plot"].write_text(svg_plot(xs, means, scatter, name, xlabel, ylabel), encoding="utf-8")
    return paths


def manifest_for(name: str, config: OptimizerConfig, gen: dict, **grid) -> dict:
    return {"experiment": name, "config": asdict(config), "generator": asdict(replace(GenSpec(), **gen)), **grid}


def svg_plot(xs, means, scatter, title, xlabel, ylabel, width=480, height=320) -> str:
    """Minimal SVG: per-run dots plus the line through the means."""
    pad = 50
    allx = [x for x, _ in scatter] + list(xs)
    ally = [y for _, y in scatter] + list(means)
    x0, x1 = min(allx), max(allx)
    y0, y1 = min(0.0, min(ally)), max(ally)
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 1

    def px(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def py(y):
        return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">',
        f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="13">{title}</text>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2}" y="{height - 12}" text-anchor="middle">{xlabel}</text>',
        f'<text x="14" y="{height / 2}" text-anchor="middle" transform="rotate(-90 14 {height / 2})">{ylabel}</text>',
    ]
    for x in xs:
        parts.append(f'<text x="{px(x):.1f}" y="{height - pad + 14}" text-anchor="middle">{x}</text>')
    for frac in (0.0, 0.5, 1.0):
        y = y0 + frac * (y1 - y0)
        parts.append(f'<text x="{pad - 4}" y="{py(y) + 4:.1f}" text-anchor="end">{y:.3g}</text>')
    for x, y in scatter:
        parts.append(f'<circle cx="{px(x):.1f}" cy="{py(y):.1f}" r="2" fill="#999"/>')
    pts = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in zip(xs, means))
    parts.append(f'<polyline points="{pts}" fill="none" stroke="#c22" stroke-width="2"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
