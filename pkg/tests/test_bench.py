import csv
import json

import pytest

from ffsched.bench import (
    CSV_FIELDS,
    EXPERIMENTS,
    GenerationError,
    GenSpec,
    experiment_cost_vs_ns,
    experiment_runtime_vs_jobs,
    gen_instance,
    linear_fit,
    manifest_for,
    write_outputs,
)
from ffsched.instance import dumps_instance
from ffsched.pathfind import build_job_graph, find_disjoint_paths
from ffsched.segmenter import OptimizerConfig

SMALL = OptimizerConfig(n_select=2, tau_h=8, p_max=2)


def test_hundred_job_instance():
    inst = gen_instance(GenSpec(n_jobs=100, n_bases=10, n_labs=10, seed=1))
    assert (len(inst.jobs), len(inst.bases), len(inst.machines)) == (100, 10, 10)
    assert [s.kind for s in inst.stages] == ["base_dispatch", "job", "machine", "base_receive"]
    assert all(not m.attached for m in inst.machines)
    e_max = inst.transporter.e_max
    reachable = sum(bool(find_disjoint_paths(build_job_graph(inst, j), e_max, p_max=1).paths) for j in inst.jobs)
    assert reachable >= 95
    for f in inst.bases + inst.machines:
        assert 0 <= f.location.x <= 2000 and 0 <= f.location.y <= 2000


def test_seeded_determinism():
    a = gen_instance(n_jobs=30, seed=5)
    b = gen_instance(n_jobs=30, seed=5)
    assert dumps_instance(a) == dumps_instance(b)
    assert dumps_instance(gen_instance(n_jobs=30, seed=6)) != dumps_instance(a)


def test_unreachable_target_raises():
    with pytest.raises(GenerationError, match="e_max"):
        gen_instance(n_jobs=5, seed=0, e_max_start=1.0, max_tune_steps=2)


def test_counts_must_be_positive():
    with pytest.raises(ValueError):
        gen_instance(n_jobs=0)


def test_one_job_smoke_row():
    spec = dict(n_bases=1, n_labs=1)
    rows, _ = experiment_cost_vs_ns([0], [1], n_jobs=1, config=SMALL, **spec)
    (row,) = rows
    inst = gen_instance(GenSpec(n_jobs=1, seed=0, feasible_fraction=1.0, **spec))
    (path,) = find_disjoint_paths(build_job_graph(inst, inst.jobs[0]), inst.transporter.e_max).paths
    # the lone transporter leaves at tick 0 and never waits
    pt = [inst.lookup(n).processing_time * inst.lookup(n).attached for n in path.nodes]
    t_f = sum(path.leg_times) + sum(pt[:-1]) + inst.bases[0].processing_time
    w = inst.weights
    assert row["objective"] == pytest.approx(w.alpha * path.energy + w.beta * t_f)
    assert row["feasible"] and row["n_violations"] == 0


def test_linear_fit():
    fit = linear_fit([1, 2, 3, 4], [3, 5, 7, 9])
    assert fit["slope"] == pytest.approx(2) and fit["intercept"] == pytest.approx(1) and fit["r2"] == pytest.approx(1)


def test_outputs(tmp_path):
    gen = dict(n_bases=2, n_labs=2)
    rows, summary = experiment_runtime_vs_jobs([0, 1], [4, 6], n_select=2, config=SMALL, **gen)
    assert len(rows) == 4 and all(r["feasible"] for r in rows)
    assert summary["x"] == [4, 6]
    paths = write_outputs("runtime-vs-jobs", rows, summary, manifest_for("runtime-vs-jobs", SMALL, gen), tmp_path)
    with open(paths["csv"]) as fh:
        got = list(csv.DictReader(fh))
    assert list(got[0]) == CSV_FIELDS and len(got) == 4
    assert paths["plot"].read_text().startswith("<svg")
    manifest = json.loads(paths["manifest"].read_text())
    assert manifest["generator"]["n_bases"] == 2 and manifest["config"]["n_select"] == 2
    assert set(EXPERIMENTS) == {"runtime-vs-jobs", "cost-vs-ns", "runtime-vs-ns"}
