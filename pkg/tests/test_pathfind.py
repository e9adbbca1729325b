import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ffsched.instance import InstanceError
from ffsched.pathfind import (
    END,
    START,
    PathError,
    build_job_graph,
    effective_stages,
    find_disjoint_paths,
    relocation_paths,
    shortest_path,
)
from helpers import base, enumerate_routes, job, machine, make_instance


def test_minimal_topology():
    inst = make_instance([base("b", 0.0)], [machine("m", 2, 3.0)], [job("j", 1.0)])
    g = build_job_graph(inst, inst.jobs[0])
    assert [(a, b) for a, b, _, _ in g.edges] == [
        (START, "D:b"),
        ("D:b", "J:j"),
        ("J:j", "M:m"),
        ("M:m", "R:b"),
        ("R:b", END),
    ]
    te = {(a, b): e for a, b, e, _ in g.edges}
    assert te[(START, "D:b")] == 0.0 and te[("R:b", END)] == 0.0
    assert te[("J:j", "M:m")] == 2.0


def test_edge_counts_follow_layers():
    inst = make_instance(
        [base("b1", 0.0), base("b2", 5.0)],
        [machine("m1", 2, 1.0), machine("m2", 2, 2.0), machine("m3", 2, 3.0)],
        [job("j", 1.0)],
    )
    edges = build_job_graph(inst, inst.jobs[0]).edges
    assert sum(1 for a, b, _, _ in edges if a == "J:j" and b.startswith("M:")) == 3
    assert sum(1 for a, b, _, _ in edges if a.startswith("M:") and b.startswith("R:")) == 6
    assert sum(1 for a, b, _, _ in edges if a.startswith("D:") and b == "J:j") == 2


def test_skipped_stage_is_bridged():
    inst = make_instance(
        [base("b", 0.0)], [machine("m", 2, 1.0)], [job("j", 4.0, skip=(2,))], skippable=(2,)
    )
    g = build_job_graph(inst, inst.jobs[0])
    assert ("J:j", "R:b") in [(a, b) for a, b, _, _ in g.edges]
    assert "M:m" not in g.nodes
    paths = find_disjoint_paths(g, 100.0).paths
    assert paths[0].nodes == ("b", "j", "b")


def test_skipping_receive_stage_has_no_route():
    with pytest.raises(InstanceError):
        make_instance([base("b", 0.0)], [machine("m", 2, 1.0)], [job("j", 0.0, skip=(3,))])
    inst = make_instance([base("b", 0.0)], [machine("m", 2, 1.0)], [job("j", 0.0)])
    with pytest.raises(PathError, match="no route"):
        effective_stages(inst, job("x", 0.0, skip=(3,)))


def test_single_route():
    inst = make_instance([base("b", 0.0)], [machine("m", 2, 3.0)], [job("j", 1.0)])
    found = find_disjoint_paths(build_job_graph(inst, inst.jobs[0]), 100.0, p_min=1)
    assert len(found.paths) == 1
    assert found.warning is None
    p = found.paths[0]
    assert p.nodes == ("b", "j", "m", "b")
    assert p.energy == 1.0 + 2.0 + 3.0


def test_parallel_machines_energy_order():
    # base and job at the origin: route energies 2*5 = 10 and 2*6 = 12
    inst = make_instance([base("b", 0.0)], [machine("m2", 2, 6.0), machine("m1", 2, 5.0)], [job("j", 0.0)])
    found = find_disjoint_paths(build_job_graph(inst, inst.jobs[0]), 100.0, p_max=2)
    assert [p.nodes for p in found.paths] == [("b", "j", "m1", "b"), ("b", "j", "m2", "b")]
    assert [p.energy for p in found.paths] == [10.0, 12.0]


def test_energy_budget_is_strict():
    inst = make_instance([base("b", 0.0)], [machine("m", 2, 5.0)], [job("j", 0.0)])
    g = build_job_graph(inst, inst.jobs[0])
    found = find_disjoint_paths(g, 10.0)
    assert found.paths == []
    assert "j" in found.warning and "does not exist" in found.warning
    assert len(find_disjoint_paths(g, 10.000001).paths) == 1


def test_too_few_paths_warns():
    inst = make_instance([base("b", 0.0)], [machine("m", 2, 5.0)], [job("j", 0.0)])
    found = find_disjoint_paths(build_job_graph(inst, inst.jobs[0]), 100.0, p_min=2)
    assert len(found.paths) == 1
    assert "only 1 of 2" in found.warning


def test_shortest_path_respects_removed_nodes():
    inst = make_instance([base("b", 0.0)], [machine("m1", 2, 5.0), machine("m2", 2, 6.0)], [job("j", 0.0)])
    g = build_job_graph(inst, inst.jobs[0])
    e, _, seq = shortest_path(g, frozenset({"M:m1"}))
    assert "M:m2" in seq and e == 12.0
    assert shortest_path(g, frozenset({"M:m1", "M:m2"})) is None


def test_energy_tie_goes_to_fewer_ticks():
    # m1 and m2 are equally far in energy, but m2 is reached faster via an override
    from ffsched.instance import TransportOverride

    inst = make_instance(
        [base("b", 0.0)],
        [machine("m1", 2, 0.0, 5.0), machine("m2", 2, 0.0, -5.0)],
        [job("j", 0.0)],
        overrides=[TransportOverride("j", "m2", 1, 5.0)],
    )
    first = find_disjoint_paths(build_job_graph(inst, inst.jobs[0]), 100.0, p_max=1).paths[0]
    assert first.nodes[2] == "m2"


class TestRelocation:
    def test_pair_in_range(self):
        inst = make_instance([base("b1", 0.0), base("b2", 10.0)], [machine("m", 2, 1.0)], [job("j", 0.0)])
        paths = relocation_paths(inst, 50.0)
        assert sorted(p.nodes for p in paths) == [("b1", "b2"), ("b2", "b1")]
        assert all(p.is_relocation and p.energy == 10.0 for p in paths)

    def test_pair_out_of_range(self):
        inst = make_instance([base("b1", 0.0), base("b2", 10.0)], [machine("m", 2, 1.0)], [job("j", 0.0)])
        assert relocation_paths(inst, 10.0) == []

    def test_isolated_base(self):
        inst = make_instance(
            [base("b1", 0.0), base("b2", 3.0), base("far", 500.0)], [machine("m", 2, 1.0)], [job("j", 0.0)]
        )
        assert sorted(p.nodes for p in relocation_paths(inst, 100.0)) == [("b1", "b2"), ("b2", "b1")]


@st.composite
def small_instances(draw):
    n_bases = draw(st.integers(1, 3))
    stage_sizes = draw(st.lists(st.integers(1, 3), min_size=1, max_size=2))
    pos = st.floats(0, 100).map(lambda v: round(v, 2))
    bases = [base(f"b{i}", draw(pos), draw(pos)) for i in range(n_bases)]
    machines = []
    for s, n in enumerate(stage_sizes):
        machines += [machine(f"m{s}_{i}", 2 + s, draw(pos), draw(pos)) for i in range(n)]
    e_max = draw(st.floats(50, 800))
    return make_instance(bases, machines, [job("j", draw(pos), draw(pos))], e_max=e_max)


@settings(max_examples=100, deadline=None)
@given(small_instances(), st.sampled_from([None, 1, 2, 4]))
def test_first_path_optimal_and_paths_disjoint(inst, p_max):
    j = inst.jobs[0]
    routes = enumerate_routes(inst, j)
    assert len(routes) <= 200
    feasible = [r for r in routes if r[0] < inst.transporter.e_max]
    found = find_disjoint_paths(build_job_graph(inst, j), inst.transporter.e_max, p_max=p_max)
    if not feasible:
        assert found.paths == []
        return
    assert found.paths
    assert found.paths[0].energy == min(e for e, _ in feasible)
    energies = dict((ids, e) for e, ids in routes)
    for p in found.paths:
        assert p.nodes in energies
        assert p.energy < inst.transporter.e_max
    for a in range(len(found.paths)):
        for b in range(a + 1, len(found.paths)):
            assert found.paths[a].nodes != found.paths[b].nodes
    # determinism
    again = find_disjoint_paths(build_job_graph(inst, j), inst.transporter.e_max, p_max=p_max)
    assert again == found


def plain_scan(graph, e_max, p_max):
    """Reference elimination: walk the whole lexicographic product every round."""
    found = []
    while len(found) < p_max:
        seen = {lab[2] for lab in found}
        pools = [[k for k in lab[2] if k not in (START, END) and not k.startswith("J:")] for lab in found]
        nxt = None
        for point in itertools.product(*pools):
            lab = shortest_path(graph, frozenset(point))
            if lab is not None and lab[0] < e_max and lab[2] not in seen:
                nxt = lab
                break
        if nxt is None:
            break
        found.append(nxt)
    return [lab[2][1:-1] for lab in found]


@settings(max_examples=100, deadline=None)
@given(small_instances(), st.integers(1, 4))
def test_pruned_search_matches_plain_scan(inst, p_max):
    g = build_job_graph(inst, inst.jobs[0])
    got = find_disjoint_paths(g, inst.transporter.e_max, p_max=p_max).paths
    want = plain_scan(g, inst.transporter.e_max, p_max)
    assert [tuple(p.nodes) for p in got] == [tuple(k.split(":", 1)[1] for k in seq) for seq in want]
