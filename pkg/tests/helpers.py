"""Small instance builders shared by the test modules."""

from __future__ import annotations

import itertools

from ffsched.instance import (
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


def base(id, x, y=0.0, stock=1, storage=None, pt=0):
    return Facility(
        id=id,
        stage=0,
        location=Location(x, y),
        processing_time=pt,
        initial_transporters=stock,
        storage_capacity=max(stock, 1) if storage is None else storage,
    )


def machine(id, stage, x, y=0.0, pt=0, capacity=1, attached=True):
    return Facility(id=id, stage=stage, location=Location(x, y), processing_time=pt, capacity=capacity, attached=attached)


def job(id, x, y=0.0, pt=0, due=None, skip=()):
    return Job(id=id, location=Location(x, y), processing_time=pt, due_time=due, skip_stages=tuple(skip))


def make_instance(
    bases,
    machines,
    jobs,
    *,
    e_max=1e9,
    speed=1.0,
    rate=1.0,
    dt=1.0,
    alpha=0.0,
    beta=1.0,
    k=1,
    zeta=0.0,
    skippable=(),
    overrides=(),
):
    n_machine_stages = max([m.stage for m in machines], default=1) - 1
    stages = [Stage(0, BASE_DISPATCH), Stage(1, JOB)]
    stages += [Stage(2 + i, MACHINE, (2 + i) in skippable) for i in range(n_machine_stages)]
    stages.append(Stage(len(stages), BASE_RECEIVE))
    return Instance(
        stages=tuple(stages),
        machines=tuple(machines),
        bases=tuple(bases),
        jobs=tuple(jobs),
        transporter=TransporterParams(e_max, speed, rate),
        weights=Weights(alpha, beta, k, zeta),
        delta_t=dt,
        transport_overrides=tuple(overrides),
    )


def enumerate_routes(instance, job_obj):
    """Every stage-ordered route of ``job_obj`` as (energy, ids)."""
    skip = set(job_obj.skip_stages)
    layers = []
    for st in instance.stages:
        if st.index in skip:
            continue
        if st.kind in (BASE_DISPATCH, BASE_RECEIVE):
            layers.append(list(instance.bases))
        elif st.kind == JOB:
            layers.append([job_obj])
        else:
            layers.append(list(instance.machines_at(st.index)))
    out = []
    for combo in itertools.product(*layers):
        # left-to-right sum, the same accumulation order as the label search
        e = 0.0
        for a, b in zip(combo, combo[1:]):
            e += instance.transport_energy(a, b)
        out.append((e, tuple(o.id for o in combo)))
    return out
