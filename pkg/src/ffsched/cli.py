"""Command line entry point: gen, solve, validate, bench."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import bench
from .instance import InstanceError, Weights, load_instance, save_instance
from .segmenter import (
    OptimizerConfig,
    ScheduleFormatError,
    UnschedulableError,
    dumps_schedule,
    load_schedule,
    run,
)
from .validate import dumps_report, validate

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("ffsched")


class UsageError(Exception):
    pass


def _n_clusters(text: str):
    if text == "auto":
        return "auto"
    try:
        k = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a positive integer or 'auto'") from None
    if k < 1:
        raise argparse.ArgumentTypeError("expected a positive integer or 'auto'")
    return k


def _p_max(text: str):
    if text in ("inf", "none"):
        return None
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected an integer or 'inf'") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _seeds(text: str) -> list[int]:
    # "15" means seeds 0..14, "3,7,9" lists them
    if "," in text:
        return _int_list(text)
    return list(range(int(text)))


def _load(path):
    try:
        return load_instance(path)
    except FileNotFoundError:
        raise UsageError(f"{path}: no such file") from None
    except InstanceError as e:
        raise UsageError(f"{path}: {e}") from None


def cmd_gen(args) -> int:
    spec = bench.GenSpec(
        n_jobs=args.jobs,
        n_bases=args.bases,
        n_labs=args.labs,
        area_size=args.area,
        seed=args.seed,
    )
    try:
        inst = bench.gen_instance(spec)
    except ValueError as e:
        raise UsageError(str(e)) from None
    except bench.GenerationError as e:
        log.error("%s", e)
        return EXIT_FAIL
    save_instance(inst, args.out)
    print(f"wrote {args.out}: {len(inst.jobs)} jobs, {len(inst.bases)} bases, {len(inst.machines)} labs, "
          f"e_max {inst.transporter.e_max:g}")
    return EXIT_OK


def _override(inst, args):
    w = inst.weights
    weights = Weights(
        alpha=w.alpha if args.alpha is None else args.alpha,
        beta=w.beta if args.beta is None else args.beta,
        k_exponent=w.k_exponent if args.k_exp is None else args.k_exp,
        zeta=w.zeta if args.zeta is None else args.zeta,
    )
    try:
        return replace(inst, weights=weights, delta_t=inst.delta_t if args.dt is None else args.dt)
    except InstanceError as e:
        raise UsageError(str(e)) from None


def cmd_solve(args) -> int:
    inst = _override(_load(args.instance), args)
    try:
        cfg = OptimizerConfig(
            n_select=args.ns,
            n_clusters=args.nc,
            tau_h=args.tau_h,
            gamma=args.gamma,
            p_min=args.pmin,
            p_max=args.pmax,
            dispatch_stride=args.dispatch_stride,
            max_stall_retries=args.retries,
            rng_seed=args.seed,
            backend=args.backend,
        )
    except ValueError as e:
        raise UsageError(str(e)) from None
    out = Path(args.out)
    log_path = Path(args.log) if args.log else out.with_suffix(".log.jsonl")
    status = EXIT_OK
    t0 = time.perf_counter()
    with open(log_path, "w", encoding="utf-8") as fh:
        try:
            sched = run(inst, cfg, run_log=fh)
        except UnschedulableError as e:
            log.error("%s", e)
            sched = e.schedule
            status = EXIT_FAIL
    out.write_text(dumps_schedule(sched, inst), encoding="utf-8")
    print(f"wrote {out}: {len(sched.accepted)} assignments, makespan {sched.makespan}, "
          f"objective {sched.objective(inst):.6g}, {time.perf_counter() - t0:.2f}s")
    if not args.no_validate:
        violations = validate(inst, sched, complete=status == EXIT_OK)
        if violations:
            for v in violations:
                log.error("violation: %s", v)
            return EXIT_FAIL
    return status


def cmd_validate(args) -> int:
    inst = _load(args.instance)
    try:
        sched = load_schedule(args.schedule, inst)
    except FileNotFoundError:
        raise UsageError(f"{args.schedule}: no such file") from None
    except ScheduleFormatError as e:
        raise UsageError(f"{args.schedule}: {e}") from None
    violations = validate(inst, sched)
    text = dumps_report(violations)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    for v in violations:
        where = "" if v.tick is None else f" at tick {v.tick}" + ("" if v.until in (None, v.tick) else f"-{v.until}")
        print(f"{v.constraint}{where}: {v.detail}", file=sys.stderr)
    return EXIT_OK if not violations else EXIT_FAIL


def cmd_bench(args) -> int:
    fn = bench.EXPERIMENTS[args.experiment][0]
    cfg = replace(bench.BENCH_CONFIG, tau_h=args.tau_h, p_max=args.pmax, backend=args.backend)
    gen = {"n_bases": args.bases, "n_labs": args.labs, "area_size": args.area}
    if args.experiment == "runtime-vs-jobs":
        rows, summary = fn(args.seeds, args.job_counts, n_select=args.ns, config=cfg, workers=args.workers, **gen)
        grid = {"seeds": args.seeds, "job_counts": args.job_counts, "n_select": args.ns}
    else:
        rows, summary = fn(args.seeds, args.ns_values, n_jobs=args.jobs, config=cfg, workers=args.workers, **gen)
        grid = {"seeds": args.seeds, "ns_values": args.ns_values, "n_jobs": args.jobs}
    manifest = bench.manifest_for(args.experiment, cfg, gen, **grid)
    paths = bench.write_outputs(args.experiment, rows, summary, manifest, args.out)
    print(json.dumps(summary))
    for p in paths.values():
        print(f"wrote {p}")
    bad = [r for r in rows if not r["feasible"] or r["unscheduled"]]
    return EXIT_OK if not bad else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ffsched", description="Rolling-horizon scheduler for transporter-served flow shops.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a seeded random instance")
    g.add_argument("--jobs", type=int, default=100)
    g.add_argument("--bases", type=int, default=10)
    g.add_argument("--labs", type=int, default=10)
    g.add_argument("--area", type=float, default=2000.0, help="side of the square area in meters")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="schedule an instance")
    s.add_argument("--instance", required=True)
    s.add_argument("--ns", type=int, default=5, help="jobs per segment")
    s.add_argument("--nc", type=_n_clusters, default="auto", help="number of clusters or 'auto'")
    s.add_argument("--tau-h", type=int, default=10, help="window length in ticks")
    s.add_argument("--gamma", type=float, default=1.0, help="look-back fraction of tau-h")
    s.add_argument("--alpha", type=float, help="override the energy weight")
    s.add_argument("--beta", type=float, help="override the finish-time weight")
    s.add_argument("--k-exp", type=int, help="override the finish-time exponent")
    s.add_argument("--zeta", type=float, help="override the due-time weight")
    s.add_argument("--dt", type=float, help="override the tick length in seconds")
    s.add_argument("--pmin", type=int, default=1)
    s.add_argument("--pmax", type=_p_max, default=3, help="max disjoint paths per job, or 'inf'")
    s.add_argument("--dispatch-stride", type=int, default=1)
    s.add_argument("--retries", type=int, default=3, help="window extensions before giving up on a segment")
    s.add_argument("--backend", choices=["highs", "bnb"], default="highs")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--log", help="run log path (default: <out>.log.jsonl)")
    s.add_argument("--no-validate", action="store_true")
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("validate", help="check a schedule file")
    v.add_argument("--instance", required=True)
    v.add_argument("--schedule", required=True)
    v.add_argument("--out", help="report path (default: stdout)")
    v.set_defaults(func=cmd_validate)

    b = sub.add_parser("bench", help="run a scaling experiment")
    b.add_argument("experiment", choices=sorted(bench.EXPERIMENTS))
    b.add_argument("--seeds", type=_seeds, default=list(range(15)), help="count, or comma-separated list")
    b.add_argument("--job-counts", type=_int_list, default=[20, 40, 60, 80, 100])
    b.add_argument("--ns-values", type=_int_list, default=[1, 3, 5, 7, 10])
    b.add_argument("--jobs", type=int, default=100)
    b.add_argument("--ns", type=int, default=5)
    b.add_argument("--bases", type=int, default=10)
    b.add_argument("--labs", type=int, default=10)
    b.add_argument("--area", type=float, default=2000.0)
    b.add_argument("--tau-h", type=int, default=bench.BENCH_CONFIG.tau_h)
    b.add_argument("--pmax", type=_p_max, default=bench.BENCH_CONFIG.p_max)
    b.add_argument("--backend", choices=["highs", "bnb"], default="highs")
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--out", default="bench-out")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
