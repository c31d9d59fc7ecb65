"""Command-line entry point: ``wfsched {gen,schedule,bench,export-mip,oracle}``."""

from __future__ import annotations

import argparse
import os
import sys
from fractions import Fraction

from . import bench
from .budget import PHI_GRID, SPLITTERS, budget_levels
from .mip import build_model, export_lp, solve_bruteforce
from .ranking import priorities
from .scheduler import schedule_greedy, validate_schedule
from .workloads import (SUFFICIENCY, ec2_types, example_catalog, gen_vm_pool, load_catalog,
                        make_workload, save_catalog, save_workflow)


def _workflow(arg: str, seed: int):
    """A descriptor (fft:16, example, ...) or a path to a workflow JSON / DAX file."""
    if os.path.exists(arg):
        kind = "dax" if arg.lower().endswith((".xml", ".dax")) else "file"
        return make_workload(f"{kind}:{arg}", seed)
    return make_workload(arg, seed)


def _catalog(args, dag):
    if args.catalog:
        with open(args.catalog, encoding="utf-8") as fh:
            return load_catalog(fh.read())
    if args.workflow == "example":
        return example_catalog()
    return gen_vm_pool(ec2_types(), len(dag.real_jobs), args.sufficiency,
                       bench.pool_seed(args.seed, args.workflow, args.sufficiency))


def _budget(args, dag, catalog) -> Fraction:
    if args.budget is not None:
        return Fraction(args.budget)
    return budget_levels(dag, catalog).at(Fraction(args.phi))


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _add_instance_args(p, budget=True):
    p.add_argument("--workflow", required=True,
                   help="workload descriptor (example, fft:16, gaussian:36, random:61:0.2) or file path")
    p.add_argument("--catalog", help="VM catalog JSON; default: a generated EC2 pool")
    p.add_argument("--sufficiency", choices=list(SUFFICIENCY), default="normal")
    p.add_argument("--seed", type=int, default=0)
    if budget:
        g = p.add_mutually_exclusive_group()
        g.add_argument("--budget", type=Fraction, help="absolute budget")
        g.add_argument("--phi", type=Fraction, default=Fraction(1, 2),
                       help="budget level between cheapest (0) and HEFT cost (1)")
    p.add_argument("--out", help="output file (default stdout)")


def _csv_list(s: str) -> list[str]:
    return [x.strip() for x in s.split(",") if x.strip()]


def cmd_gen(args) -> int:
    dag = _workflow(args.workload, args.seed)
    _emit(save_workflow(dag), args.out)
    if args.pool:
        pool = gen_vm_pool(ec2_types(), len(dag.real_jobs), args.pool,
                           bench.pool_seed(args.seed, args.workload, args.pool))
        _emit(save_catalog(pool), args.pool_out)
    return 0


def cmd_schedule(args) -> int:
    dag = _workflow(args.workflow, args.seed)
    cat = _catalog(args, dag)
    D = _budget(args, dag, cat)
    plan = SPLITTERS[args.split](dag, cat, D)
    sched = schedule_greedy(dag, cat, plan, priorities(dag, cat, args.priority),
                            selection=args.selection, algorithm=f"{args.priority}-{args.split}")
    rep = validate_schedule(sched, dag, cat, D)
    if not rep.ok:
        for v in rep.violations:
            print(f"error: {v.check}: {v.message}", file=sys.stderr)
        return 1
    _emit(sched.to_json() if args.format == "json" else sched.to_csv(), args.out)
    print(f"budget {float(D):.6g}  cost {float(sched.total_cost):.6g}  makespan {sched.makespan}",
          file=sys.stderr)
    return 0


def cmd_bench(args) -> int:
    spec = bench.ExperimentSpec(
        workloads=tuple(_csv_list(args.workload_set)),
        sufficiencies=tuple(_csv_list(args.sufficiency)),
        phis=tuple(Fraction(p) for p in _csv_list(args.phi_grid)),
        algorithms=tuple(_csv_list(args.algorithms)),
        seed=args.seed,
    )
    result = bench.run_matrix(spec, workers=args.workers)
    _emit(bench.to_csv(result), args.out)
    text = bench.to_text(result)
    if args.report:
        _emit(text, args.report)
    elif args.out:
        sys.stdout.write(text)
    return 0


def cmd_export_mip(args) -> int:
    dag = _workflow(args.workflow, args.seed)
    cat = _catalog(args, dag)
    model = build_model(dag, cat, _budget(args, dag, cat), args.horizon)
    _emit(export_lp(model), args.out)
    return 0


def cmd_oracle(args) -> int:
    dag = _workflow(args.workflow, args.seed)
    cat = _catalog(args, dag)
    sched = solve_bruteforce(dag, cat, _budget(args, dag, cat), args.horizon)
    _emit(sched.to_csv(), args.out)
    print(f"optimal makespan {sched.makespan}, cost {float(sched.total_cost):.6g}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wfsched", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a generated workload (and optionally a VM pool) as JSON")
    p.add_argument("workload", help="fft:M, gaussian:N, random:N[:density], example")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--pool", choices=list(SUFFICIENCY), help="also generate an EC2 pool")
    p.add_argument("--pool-out")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("schedule", help="schedule one workflow under a budget")
    _add_instance_args(p)
    p.add_argument("--priority", choices=["plain", "weighted"], default="weighted")
    p.add_argument("--split", choices=list(SPLITTERS), default="uniform")
    p.add_argument("--selection", choices=["finish", "runtime"], default="finish")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("bench", help="run the experiment matrix")
    p.add_argument("--workload-set", default="fft:16,gaussian:36")
    p.add_argument("--sufficiency", default=",".join(SUFFICIENCY))
    p.add_argument("--phi-grid", default=",".join(str(x) for x in PHI_GRID))
    p.add_argument("--algorithms", default=",".join(bench.DEFAULT_ALGORITHMS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.add_argument("--report", help="text AR report path")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("export-mip", help="write the integer model as CPLEX LP text")
    _add_instance_args(p)
    p.add_argument("--horizon", type=int, help="time slots (default: twice the HEFT makespan)")
    p.set_defaults(func=cmd_export_mip)

    p = sub.add_parser("oracle", help="exact minimum makespan for tiny instances")
    _add_instance_args(p)
    p.add_argument("--horizon", type=int, default=30)
    p.set_defaults(func=cmd_oracle)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        return 1
    except (ValueError, OSError, RuntimeError) as e:
        print(f"wfsched: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
