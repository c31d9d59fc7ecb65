"""Experiment matrix: budget levels x VM sufficiency x algorithms, with AR ranking."""

from __future__ import annotations

import csv
import io
import time
import zlib
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .budget import PHI_GRID, SPLITTERS, budget_levels
from .mip import ORACLE_MAX_HORIZON, InstanceTooLarge, solve_bruteforce
from .platform import VmCatalog, fits, running_time
from .ranking import priorities
from .scheduler import schedule_greedy, schedule_heft, validate_schedule
from .workloads import SUFFICIENCY, ec2_types, example_catalog, gen_vm_pool, make_workload, workload_kind

# name -> (priority scheme, budget splitter); "oracle" is handled separately
GREEDY = {
    "plain-uniform": ("plain", "uniform"),
    "weighted-uniform": ("weighted", "uniform"),
    "plain-proportional": ("plain", "proportional"),
    "weighted-proportional": ("weighted", "proportional"),
}
ALGORITHMS = (*GREEDY, "oracle")
DEFAULT_ALGORITHMS = tuple(GREEDY)

CSV_COLUMNS = ("workload", "kind", "jobs", "sufficiency", "phi", "budget", "algorithm",
               "status", "makespan", "normalized", "cost", "rank")

TIE_NOTE = "ties share the best rank they cover; the following ranks are skipped"


@dataclass(frozen=True)
class ExperimentSpec:
    workloads: tuple[str, ...]
    sufficiencies: tuple[str, ...] = tuple(SUFFICIENCY)
    phis: tuple[Fraction, ...] = PHI_GRID
    algorithms: tuple[str, ...] = DEFAULT_ALGORITHMS
    seed: int = 0
    budget: Fraction | None = None  # fixed budget instead of the phi grid

    def __post_init__(self):
        object.__setattr__(self, "phis", tuple(Fraction(p) for p in self.phis))
        for p in self.phis:
            if p not in PHI_GRID:
                raise ValueError(f"phi {p} is not on the grid {[float(x) for x in PHI_GRID]}")
        for s in self.sufficiencies:
            if s not in SUFFICIENCY:
                raise ValueError(f"unknown sufficiency {s!r}")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise ValueError(f"unknown algorithm {a!r}; choose from {', '.join(ALGORITHMS)}")
        if not self.workloads:
            raise ValueError("no workloads given")


@dataclass
class Record:
    workload: str
    kind: str
    jobs: int
    sufficiency: str
    phi: Fraction | None
    budget: Fraction
    algorithm: str
    status: str  # ok | failed | skipped
    makespan: int | None = None
    cost: Fraction | None = None
    normalized: float | None = None
    rank: int | None = None
    runtime: float = 0.0
    message: str = ""

    @property
    def cell(self) -> tuple:
        return (self.workload, self.sufficiency, self.phi)


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    records: list[Record] = field(default_factory=list)

    def for_algorithm(self, name: str) -> list[Record]:
        return [r for r in self.records if r.algorithm == name]

    def rank_counts(self, kind: str | None = None) -> dict[str, list[int]]:
        n = len(self.spec.algorithms)
        counts = {a: [0] * n for a in self.spec.algorithms}
        for r in self.records:
            if r.rank is not None and (kind is None or r.kind == kind):
                counts[r.algorithm][r.rank - 1] += 1
        return counts

    def ar(self, kind: str | None = None) -> dict[str, Fraction]:
        out = {}
        for a, c in self.rank_counts(kind).items():
            if sum(c):
                out[a] = compute_ar(c, sum(c))
        return out

    def success_rate(self, name: str, kind: str | None = None) -> float:
        rs = [r for r in self.for_algorithm(name)
              if r.status != "skipped" and (kind is None or r.kind == kind)]
        return sum(r.status == "ok" for r in rs) / len(rs) if rs else 0.0

    def series(self, name: str) -> dict[tuple, list[Record]]:
        """Records of one algorithm grouped by (workload, sufficiency), ordered by phi."""
        out = defaultdict(list)
        for r in self.for_algorithm(name):
            out[r.workload, r.sufficiency].append(r)
        for v in out.values():
            v.sort(key=lambda r: r.phi if r.phi is not None else 0)
        return dict(out)

    def monotone_fraction(self, name: str) -> float:
        """Share of series whose makespan never rises as phi grows."""
        ok = total = 0
        for recs in self.series(name).values():
            spans = [r.makespan for r in recs if r.status == "ok"]
            total += 1
            ok += all(b <= a for a, b in zip(spans, spans[1:]))
        return ok / total if total else 1.0


def compute_ar(rank_counts: Sequence[int], n_cases: int) -> Fraction:
    """Average ranked value: sum of (i+1) * R_i over cases."""
    if n_cases <= 0:
        raise ValueError("n_cases must be positive")
    if any(c < 0 for c in rank_counts) or sum(rank_counts) > n_cases:
        raise ValueError("rank counts must be non-negative and sum to at most n_cases")
    return Fraction(sum((i + 1) * c for i, c in enumerate(rank_counts)), n_cases)


def pool_seed(seed: int, workload: str, sufficiency: str) -> int:
    return zlib.crc32(f"{seed}|{workload}|{sufficiency}".encode())


def _pool(desc: str, dag, sufficiency: str, seed: int) -> VmCatalog:
    if desc == "example":
        return example_catalog()
    return gen_vm_pool(ec2_types(), len(dag.real_jobs), sufficiency, pool_seed(seed, desc, sufficiency))


def _oracle_horizon(dag, pool) -> int | None:
    # any semi-active schedule finishes within the sum of worst runtimes
    total = 0
    for job in dag.real_jobs:
        total += max(running_time(job, i.type) for i in pool.instances if fits(job, i.type))
    return total if total <= ORACLE_MAX_HORIZON else None


def rank_cell(recs: list[Record]) -> None:
    """Competition ranking by makespan; failures share the rank after all successes."""
    done = [r for r in recs if r.status == "ok"]
    best = min((r.makespan for r in done), default=None)
    for r in done:
        r.rank = 1 + sum(o.makespan < r.makespan for o in done)
        r.normalized = r.makespan / best if best else 1.0
    for r in recs:
        if r.status == "failed":
            r.rank = 1 + len(done)


def _run_group(spec: ExperimentSpec, desc: str, sufficiency: str) -> list[Record]:
    dag = make_workload(desc, seed=spec.seed)
    kind, n = workload_kind(dag), len(dag.real_jobs)
    pool = _pool(desc, dag, sufficiency, spec.seed)
    levels = budget_levels(dag, pool, schedule_heft(dag, pool))
    prio = {}
    cells = [(None, spec.budget)] if spec.budget is not None else [(p, levels.at(p)) for p in spec.phis]
    out = []
    for phi, budget in cells:
        recs = []
        for alg in spec.algorithms:
            rec = Record(desc, kind, n, sufficiency, phi, Fraction(budget), alg, "ok")
            t0 = time.perf_counter()
            try:
                if alg == "oracle":
                    horizon = _oracle_horizon(dag, pool)
                    if horizon is None:
                        raise InstanceTooLarge("cell too large for the oracle")
                    sched = solve_bruteforce(dag, pool, budget, horizon)
                else:
                    scheme, split = GREEDY[alg]
                    if scheme not in prio:
                        prio[scheme] = priorities(dag, pool, scheme)
                    plan = SPLITTERS[split](dag, pool, budget)
                    sched = schedule_greedy(dag, pool, plan, prio[scheme], algorithm=alg)
                rep = validate_schedule(sched, dag, pool, budget)
                if rep.ok:
                    rec.makespan, rec.cost = sched.makespan, sched.total_cost
                else:
                    rec.status = "failed"
                    rec.message = "; ".join(v.message for v in rep.violations[:3])
            except InstanceTooLarge as e:
                rec.status, rec.message = "skipped", str(e)
            except Exception as e:  # a failing cell never aborts the matrix
                rec.status, rec.message = "failed", f"{type(e).__name__}: {e}"
            rec.runtime = time.perf_counter() - t0
            recs.append(rec)
        rank_cell(recs)
        out.extend(recs)
    return out


def run_matrix(spec: ExperimentSpec, workers: int = 1) -> ExperimentResult:
    """Run every (workload, sufficiency, phi, algorithm) cell of ``spec``.

    Groups sharing a workload and sufficiency reuse one VM pool and one HEFT
    run. With ``workers > 1`` the groups run in separate processes; output
    order does not depend on completion order.
    """
    groups = [(d, s) for d in spec.workloads for s in spec.sufficiencies]
    if workers > 1 and len(groups) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_run_group, [spec] * len(groups), *zip(*groups)))
    else:
        parts = [_run_group(spec, d, s) for d, s in groups]
    return ExperimentResult(spec, [r for p in parts for r in p])


def _f(x) -> str:
    return "" if x is None else f"{float(x):.6f}"


def to_csv(result: ExperimentResult) -> str:
    """One row per cell and algorithm. Wall-clock time is left out so reruns match byte for byte."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in result.records:
        w.writerow([r.workload, r.kind, r.jobs, r.sufficiency, _f(r.phi), _f(r.budget), r.algorithm,
                    r.status, "" if r.makespan is None else r.makespan, _f(r.normalized),
                    _f(r.cost), "" if r.rank is None else r.rank])
    return buf.getvalue()


def to_text(result: ExperimentResult) -> str:
    kinds = list(dict.fromkeys(r.kind for r in result.records))
    n = len(result.spec.algorithms)
    lines = [f"rank rule: {TIE_NOTE}", ""]
    for kind in kinds + (["all"] if len(kinds) > 1 else []):
        k = None if kind == "all" else kind
        counts = result.rank_counts(k)
        ars = result.ar(k)
        head = f"{'algorithm':<24}" + "".join(f"{'R' + str(i + 1):>6}" for i in range(n))
        head += f"{'cases':>7}{'AR':>8}{'success':>9}"
        lines += [f"== {kind} ==", head]
        rows = sorted(ars, key=lambda a: (ars[a], a))
        rows += [a for a in result.spec.algorithms if a not in ars]
        for a in rows:
            c = counts[a]
            ar = f"{float(ars[a]):.2f}" if a in ars else "-"
            lines.append(f"{a:<24}" + "".join(f"{x:>6}" for x in c)
                         + f"{sum(c):>7}{ar:>8}{result.success_rate(a, k):>9.2f}")
        lines.append("")
    return "\n".join(lines)


def report(result: ExperimentResult, format: str = "csv") -> str:
    if format == "csv":
        return to_csv(result)
    if format == "text":
        return to_text(result)
    raise ValueError(f"unknown report format {format!r}")
