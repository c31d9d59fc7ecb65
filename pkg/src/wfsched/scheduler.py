"""Greedy budget-constrained list scheduling, HEFT, and schedule checking."""

from __future__ import annotations

import bisect
import csv
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .budget import BudgetPlan, round_half_up
from .dag import ExtendedDag, JobId, WorkflowDag, id_key
from .platform import VmCatalog, VmInstance, eligible_types, running_time
from .ranking import UnschedulableJob, plain_upward_rank, priority_list


class SchedulingError(RuntimeError):
    pass


def earliest_start(intervals: Sequence[tuple[int, int]], ready: int, duration: int) -> int:
    """Smallest t >= ready such that [t, t + duration) avoids every busy interval.

    ``intervals`` must be sorted and non-overlapping.
    """
    t = ready
    # skip intervals that end before we could start
    i = bisect.bisect_right(intervals, (ready, float("inf")))
    if i > 0 and intervals[i - 1][1] > t:
        t = intervals[i - 1][1]
    for s, f in intervals[i:]:
        if t + duration <= s:
            break
        t = max(t, f)
    return t


class Timeline:
    """Busy intervals per VM instance; one job per instance per slot."""

    def __init__(self):
        self.busy: dict[str, list[tuple[int, int]]] = {}

    def intervals(self, instance_id: str) -> list[tuple[int, int]]:
        return self.busy.get(instance_id, [])

    def is_idle(self, instance_id: str) -> bool:
        return not self.busy.get(instance_id)

    def earliest_start(self, instance_id: str, ready: int, duration: int) -> int:
        return earliest_start(self.intervals(instance_id), ready, duration)

    def reserve(self, instance_id: str, start: int, finish: int) -> None:
        if finish <= start:
            raise SchedulingError(f"empty interval [{start}, {finish})")
        lst = self.busy.setdefault(instance_id, [])
        i = bisect.bisect_left(lst, (start, finish))
        if (i > 0 and lst[i - 1][1] > start) or (i < len(lst) and lst[i][0] < finish):
            raise SchedulingError(f"overlap on {instance_id} at [{start}, {finish})")
        lst.insert(i, (start, finish))


@dataclass(frozen=True)
class Assignment:
    job: JobId
    vm: str
    vm_type: str
    start: int
    finish: int
    cost: Fraction
    budget: Fraction | None = None  # reserve + remaining balance when placed

    @property
    def saved(self) -> Fraction | None:
        return None if self.budget is None else self.budget - self.cost


@dataclass
class Schedule:
    assignments: dict[JobId, Assignment] = field(default_factory=dict)
    algorithm: str = ""

    @property
    def makespan(self) -> int:
        return max((a.finish for a in self.assignments.values()), default=0)

    @property
    def total_cost(self) -> Fraction:
        return sum((a.cost for a in self.assignments.values()), Fraction(0))

    def __getitem__(self, job_id) -> Assignment:
        return self.assignments[job_id]

    def __len__(self):
        return len(self.assignments)

    def __eq__(self, other):
        if not isinstance(other, Schedule):
            return NotImplemented
        return self.assignments == other.assignments

    def rows(self) -> list[dict]:
        """Table rows in placement order: job, budget, cost, saved, start, finish, vm."""
        out = []
        for a in self.assignments.values():
            out.append({
                "job": a.job,
                "budget": "" if a.budget is None else round_half_up(a.budget),
                "cost": _num(a.cost),
                "saved": "" if a.saved is None else round_half_up(a.saved),
                "start": a.start,
                "finish": a.finish,
                "vm": a.vm,
            })
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, ["job", "budget", "cost", "saved", "start", "finish", "vm"],
                           lineterminator="\n")
        w.writeheader()
        w.writerows(self.rows())
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {"algorithm": self.algorithm, "makespan": self.makespan,
               "total_cost": _num(self.total_cost),
               "assignments": [{**r, "job": str(r["job"])} for r in self.rows()]}
        return json.dumps(doc, indent=2)


def _num(x):
    x = Fraction(x)
    return x.numerator if x.denominator == 1 else float(x)


def _base(dag) -> WorkflowDag:
    return dag.base if isinstance(dag, ExtendedDag) else dag


class _Placer:
    """Shared machinery: ready times and per-type candidate instances."""

    def __init__(self, dag, catalog: VmCatalog):
        self.g = _base(dag)
        self.catalog = catalog
        self.timeline = Timeline()
        self.finish: dict[JobId, int] = {}
        self.schedule = Schedule()

    def ready(self, job_id) -> int:
        t = 0
        for p in self.g._pred[job_id]:
            if self.g.jobs[p].is_pseudo:
                continue
            if p not in self.finish:
                raise SchedulingError(f"{job_id!r} placed before its predecessor {p!r}")
            t = max(t, self.finish[p])
        return t

    def candidates(self, type_name: str) -> list[VmInstance]:
        """Busy instances of the type plus its first idle one (idle ones are equivalent)."""
        out = []
        for inst in self.catalog.instances_of(type_name):
            if self.timeline.is_idle(inst.id):
                out.append(inst)
                break
            out.append(inst)
        return out

    def place(self, job, inst: VmInstance, start: int, duration: int, cost, budget=None):
        self.timeline.reserve(inst.id, start, start + duration)
        self.finish[job.id] = start + duration
        a = Assignment(job.id, inst.id, inst.type.name, start, start + duration, cost, budget)
        self.schedule.assignments[job.id] = a
        return a


def schedule_greedy(dag, catalog: VmCatalog, plan: BudgetPlan, priorities: Iterable[JobId],
                    selection: str = "finish", algorithm: str = "") -> Schedule:
    """Place jobs in priority order on the best affordable eligible VM.

    Affordable means cost <= reserve + remaining balance. ``selection``
    picks among affordable instances: ``"finish"`` takes the earliest
    finish time, ``"runtime"`` the smallest running time (earliest start
    among instances of that type). Ties go to the cheaper VM, then to the
    lower instance position.
    """
    if selection not in ("finish", "runtime"):
        raise ValueError(f"unknown selection rule {selection!r}")
    pl = _Placer(dag, catalog)
    pl.schedule.algorithm = algorithm
    for job_id in priorities:
        job = pl.g.jobs[job_id]
        if job.is_pseudo:
            continue
        types = eligible_types(job, catalog)
        if not types:
            raise UnschedulableJob(f"job {job_id!r} fits no VM type in the pool")
        ready = pl.ready(job_id)
        avail = plan.available(job_id)
        best = None
        for t in types:
            dur = running_time(job, t)
            cost = t.price * dur
            if cost > avail:
                continue
            if best is not None:
                if selection == "finish" and ready + dur > best[0][0]:
                    continue
                if selection == "runtime" and dur > best[0][0]:
                    continue
            for inst in pl.candidates(t.name):
                start = pl.timeline.earliest_start(inst.id, ready, dur)
                pos = catalog.index[inst.id]
                if selection == "finish":
                    key = (start + dur, cost, pos)
                else:
                    key = (dur, cost, start, pos)
                if best is None or key < best[0]:
                    best = (key, inst, start, dur, cost)
        if best is None:
            raise SchedulingError(f"no affordable VM for job {job_id!r} "
                                  f"(available {float(avail):g})")
        _, inst, start, dur, cost = best
        pl.place(job, inst, start, dur, cost, budget=avail)
        plan.consume(job_id, cost)
    return pl.schedule


def schedule_heft(dag, catalog: VmCatalog, whole_slots: bool = True) -> Schedule:
    """Cost-oblivious HEFT: plain upward-rank order, earliest-finish instance."""
    g = _base(dag)
    order = priority_list(plain_upward_rank(g, catalog, whole_slots), g)
    pl = _Placer(g, catalog)
    pl.schedule.algorithm = "heft"
    for job_id in order:
        job = g.jobs[job_id]
        types = eligible_types(job, catalog)
        if not types:
            raise UnschedulableJob(f"job {job_id!r} fits no VM type in the pool")
        ready = pl.ready(job_id)
        best = None
        for t in types:
            dur = running_time(job, t)
            if best is not None and ready + dur > best[0][0]:
                continue
            for inst in pl.candidates(t.name):
                start = pl.timeline.earliest_start(inst.id, ready, dur)
                key = (start + dur, catalog.index[inst.id])
                if best is None or key < best[0]:
                    best = (key, inst, start, dur, t.price * dur)
        _, inst, start, dur, cost = best
        pl.place(job, inst, start, dur, cost)
    return pl.schedule


@dataclass
class Violation:
    check: str
    message: str


@dataclass
class ScheduleReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def by_check(self, check: str) -> list[Violation]:
        return [v for v in self.violations if v.check == check]

    def add(self, check, message):
        self.violations.append(Violation(check, message))


def validate_schedule(schedule: Schedule, dag, catalog: VmCatalog, budget=None) -> ScheduleReport:
    """Check a schedule against every constraint of the integer model.

    Checks: one assignment per real job, CPU/memory eligibility, running
    time consistency, precedence, one job per instance per slot, makespan,
    and (when ``budget`` is given) total cost.
    """
    g = _base(dag)
    rep = ScheduleReport()
    real = {j.id for j in g.real_jobs}
    got = set(schedule.assignments)
    for j in sorted(real - got, key=id_key):
        rep.add("assignment", f"job {j!r} is not scheduled")
    for j in sorted(got - real, key=id_key):
        rep.add("assignment", f"unknown or pseudo job {j!r} is scheduled")
    by_vm: dict[str, list[Assignment]] = {}
    for j, a in schedule.assignments.items():
        if j not in real:
            continue
        job = g.jobs[j]
        if a.vm not in catalog.index:
            rep.add("assignment", f"job {j!r} on unknown instance {a.vm!r}")
            continue
        vt = catalog.instance(a.vm).type
        if vt.vcpus < job.cpu:
            rep.add("cpu", f"job {j!r} needs {job.cpu} vCPU, {a.vm} has {vt.vcpus}")
        if vt.mem < job.mem:
            rep.add("memory", f"job {j!r} needs {job.mem} GiB, {a.vm} has {vt.mem}")
        dur = running_time(job, vt)
        if a.finish - a.start != dur or a.start < 0:
            rep.add("runtime", f"job {j!r} occupies [{a.start},{a.finish}) but needs {dur} slots")
        if a.cost != vt.price * dur:
            rep.add("cost", f"job {j!r} charged {a.cost}, expected {vt.price * dur}")
        by_vm.setdefault(a.vm, []).append(a)
    for a_id, b_id in g.edges:
        if a_id in schedule.assignments and b_id in schedule.assignments:
            a, b = schedule.assignments[a_id], schedule.assignments[b_id]
            if b.start < a.finish:
                rep.add("precedence", f"{b_id!r} starts at {b.start} before {a_id!r} finishes at {a.finish}")
    for vm, lst in by_vm.items():
        lst.sort(key=lambda a: (a.start, a.finish))
        for x, y in zip(lst, lst[1:]):
            if y.start < x.finish:
                rep.add("exclusive", f"{x.job!r} and {y.job!r} overlap on {vm}")
    finishes = [a.finish for j, a in schedule.assignments.items() if j in real]
    if finishes and schedule.makespan != max(finishes):
        rep.add("makespan", f"makespan {schedule.makespan} != last finish {max(finishes)}")
    if budget is not None and schedule.total_cost > Fraction(budget):
        rep.add("budget", f"total cost {float(schedule.total_cost):g} exceeds budget {float(Fraction(budget)):g}")
    return rep
