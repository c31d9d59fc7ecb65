"""Workflow DAGs, validation, and multi-workflow merging."""

from __future__ import annotations

import heapq
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Hashable, Iterable, Mapping, Sequence

JobId = Hashable

_DIGITS = re.compile(r"(\d+)")


class DagError(ValueError):
    """Raised for structurally invalid workflows."""


def id_key(job_id: JobId) -> tuple:
    """Sort key that orders ids naturally ("n2" before "n10")."""
    if isinstance(job_id, int):
        return ((1, job_id, ""),)
    parts = _DIGITS.split(str(job_id))
    return tuple((1, int(p), "") if p.isdigit() else (0, 0, p) for p in parts if p)


@dataclass(frozen=True, eq=True)
class Job:
    """A schedulable unit.

    ``work`` is the computation volume in vCPU-time-slots. ``runtimes``
    optionally pins the running time (in slots) per VM type name and then
    takes precedence over ``work / vcpus``.
    """

    id: JobId
    cpu: int = 0
    mem: Fraction = Fraction(0)
    work: Fraction = Fraction(0)
    is_pseudo: bool = False
    runtimes: Mapping[str, int] | None = field(default=None, compare=True)

    def __post_init__(self):
        if self.work < 0:
            raise DagError(f"job {self.id!r}: negative work {self.work}")
        if self.cpu < 0 or self.mem < 0:
            raise DagError(f"job {self.id!r}: negative resource requirement")
        if self.is_pseudo and (self.work or self.cpu or self.mem):
            raise DagError(f"pseudo job {self.id!r} must have zero work and requirements")

    @classmethod
    def pseudo(cls, job_id: JobId) -> "Job":
        return cls(job_id, is_pseudo=True)


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    cycle: list[JobId] | None = None

    @property
    def ok(self) -> bool:
        return not self.errors

    def __bool__(self) -> bool:
        return self.ok


class WorkflowDag:
    """Jobs plus precedence edges, stored as successor/predecessor lists.

    An edge ``(a, b)`` means ``b`` depends on ``a``: ``b`` may not start
    before ``a`` finishes.
    """

    def __init__(self, jobs: Iterable[Job], edges: Iterable[tuple[JobId, JobId]] = (),
                 name: str = "", meta: Mapping | None = None):
        self.name = name
        self.meta = dict(meta or {})
        self.jobs: dict[JobId, Job] = {}
        for job in jobs:
            if job.id in self.jobs:
                raise DagError(f"duplicate job id {job.id!r}")
            self.jobs[job.id] = job
        self.edges: list[tuple[JobId, JobId]] = []
        self._succ: dict[JobId, list[JobId]] = {j: [] for j in self.jobs}
        self._pred: dict[JobId, list[JobId]] = {j: [] for j in self.jobs}
        self._dangling: list[tuple[JobId, JobId]] = []
        seen = set()
        for a, b in edges:
            if (a, b) in seen:
                continue
            seen.add((a, b))
            self.edges.append((a, b))
            if a not in self.jobs or b not in self.jobs:
                self._dangling.append((a, b))
                continue
            self._succ[a].append(b)
            self._pred[b].append(a)
        for lst in (*self._succ.values(), *self._pred.values()):
            lst.sort(key=id_key)
        self._topo: list[JobId] | None = None

    def __len__(self) -> int:
        return len(self.jobs)

    def __contains__(self, job_id) -> bool:
        return job_id in self.jobs

    def __eq__(self, other) -> bool:
        if not isinstance(other, WorkflowDag):
            return NotImplemented
        return (list(self.jobs.values()) == list(other.jobs.values())
                and set(self.edges) == set(other.edges))

    def __repr__(self) -> str:
        return f"WorkflowDag({self.name!r}, jobs={len(self.jobs)}, edges={len(self.edges)})"

    @property
    def real_jobs(self) -> list[Job]:
        return [j for j in self.jobs.values() if not j.is_pseudo]

    def job(self, job_id: JobId) -> Job:
        try:
            return self.jobs[job_id]
        except KeyError:
            raise DagError(f"unknown job id {job_id!r}") from None

    def successors(self, job_id: JobId) -> list[JobId]:
        self.job(job_id)
        return self._succ[job_id]

    def predecessors(self, job_id: JobId) -> list[JobId]:
        self.job(job_id)
        return self._pred[job_id]

    def entries(self) -> list[JobId]:
        return [j for j in self.jobs if not self._pred[j]]

    def exits(self) -> list[JobId]:
        return [j for j in self.jobs if not self._succ[j]]

    def topological_order(self) -> list[JobId]:
        if self._topo is None:
            self._topo = topological_order(self)
        return self._topo


def validate(dag: WorkflowDag) -> ValidationReport:
    """Check edge endpoints, self-loops and acyclicity; collect every problem."""
    report = ValidationReport()
    if not dag.jobs:
        report.errors.append("workflow has no jobs")
    for a, b in dag._dangling:
        missing = a if a not in dag.jobs else b
        report.errors.append(f"edge {a!r}->{b!r} references unknown job {missing!r}")
    for a, b in dag.edges:
        if a == b:
            report.errors.append(f"self-loop on {a!r}")
    cycle = _find_cycle(dag)
    if cycle:
        report.cycle = cycle
        report.errors.append("cycle detected: " + " -> ".join(map(str, cycle)))
    return report


def _find_cycle(dag: WorkflowDag) -> list[JobId] | None:
    WHITE, GREY, BLACK = 0, 1, 2
    colour = dict.fromkeys(dag.jobs, WHITE)
    for root in sorted(dag.jobs, key=id_key):
        if colour[root] != WHITE:
            continue
        stack = [(root, iter(dag._succ[root]))]
        path = [root]
        colour[root] = GREY
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                stack.pop()
                path.pop()
                colour[node] = BLACK
            elif colour[nxt] == GREY:
                return path[path.index(nxt):]
            elif colour[nxt] == WHITE:
                colour[nxt] = GREY
                path.append(nxt)
                stack.append((nxt, iter(dag._succ[nxt])))
    return None


def ensure_valid(dag: WorkflowDag) -> None:
    report = validate(dag)
    if not report.ok:
        raise DagError(f"invalid workflow {dag.name!r}: " + "; ".join(report.errors))


def successors(dag: WorkflowDag, job_id: JobId) -> list[JobId]:
    return dag.successors(job_id)


def predecessors(dag: WorkflowDag, job_id: JobId) -> list[JobId]:
    return dag.predecessors(job_id)


def topological_order(dag: WorkflowDag) -> list[JobId]:
    """Kahn's algorithm, always releasing the smallest ready id first."""
    indeg = {j: len(dag._pred[j]) for j in dag.jobs}
    heap = [(id_key(j), j) for j, d in indeg.items() if d == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        _, j = heapq.heappop(heap)
        order.append(j)
        for s in dag._succ[j]:
            indeg[s] -= 1
            if indeg[s] == 0:
                heapq.heappush(heap, (id_key(s), s))
    if len(order) != len(dag.jobs):
        raise DagError(f"workflow {dag.name!r} contains a cycle")
    return order


@dataclass
class ExtendedDag:
    """Workflows joined under a single pseudo entry and pseudo exit."""

    base: WorkflowDag
    entry: JobId
    exit: JobId
    origin: dict[JobId, int]

    @property
    def jobs(self):
        return self.base.jobs

    @property
    def real_jobs(self) -> list[Job]:
        return self.base.real_jobs

    def successors(self, job_id):
        return self.base.successors(job_id)

    def predecessors(self, job_id):
        return self.base.predecessors(job_id)

    def topological_order(self):
        return self.base.topological_order()

    def strip(self) -> list[WorkflowDag]:
        """Recover the input workflows (pseudo nodes and their edges removed)."""
        groups: dict[int, list[Job]] = {}
        for j, w in self.origin.items():
            groups.setdefault(w, []).append(self.base.jobs[j])
        out = []
        for w in sorted(groups):
            ids = {job.id for job in groups[w]}
            edges = [(a, b) for a, b in self.base.edges if a in ids and b in ids]
            out.append(WorkflowDag(groups[w], edges))
        return out


def merge_workflows(workflows: Sequence[WorkflowDag], entry_id: JobId = "_entry",
                    exit_id: JobId = "_exit") -> ExtendedDag:
    """Join workflows with one zero-work pseudo entry and one pseudo exit."""
    if not workflows:
        raise DagError("merge_workflows needs at least one workflow")
    jobs = [Job.pseudo(entry_id)]
    edges = []
    origin = {}
    for w, dag in enumerate(workflows):
        ensure_valid(dag)
        for job in dag.jobs.values():
            if job.id in origin or job.id in (entry_id, exit_id):
                raise DagError(f"job id {job.id!r} appears in more than one workflow")
            origin[job.id] = w
            jobs.append(job)
        edges.extend(dag.edges)
        edges.extend((entry_id, j) for j in dag.entries())
        edges.extend((j, exit_id) for j in dag.exits())
    jobs.append(Job.pseudo(exit_id))
    name = "+".join(d.name for d in workflows if d.name)
    return ExtendedDag(WorkflowDag(jobs, edges, name=name), entry_id, exit_id, origin)


def as_extended(dag: WorkflowDag | ExtendedDag) -> ExtendedDag:
    return dag if isinstance(dag, ExtendedDag) else merge_workflows([dag])
