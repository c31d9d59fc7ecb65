"""Time-indexed integer model of the budgeted makespan problem.

The model uses one binary ``x_j_k_t`` per (job, VM instance, start slot) with
``t`` in ``0..T-1`` and an integer ``d`` bounding every finish time. Rows come
in seven families:

=========  =====================================================  ============
family     meaning                                                 rows
=========  =====================================================  ============
assign     each job starts exactly once                            |J|
cpu        chosen instance has enough vCPUs                        |J|
mem        chosen instance has enough memory                       |J|
prec       child starts no earlier than parent finishes            |E|
excl       at most one job occupies an instance in a slot          |V| * T
span       every finish time is at most ``d``                      |J|
budget     total leasing cost within ``D``                         1
=========  =====================================================  ============

``d`` is bounded above by ``T`` so that no job can run past the horizon,
where the exclusivity rows stop looking.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction

from .dag import ExtendedDag, WorkflowDag
from .platform import VmCatalog, fits, running_time
from .scheduler import Schedule, _Placer, schedule_heft, validate_schedule

FAMILIES = ("assign", "cpu", "mem", "prec", "excl", "span", "budget")

ORACLE_MAX_JOBS = 6
ORACLE_MAX_VMS = 3
ORACLE_MAX_HORIZON = 30


class MipError(ValueError):
    pass


class HorizonTooSmall(MipError):
    pass


class InstanceTooLarge(MipError):
    pass


class Infeasible(MipError):
    pass


@dataclass
class Row:
    name: str
    family: str
    coeffs: dict[str, Fraction]
    sense: str  # "<=", ">=", "="
    rhs: Fraction


@dataclass
class MipModel:
    horizon: int
    budget: Fraction
    jobs: list
    instances: list
    x: dict[tuple, str]  # (job id, instance id, t) -> variable name
    rows: list[Row] = field(default_factory=list)
    d: str = "d"

    @property
    def variables(self) -> list[str]:
        return [*self.x.values(), self.d]

    @property
    def num_variables(self) -> int:
        return len(self.x) + 1

    def family_counts(self) -> dict[str, int]:
        counts = dict.fromkeys(FAMILIES, 0)
        for r in self.rows:
            counts[r.family] += 1
        return counts


_SAFE = re.compile(r"[^A-Za-z0-9.]")


def _safe(s) -> str:
    return _SAFE.sub("_", str(s))


def _real_jobs(dag):
    g = dag.base if isinstance(dag, ExtendedDag) else dag
    return g, [j for j in g.jobs.values() if not j.is_pseudo]


def _critical_min(g: WorkflowDag, catalog: VmCatalog) -> int:
    """Longest chain of per-job fastest runtimes: a lower bound on any makespan."""
    best: dict = {}
    for j in g.topological_order():
        job = g.jobs[j]
        rts = [running_time(job, t) for t in catalog.pooled_types() if fits(job, t)]
        if not rts and not job.is_pseudo:
            raise MipError(f"job {j!r} fits no VM in the pool")
        own = min(rts) if rts and not job.is_pseudo else 0
        best[j] = own + max((best[p] for p in g._pred[j]), default=0)
    return max(best.values(), default=0)


def default_horizon(dag, catalog: VmCatalog) -> int:
    return 2 * schedule_heft(dag, catalog).makespan


def build_model(dag, catalog: VmCatalog, budget, horizon: int | None = None) -> MipModel:
    g, jobs = _real_jobs(dag)
    T = default_horizon(g, catalog) if horizon is None else int(horizon)
    if T < 1:
        raise HorizonTooSmall("horizon must be at least one slot")
    lb = _critical_min(g, catalog)
    if lb > T:
        raise HorizonTooSmall(f"horizon {T} is below the critical-path lower bound {lb}")
    insts = list(catalog.instances)
    x = {}
    seen = set()
    for job in jobs:
        for inst in insts:
            for t in range(T):
                name = f"x_{_safe(job.id)}_{_safe(inst.id)}_{t}"
                if name in seen:
                    raise MipError(f"variable name clash on {name!r}; rename jobs or instances")
                seen.add(name)
                x[job.id, inst.id, t] = name
    m = MipModel(T, Fraction(budget), jobs, insts, x)
    rt = {(job.id, inst.id): running_time(job, inst.type) for job in jobs for inst in insts}

    def over(job, weight):
        out = {}
        for inst in insts:
            for t in range(T):
                w = Fraction(weight(inst, t))
                if w:
                    out[x[job.id, inst.id, t]] = w
        return out

    for job in jobs:
        m.rows.append(Row(f"assign_{_safe(job.id)}", "assign", over(job, lambda i, t: 1), "=", Fraction(1)))
    for job in jobs:
        m.rows.append(Row(f"cpu_{_safe(job.id)}", "cpu", over(job, lambda i, t: i.type.vcpus),
                          ">=", Fraction(job.cpu)))
    for job in jobs:
        m.rows.append(Row(f"mem_{_safe(job.id)}", "mem", over(job, lambda i, t: i.type.mem),
                          ">=", Fraction(job.mem)))
    for a, b in sorted(g.edges, key=lambda e: (str(e[0]), str(e[1]))):
        ja, jb = g.jobs[a], g.jobs[b]
        if ja.is_pseudo or jb.is_pseudo:
            continue
        co = over(jb, lambda i, t: t)
        for var, w in over(ja, lambda i, t: t + rt[a, i.id]).items():
            co[var] = co.get(var, 0) - w
        m.rows.append(Row(f"prec_{_safe(a)}_{_safe(b)}", "prec", co, ">=", Fraction(0)))
    for inst in insts:
        for t in range(T):
            co = {}
            for job in jobs:
                for r in range(max(0, t - rt[job.id, inst.id] + 1), t + 1):
                    co[x[job.id, inst.id, r]] = Fraction(1)
            m.rows.append(Row(f"excl_{_safe(inst.id)}_{t}", "excl", co, "<=", Fraction(1)))
    for job in jobs:
        co = over(job, lambda i, t: t + rt[job.id, i.id])
        co[m.d] = Fraction(-1)
        m.rows.append(Row(f"span_{_safe(job.id)}", "span", co, "<=", Fraction(0)))
    co = {}
    for job in jobs:
        co.update(over(job, lambda i, t: i.type.price * rt[job.id, i.id]))
    m.rows.append(Row("budget", "budget", co, "<=", m.budget))
    return m


# --- LP text ---------------------------------------------------------------

def _fmt(v: Fraction) -> str:
    v = Fraction(v)
    if v.denominator == 1:
        return str(v.numerator)
    d = v.denominator
    while d % 2 == 0:
        d //= 2
    while d % 5 == 0:
        d //= 5
    if d == 1:  # terminating decimal, print exactly
        return format(Decimal(v.numerator) / Decimal(v.denominator), "f")
    return format(float(v), ".15f").rstrip("0")


def _terms(coeffs: dict[str, Fraction]) -> list[str]:
    out = []
    for i, (var, c) in enumerate(coeffs.items()):
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        body = var if mag == 1 else f"{_fmt(mag)} {var}"
        out.append(f"{'- ' if sign == '-' else ''}{body}" if i == 0 else f"{sign} {body}")
    return out or ["0 d"]


def _wrap(head: str, parts: list[str], width: int = 100) -> list[str]:
    lines, cur = [], head
    for p in parts:
        if len(cur) + 1 + len(p) > width and cur.strip():
            lines.append(cur)
            cur = "   " + p
        else:
            cur = f"{cur} {p}" if cur else p
    lines.append(cur)
    return lines


_HEADERS = {
    "assign": "each job starts exactly once",
    "cpu": "vCPU floor",
    "mem": "memory floor",
    "prec": "child starts after parent finishes",
    "excl": "one job per instance per slot",
    "span": "finish times bounded by d",
    "budget": "total cost within budget",
}


def export_lp(model: MipModel) -> str:
    """CPLEX LP text. Byte-identical for identical models."""
    out = ["\\ budgeted makespan model",
           f"\\ horizon {model.horizon}, budget {_fmt(model.budget)}",
           f"\\ {len(model.jobs)} jobs, {len(model.instances)} instances, {model.num_variables} variables",
           "Minimize", f" obj: {model.d}", "Subject To"]
    last = None
    for r in model.rows:
        if r.family != last:
            out.append(f"\\ {r.family}: {_HEADERS[r.family]}")
            last = r.family
        sense = {"=": "=", "<=": "<=", ">=": ">="}[r.sense]
        parts = _terms(r.coeffs) + [sense, _fmt(r.rhs)]
        out.extend(_wrap(f" {r.name}:", parts))
    out += ["Bounds", f" 0 <= {model.d} <= {model.horizon}"]
    out.append("Binary")
    out.extend(_wrap("", list(model.x.values())) if model.x else [])
    out += ["Generals", f" {model.d}", "End", ""]
    return "\n".join(out)


@dataclass
class ParsedLp:
    objective: str
    sense: str
    rows: list[Row]
    binaries: list[str]
    generals: list[str]
    bounds: list[str]

    @property
    def variables(self) -> list[str]:
        return self.binaries + [g for g in self.generals if g not in set(self.binaries)]

    def family_counts(self) -> dict[str, int]:
        counts = dict.fromkeys(FAMILIES, 0)
        for r in self.rows:
            fam = r.name.split("_", 1)[0]
            counts[fam] = counts.get(fam, 0) + 1
        return counts


_SECTIONS = {"minimize": "obj", "maximize": "obj", "subject to": "st", "bounds": "bounds",
             "binary": "bin", "binaries": "bin", "generals": "gen", "general": "gen", "end": "end"}
_TOKEN = re.compile(r"<=|>=|=|[+-]|[^\s+\-<>=]+")


def _parse_row(text: str) -> Row:
    name, _, expr = text.partition(":")
    toks = _TOKEN.findall(expr)
    coeffs: dict[str, Fraction] = {}
    sign, num = 1, None
    i = 0
    while i < len(toks) and toks[i] not in ("<=", ">=", "="):
        tok = toks[i]
        if tok in "+-":
            sign = -1 if tok == "-" else 1
        elif re.fullmatch(r"[0-9.eE]+", tok) and num is None:
            num = Fraction(tok)
        else:
            coeffs[tok] = coeffs.get(tok, 0) + sign * (num if num is not None else 1)
            sign, num = 1, None
        i += 1
    if i >= len(toks):
        raise MipError(f"row {name.strip()!r} has no comparison")
    sense = toks[i]
    rest = toks[i + 1:]
    rhs = Fraction("".join(rest))
    return Row(name.strip(), name.strip().split("_", 1)[0], coeffs, sense, rhs)


def parse_lp(text: str) -> ParsedLp:
    """Read back the LP subset written by :func:`export_lp`."""
    section = None
    obj, osense = "", ""
    rows, bins, gens, bounds = [], [], [], []
    pending = ""
    for raw in text.splitlines():
        line = raw.split("\\", 1)[0].rstrip()
        key = line.strip().lower()
        if key in _SECTIONS:
            if pending:
                rows.append(_parse_row(pending))
                pending = ""
            section = _SECTIONS[key]
            if section == "obj":
                osense = key
            continue
        if not line.strip():
            continue
        if section == "obj":
            obj = line.split(":", 1)[-1].strip()
        elif section == "st":
            if raw.startswith(" ") and not raw.startswith("   ") and ":" in line:
                if pending:
                    rows.append(_parse_row(pending))
                pending = line.strip()
            else:
                pending += " " + line.strip()
        elif section == "bounds":
            bounds.append(line.strip())
        elif section == "bin":
            bins.extend(line.split())
        elif section == "gen":
            gens.extend(line.split())
    if pending:
        rows.append(_parse_row(pending))
    return ParsedLp(obj, osense, rows, bins, gens, bounds)


# --- evaluating and decoding points -----------------------------------------

def encode(model: MipModel, schedule: Schedule) -> dict[str, int]:
    """Variable values for a schedule (d = its makespan)."""
    vals = dict.fromkeys(model.variables, 0)
    for a in schedule.assignments.values():
        key = (a.job, a.vm, a.start)
        if key not in model.x:
            raise MipError(f"job {a.job!r} at t={a.start} on {a.vm} is outside the model")
        vals[model.x[key]] = 1
    vals[model.d] = schedule.makespan
    return vals


def evaluate(model: MipModel, values: dict[str, float], tol: float = 1e-6) -> list[str]:
    """Names of rows and bounds violated by ``values``."""
    bad = []
    for r in model.rows:
        lhs = sum(float(c) * values.get(v, 0) for v, c in r.coeffs.items())
        rhs = float(r.rhs)
        ok = {"=": abs(lhs - rhs) <= tol, "<=": lhs <= rhs + tol, ">=": lhs >= rhs - tol}[r.sense]
        if not ok:
            bad.append(r.name)
    if not -tol <= values.get(model.d, 0) <= model.horizon + tol:
        bad.append("bound_d")
    return bad


def decode(model: MipModel, values: dict[str, float], catalog: VmCatalog) -> Schedule:
    """Turn a 0/1 point into a :class:`Schedule` (one start per job is assumed)."""
    from .scheduler import Assignment
    sched = Schedule(algorithm="mip")
    for (j, k, t), name in model.x.items():
        if values.get(name, 0) > 0.5:
            job = next(jb for jb in model.jobs if jb.id == j)
            inst = catalog.instance(k)
            dur = running_time(job, inst.type)
            sched.assignments[j] = Assignment(j, k, inst.type.name, t, t + dur, inst.type.price * dur)
    return sched


def solve_milp(model: MipModel, time_limit: float = 60.0):
    """Solve a small model with SciPy's HiGHS wrapper; returns (values, d) or None."""
    import numpy as np
    from scipy.optimize import Bounds, LinearConstraint, milp
    from scipy.sparse import lil_matrix

    names = model.variables
    col = {n: i for i, n in enumerate(names)}
    A = lil_matrix((len(model.rows), len(names)))
    lo = np.full(len(model.rows), -np.inf)
    hi = np.full(len(model.rows), np.inf)
    for i, r in enumerate(model.rows):
        for v, c in r.coeffs.items():
            A[i, col[v]] = float(c)
        if r.sense in ("=", "<="):
            hi[i] = float(r.rhs)
        if r.sense in ("=", ">="):
            lo[i] = float(r.rhs)
    c = np.zeros(len(names))
    c[col[model.d]] = 1.0
    ub = np.ones(len(names))
    ub[col[model.d]] = model.horizon
    res = milp(c, constraints=LinearConstraint(A.tocsr(), lo, hi), integrality=np.ones(len(names)),
               bounds=Bounds(np.zeros(len(names)), ub), options={"time_limit": time_limit})
    if res.x is None or res.status not in (0,):
        return None
    vals = {n: int(round(res.x[i])) for n, i in col.items()}
    return vals, vals[model.d]


# --- exhaustive oracle -----------------------------------------------------

def solve_bruteforce(dag, catalog: VmCatalog, budget, horizon: int) -> Schedule:
    """Minimum-makespan schedule within ``budget`` and ``horizon`` by exhaustive search.

    Every semi-active schedule (no job can start earlier without moving
    another) arises by taking jobs in order of start time and appending each
    to its instance as early as possible. Depth-first search over the next
    ready job and its instance therefore covers an optimal schedule; branches
    are cut when they cannot beat the incumbent or cannot stay in budget.
    """
    g, jobs = _real_jobs(dag)
    insts = list(catalog.instances)
    if len(jobs) > ORACLE_MAX_JOBS or len(insts) > ORACLE_MAX_VMS or horizon > ORACLE_MAX_HORIZON:
        raise InstanceTooLarge(f"oracle limits are {ORACLE_MAX_JOBS} jobs, {ORACLE_MAX_VMS} "
                               f"instances, horizon {ORACLE_MAX_HORIZON}")
    budget = Fraction(budget)
    ids = [j.id for j in jobs]
    real = set(ids)
    preds = {j: [p for p in g._pred[j] if p in real] for j in ids}
    opts = {}
    for job in jobs:
        opts[job.id] = [(n, inst, running_time(job, inst.type), inst.type.price * running_time(job, inst.type))
                        for n, inst in enumerate(insts) if fits(job, inst.type)]
        if not opts[job.id]:
            raise Infeasible(f"job {job.id!r} fits no instance")
    cheapest = {j: min(o[3] for o in opts[j]) for j in ids}

    best = {"span": horizon + 1, "plan": None}
    finish: dict = {}
    placed: dict = {}
    free = [0] * len(insts)

    def dfs(spent, floor_left, span):
        if len(placed) == len(ids):
            if span < best["span"]:
                best["span"], best["plan"] = span, dict(placed)
            return
        for j in ids:
            if j in placed or any(p not in placed for p in preds[j]):
                continue
            ready = max((finish[p] for p in preds[j]), default=0)
            for n, inst, dur, cost in opts[j]:
                if spent + cost + floor_left - cheapest[j] > budget:
                    continue
                start = max(ready, free[n])
                end = start + dur
                if max(span, end) >= best["span"]:
                    continue
                prev = free[n]
                free[n] = end
                finish[j] = end
                placed[j] = (n, start, end, cost)
                dfs(spent + cost, floor_left - cheapest[j], max(span, end))
                del placed[j], finish[j]
                free[n] = prev

    dfs(Fraction(0), sum(cheapest.values()), 0)
    if best["plan"] is None:
        raise Infeasible(f"no schedule fits budget {float(budget):g} within horizon {horizon}")
    pl = _Placer(g, catalog)
    pl.schedule.algorithm = "oracle"
    for j, (n, start, end, cost) in sorted(best["plan"].items(), key=lambda kv: (kv[1][1], kv[1][0])):
        pl.place(g.jobs[j], insts[n], start, end - start, cost)
    rep = validate_schedule(pl.schedule, g, catalog, budget)
    if not rep.ok:  # pragma: no cover - would indicate a search bug
        raise MipError(f"oracle produced an invalid schedule: {rep.violations}")
    return pl.schedule


__all__ = ["FAMILIES", "HorizonTooSmall", "Infeasible", "InstanceTooLarge", "MipError", "MipModel",
           "ParsedLp", "Row", "build_model", "decode", "default_horizon", "encode", "evaluate",
           "export_lp", "parse_lp", "solve_bruteforce", "solve_milp"]
