"""Per-job budget floors, spare-budget splitting and balance carry-over."""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from typing import Callable

from .dag import JobId
from .platform import VmCatalog, eligible_types, exec_cost
from .ranking import UnschedulableJob

PHI_GRID = (Fraction(0), Fraction(1, 4), Fraction(1, 2), Fraction(3, 4), Fraction(1))


class BudgetError(ValueError):
    pass


class InfeasibleBudget(BudgetError):
    pass


class Overspend(BudgetError):
    pass


def _jobs(dag):
    return [j for j in dag.jobs.values() if not j.is_pseudo]


def _costs(job, catalog):
    types = eligible_types(job, catalog)
    if not types:
        raise UnschedulableJob(f"job {job.id!r} fits no VM type in the pool")
    return [exec_cost(job, t) for t in types]


def min_budget(job, catalog: VmCatalog) -> Fraction:
    return min(_costs(job, catalog))


def min_total(dag, catalog: VmCatalog) -> Fraction:
    return sum((min_budget(j, catalog) for j in _jobs(dag)), Fraction(0))


def check_feasible(dag, catalog: VmCatalog, budget) -> bool:
    return Fraction(budget) >= min_total(dag, catalog)


def round_half_up(x) -> int:
    """Display rounding for currency columns."""
    x = Fraction(x)
    return int((Decimal(x.numerator) / Decimal(x.denominator)).quantize(Decimal(1), ROUND_HALF_UP))


@dataclass
class BudgetPlan:
    """Reserved budget per job plus the running remaining balance."""

    total: Fraction
    reserve: dict[JobId, Fraction]
    mode: str
    remain: Fraction = Fraction(0)
    spent: dict[JobId, Fraction] = field(default_factory=dict)

    def available(self, job_id: JobId) -> Fraction:
        return self.reserve[job_id] + self.remain

    def consume(self, job_id: JobId, cost) -> Fraction:
        """Charge ``cost`` against the job's reserve; returns the new balance."""
        cost = Fraction(cost)
        if job_id in self.spent:
            raise BudgetError(f"job {job_id!r} already charged")
        avail = self.available(job_id)
        if cost > avail:
            raise Overspend(f"job {job_id!r}: cost {float(cost):g} exceeds available {float(avail):g}")
        self.remain = avail - cost
        self.spent[job_id] = cost
        return self.remain

    def unconsumed(self) -> Fraction:
        return sum((r for j, r in self.reserve.items() if j not in self.spent), Fraction(0))

    def total_spent(self) -> Fraction:
        return sum(self.spent.values(), Fraction(0))

    def conserved(self) -> bool:
        return self.total_spent() + self.unconsumed() + self.remain == self.total


def _split(dag, catalog, budget, weights: Callable[[list], list[Fraction]], mode) -> BudgetPlan:
    budget = Fraction(budget)
    jobs = _jobs(dag)
    if not jobs:
        raise BudgetError("nothing to budget: workflow has no real jobs")
    floors = {j.id: min_budget(j, catalog) for j in jobs}
    spare = budget - sum(floors.values())
    if spare < 0:
        raise InfeasibleBudget(f"budget {float(budget):g} below minimum {float(budget - spare):g}")
    shares = weights(jobs)
    reserve = {j.id: floors[j.id] + spare * s for j, s in zip(jobs, shares)}
    return BudgetPlan(budget, reserve, mode)


def split_uniform(dag, catalog: VmCatalog, budget) -> BudgetPlan:
    return _split(dag, catalog, budget, lambda jobs: [Fraction(1, len(jobs))] * len(jobs), "uniform")


def extra_demand(job, catalog: VmCatalog) -> Fraction:
    costs = _costs(job, catalog)
    return max(costs) - min(costs)


def split_proportional(dag, catalog: VmCatalog, budget) -> BudgetPlan:
    """Spare budget shared in proportion to (priciest - cheapest) cost per job."""
    def weights(jobs):
        extra = [extra_demand(j, catalog) for j in jobs]
        total = sum(extra)
        if total == 0:
            return [Fraction(1, len(jobs))] * len(jobs)
        return [e / total for e in extra]
    return _split(dag, catalog, budget, weights, "proportional")


SPLITTERS = {"uniform": split_uniform, "proportional": split_proportional}


@dataclass(frozen=True)
class BudgetLevels:
    d_min: Fraction
    d_max: Fraction
    heft_cost: Fraction

    def at(self, phi) -> Fraction:
        return self.d_min + Fraction(phi) * (self.d_max - self.d_min)

    def grid(self, phis=PHI_GRID) -> dict[Fraction, Fraction]:
        return {Fraction(p): self.at(p) for p in phis}


def budget_levels(dag, catalog: VmCatalog, heft_schedule=None) -> BudgetLevels:
    """Cheapest-possible and HEFT costs bracketing the budget grid.

    D_max is clamped up to D_min when HEFT happens to be cheaper.
    """
    if heft_schedule is None:
        from .scheduler import schedule_heft
        heft_schedule = schedule_heft(dag, catalog)
    d_min = min_total(dag, catalog)
    heft_cost = heft_schedule.total_cost
    return BudgetLevels(d_min, max(heft_cost, d_min), heft_cost)
