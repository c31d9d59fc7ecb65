"""VM types, instance pools, running times and execution cost."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

from .dag import Job


class CatalogError(ValueError):
    pass


@dataclass(frozen=True)
class VmType:
    name: str
    vcpus: int
    mem: Fraction
    price: Fraction  # currency per slot

    def __post_init__(self):
        if self.vcpus < 1:
            raise CatalogError(f"VM type {self.name!r}: vcpus must be >= 1")
        if self.price < 0:
            raise CatalogError(f"VM type {self.name!r}: negative price")


@dataclass(frozen=True)
class VmInstance:
    id: str
    type: VmType


class VmCatalog:
    """Machine types plus the concrete instance pool drawn from them.

    Instance order is significant: it is the final tie-breaker everywhere.
    """

    def __init__(self, types: Iterable[VmType], instances: Iterable[VmInstance] = ()):
        self.types: dict[str, VmType] = {}
        for t in types:
            if t.name in self.types:
                raise CatalogError(f"duplicate VM type {t.name!r}")
            self.types[t.name] = t
        self.instances: list[VmInstance] = []
        seen = set()
        for inst in instances:
            if inst.id in seen:
                raise CatalogError(f"duplicate instance id {inst.id!r}")
            if self.types.get(inst.type.name) != inst.type:
                raise CatalogError(f"instance {inst.id!r} references unknown type {inst.type.name!r}")
            seen.add(inst.id)
            self.instances.append(inst)
        self.index = {inst.id: i for i, inst in enumerate(self.instances)}
        self._by_type: dict[str, list[VmInstance]] = {}
        for inst in self.instances:
            self._by_type.setdefault(inst.type.name, []).append(inst)

    def __repr__(self):
        return f"VmCatalog(types={len(self.types)}, instances={len(self.instances)})"

    @classmethod
    def one_each(cls, types: Iterable[VmType]) -> "VmCatalog":
        """One instance per type, named after the type."""
        types = list(types)
        return cls(types, [VmInstance(t.name, t) for t in types])

    def instance(self, instance_id: str) -> VmInstance:
        return self.instances[self.index[instance_id]]

    def instances_of(self, type_name: str) -> list[VmInstance]:
        return self._by_type.get(type_name, [])

    def pooled_types(self) -> list[VmType]:
        """Types that have at least one instance, in catalog order."""
        return [t for t in self.types.values() if t.name in self._by_type]


def fits(job: Job, vm_type: VmType) -> bool:
    return vm_type.vcpus >= job.cpu and vm_type.mem >= job.mem


def eligible_vms(job: Job, catalog: VmCatalog) -> list[VmInstance]:
    """Instances whose type meets the job's CPU and memory floor."""
    return [inst for inst in catalog.instances if fits(job, inst.type)]


def eligible_types(job: Job, catalog: VmCatalog) -> list[VmType]:
    return [t for t in catalog.pooled_types() if fits(job, t)]


def running_time(job: Job, vm_type: VmType) -> int:
    """Whole slots needed by ``job`` on ``vm_type`` (ceil of work / vcpus).

    Real jobs always occupy at least one slot; pseudo jobs take none.
    """
    if job.is_pseudo:
        return 0
    if job.runtimes is not None and vm_type.name in job.runtimes:
        return int(job.runtimes[vm_type.name])
    return max(1, math.ceil(Fraction(job.work) / vm_type.vcpus))


def exec_cost(job: Job, vm_type: VmType) -> Fraction:
    return vm_type.price * running_time(job, vm_type)
