"""Workflow generators, JSON documents for workflows/catalogs, and DAX import."""

from __future__ import annotations

import json
import math
import xml.etree.ElementTree as ET
from fractions import Fraction
from importlib import resources
from typing import Callable

import numpy as np

from .dag import DagError, Job, WorkflowDag, ensure_valid
from .platform import CatalogError, VmCatalog, VmInstance, VmType

WorkSampler = Callable[[np.random.Generator], "int | Fraction"]

SUFFICIENCY = {"scarce": Fraction(1, 2), "normal": Fraction(1), "sufficient": Fraction(3, 2)}
SMALL_VCPUS = 8


class WorkloadError(ValueError):
    pass


def uniform_work(low: int = 10, high: int = 100) -> WorkSampler:
    """Integer vCPU-slot volumes drawn uniformly from [low, high]."""
    return lambda rng: int(rng.integers(low, high + 1))


def unit_work(rng) -> int:
    return 1


def _make_jobs(ids, work_sampler, seed):
    rng = np.random.default_rng(seed)
    sampler = work_sampler or uniform_work()
    return [Job(i, cpu=1, mem=Fraction(1), work=Fraction(sampler(rng))) for i in ids]


def gen_fft(m: int, work_sampler: WorkSampler | None = None, seed: int = 0) -> WorkflowDag:
    """Recursive FFT task graph: 2m-1 recursive-call tasks then log2(m) butterfly levels."""
    if m < 2 or m & (m - 1):
        raise WorkloadError(f"FFT size must be a power of two >= 2, got {m}")
    levels = m.bit_length() - 1
    # binary tree of recursive calls, heap-numbered from 1
    tree = [f"r{i}" for i in range(1, 2 * m)]
    edges = [(f"r{i // 2}", f"r{i}") for i in range(2, 2 * m)]
    leaves = [f"r{i}" for i in range(m, 2 * m)]
    prev = leaves
    butterflies = []
    for s in range(levels):
        cur = [f"b{s}_{i}" for i in range(m)]
        for i in range(m):
            partner = i ^ (1 << s)
            edges.append((prev[i], cur[i]))
            edges.append((prev[partner], cur[i]))
        butterflies.extend(cur)
        prev = cur
    jobs = _make_jobs(tree + butterflies, work_sampler, seed)
    return WorkflowDag(jobs, edges, name=f"fft-{m}", meta={"kind": "fft", "m": m, "seed": seed})


def fft_size(m: int) -> int:
    return 2 * m - 1 + m * int(math.log2(m))


def gen_gaussian(n: int, work_sampler: WorkSampler | None = None, seed: int = 0) -> WorkflowDag:
    """Gaussian-elimination task graph for an n x n matrix.

    Step k has a pivot task p{k} and update tasks u{k}_{j} for columns
    j > k. The pivot waits for the previous step's update of column k;
    each update waits for its pivot and the previous update of its column.
    """
    if n < 2:
        raise WorkloadError(f"Gaussian elimination needs n >= 2, got {n}")
    ids, edges = [], []
    for k in range(1, n):
        ids.append(f"p{k}")
        if k > 1:
            edges.append((f"u{k - 1}_{k}", f"p{k}"))
        for j in range(k + 1, n + 1):
            ids.append(f"u{k}_{j}")
            edges.append((f"p{k}", f"u{k}_{j}"))
            if k > 1:
                edges.append((f"u{k - 1}_{j}", f"u{k}_{j}"))
    jobs = _make_jobs(ids, work_sampler, seed)
    return WorkflowDag(jobs, edges, name=f"gaussian-{n}", meta={"kind": "gaussian", "n": n, "seed": seed})


def gaussian_size(n: int) -> int:
    return (n * n + n - 2) // 2


def gen_random(num_jobs: int, edge_density: float = 0.2, work_sampler: WorkSampler | None = None,
               seed: int = 0) -> WorkflowDag:
    """Random DAG: each forward pair (i < j) is an edge with probability ``edge_density``."""
    if num_jobs < 1:
        raise WorkloadError("num_jobs must be >= 1")
    if not 0 <= edge_density <= 1:
        raise WorkloadError("edge_density must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    ids = [f"t{i}" for i in range(num_jobs)]
    mask = rng.random((num_jobs, num_jobs)) < edge_density
    edges = [(ids[i], ids[j]) for i in range(num_jobs) for j in range(i + 1, num_jobs) if mask[i, j]]
    jobs = _make_jobs(ids, work_sampler, rng.integers(2**31))
    return WorkflowDag(jobs, edges, name=f"random-{num_jobs}",
                       meta={"kind": "random", "density": edge_density, "seed": seed})


def gen_vm_pool(types, num_jobs: int, sufficiency: str = "normal", seed: int = 0) -> VmCatalog:
    """Random instance pool sized by VM sufficiency.

    Two thirds of the instances (rounded up) get types with at most 8
    vCPUs, the rest get larger types; each type is drawn uniformly.
    """
    types = list(types.types.values() if isinstance(types, VmCatalog) else types)
    if sufficiency not in SUFFICIENCY:
        raise WorkloadError(f"unknown sufficiency {sufficiency!r}")
    small = [t for t in types if t.vcpus <= SMALL_VCPUS]
    large = [t for t in types if t.vcpus > SMALL_VCPUS]
    if not small or not large:
        raise CatalogError("pool generation needs types on both sides of the 8-vCPU boundary")
    count = max(1, math.ceil(num_jobs * SUFFICIENCY[sufficiency]))
    n_small = math.ceil(Fraction(2, 3) * count)
    rng = np.random.default_rng(seed)
    picks = [small[i] for i in rng.integers(len(small), size=n_small)]
    picks += [large[i] for i in rng.integers(len(large), size=count - n_small)]
    width = len(str(count))
    return VmCatalog(types, [VmInstance(f"vm{i:0{width}d}", t) for i, t in enumerate(picks)])


# ---------------------------------------------------------------- JSON I/O

_JOB_FIELDS = {"id", "cpu", "mem_gib", "work", "runtimes"}
_TYPE_FIELDS = {"name", "vcpus", "mem_gib", "price_per_slot"}


def _loads(text: str, what: str):
    try:
        return json.loads(text, parse_float=Fraction)
    except json.JSONDecodeError as e:
        raise WorkloadError(f"{what}: JSON parse error at line {e.lineno}, column {e.colno}: {e.msg}") from None


def _number(value, where: str, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, Fraction)):
        raise WorkloadError(f"{where}: expected a number, got {value!r}")
    if integer and Fraction(value).denominator != 1:
        raise WorkloadError(f"{where}: expected an integer, got {value}")
    return int(value) if integer else Fraction(value)


def _check_fields(obj, allowed, where, strict):
    if not isinstance(obj, dict):
        raise WorkloadError(f"{where}: expected an object")
    extra = set(obj) - allowed
    if strict and extra:
        raise WorkloadError(f"{where}: unknown field(s) {sorted(extra)}")


def _out(x):
    x = Fraction(x)
    if x.denominator == 1:
        return x.numerator
    return float(x)


def load_workflow(text: str, strict: bool = True) -> WorkflowDag:
    doc = _loads(text, "workflow")
    _check_fields(doc, {"name", "jobs", "edges", "meta"}, "workflow", strict)
    jobs_doc = doc.get("jobs")
    if not isinstance(jobs_doc, list) or not jobs_doc:
        raise WorkloadError("workflow.jobs: must be a non-empty array")
    jobs = []
    for i, jd in enumerate(jobs_doc):
        where = f"jobs[{i}]"
        _check_fields(jd, _JOB_FIELDS, where, strict)
        if "id" not in jd:
            raise WorkloadError(f"{where}: missing 'id'")
        runtimes = jd.get("runtimes")
        if runtimes is not None:
            if not isinstance(runtimes, dict):
                raise WorkloadError(f"{where}.runtimes: expected an object")
            runtimes = {k: _number(v, f"{where}.runtimes.{k}", integer=True) for k, v in runtimes.items()}
        try:
            jobs.append(Job(jd["id"], cpu=_number(jd.get("cpu", 0), f"{where}.cpu", integer=True),
                            mem=_number(jd.get("mem_gib", 0), f"{where}.mem_gib"),
                            work=_number(jd.get("work", 0), f"{where}.work"), runtimes=runtimes))
        except DagError as e:
            raise WorkloadError(f"{where}: {e}") from None
    edges = []
    for i, e in enumerate(doc.get("edges", [])):
        if not isinstance(e, list) or len(e) != 2:
            raise WorkloadError(f"edges[{i}]: expected [child, parent]")
        child, parent = e
        edges.append((parent, child))
    try:
        dag = WorkflowDag(jobs, edges, name=doc.get("name", ""), meta=doc.get("meta"))
    except DagError as e:
        raise WorkloadError(str(e)) from None
    try:
        ensure_valid(dag)
    except DagError as e:
        raise WorkloadError(str(e)) from None
    return dag


def save_workflow(dag: WorkflowDag) -> str:
    jobs = []
    for job in dag.jobs.values():
        if job.is_pseudo:
            continue
        jd = {"id": job.id, "cpu": job.cpu, "mem_gib": _out(job.mem), "work": _out(job.work)}
        if job.runtimes is not None:
            jd["runtimes"] = dict(job.runtimes)
        jobs.append(jd)
    edges = [[b, a] for a, b in dag.edges]
    meta = {k: (_out(v) if isinstance(v, Fraction) else v) for k, v in dag.meta.items()}
    doc = {"name": dag.name, "jobs": jobs, "edges": edges}
    if meta:
        doc["meta"] = meta
    return json.dumps(doc, indent=1)


def load_catalog(text: str, strict: bool = True) -> VmCatalog:
    """Catalog document: ``types`` (name, vcpus, memory, price per slot) and optional ``instances``.

    Without ``instances`` one instance per type is created.
    """
    doc = _loads(text, "catalog")
    _check_fields(doc, {"types", "instances"}, "catalog", strict)
    tdoc = doc.get("types")
    if not isinstance(tdoc, list) or not tdoc:
        raise WorkloadError("catalog.types: must be a non-empty array")
    types = []
    for i, td in enumerate(tdoc):
        where = f"types[{i}]"
        _check_fields(td, _TYPE_FIELDS, where, strict)
        for key in _TYPE_FIELDS:
            if key not in td:
                raise WorkloadError(f"{where}: missing {key!r}")
        try:
            types.append(VmType(str(td["name"]), _number(td["vcpus"], f"{where}.vcpus", integer=True),
                                _number(td["mem_gib"], f"{where}.mem_gib"),
                                _number(td["price_per_slot"], f"{where}.price_per_slot")))
        except CatalogError as e:
            raise WorkloadError(f"{where}: {e}") from None
    by_name = {t.name: t for t in types}
    if "instances" not in doc:
        return VmCatalog.one_each(types)
    instances = []
    for i, idoc in enumerate(doc["instances"]):
        where = f"instances[{i}]"
        _check_fields(idoc, {"id", "type"}, where, strict)
        if idoc.get("type") not in by_name:
            raise WorkloadError(f"{where}: unknown type {idoc.get('type')!r}")
        instances.append(VmInstance(str(idoc["id"]), by_name[idoc["type"]]))
    try:
        return VmCatalog(types, instances)
    except CatalogError as e:
        raise WorkloadError(str(e)) from None


def save_catalog(catalog: VmCatalog) -> str:
    doc = {
        "types": [{"name": t.name, "vcpus": t.vcpus, "mem_gib": _out(t.mem),
                   "price_per_slot": _out(t.price)} for t in catalog.types.values()],
        "instances": [{"id": i.id, "type": i.type.name} for i in catalog.instances],
    }
    return json.dumps(doc, indent=1)


# ---------------------------------------------------------------- DAX

def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def import_dax(xml_text: str, ref_vcpus: int = 1) -> WorkflowDag:
    """Read the job/child/parent subset of a Pegasus DAX document.

    Work is ``runtime * ref_vcpus`` vCPU-slots; file and transfer elements
    are ignored.
    """
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as e:
        raise WorkloadError(f"malformed DAX: {e}") from None
    jobs, edges = [], []
    ids = set()
    for el in root:
        tag = _local(el.tag)
        if tag == "job":
            jid = el.get("id")
            if jid is None:
                raise WorkloadError("DAX job without id")
            runtime = el.get("runtime", "0")
            try:
                work = Fraction(runtime) * ref_vcpus
            except ValueError:
                raise WorkloadError(f"DAX job {jid}: bad runtime {runtime!r}") from None
            jobs.append(Job(jid, cpu=1, mem=Fraction(0), work=max(work, Fraction(0))))
            ids.add(jid)
    for el in root:
        if _local(el.tag) != "child":
            continue
        child = el.get("ref")
        if child not in ids:
            raise WorkloadError(f"DAX child references unknown job {child!r}")
        for p in el:
            if _local(p.tag) != "parent":
                continue
            parent = p.get("ref")
            if parent not in ids:
                raise WorkloadError(f"DAX parent references unknown job {parent!r}")
            edges.append((parent, child))
    if not jobs:
        raise WorkloadError("DAX document has no jobs")
    dag = WorkflowDag(jobs, edges, name=root.get("name", "dax"), meta={"kind": "dax"})
    try:
        ensure_valid(dag)
    except DagError as e:
        raise WorkloadError(str(e)) from None
    return dag


# ---------------------------------------------------------------- bundled data

def _data(name: str) -> str:
    return resources.files("wfsched").joinpath("data", name).read_text(encoding="utf-8")


def example_workflow() -> WorkflowDag:
    """The 12-job motivating example with its per-VM running times."""
    return load_workflow(_data("example12.json"))


def example_catalog() -> VmCatalog:
    """Three VMs priced 3, 5 and 6 per slot."""
    return load_catalog(_data("example12_vms.json"))


def two_workflows() -> list[WorkflowDag]:
    """Two 6-job workflows used to illustrate pseudo entry/exit merging."""
    doc = json.loads(_data("two_workflows.json"))
    return [load_workflow(json.dumps(d)) for d in doc]


def ec2_types() -> VmCatalog:
    """The 23 EC2-like VM types (one instance each); prices are per slot."""
    return load_catalog(_data("ec2_types.json"))


def make_workload(descriptor: str, seed: int = 0) -> WorkflowDag:
    """Build a workload from ``kind:args`` (fft:16, gaussian:36, random:61:0.2, example, file:path, dax:path)."""
    kind, _, rest = descriptor.partition(":")
    args = rest.split(":") if rest else []
    try:
        if kind == "fft":
            return gen_fft(int(args[0]), seed=seed)
        if kind == "gaussian":
            return gen_gaussian(int(args[0]), seed=seed)
        if kind == "random":
            density = float(args[1]) if len(args) > 1 else 0.2
            return gen_random(int(args[0]), density, seed=seed)
        if kind == "example":
            return example_workflow()
        if kind == "file":
            with open(rest, encoding="utf-8") as fh:
                return load_workflow(fh.read())
        if kind == "dax":
            with open(rest, encoding="utf-8") as fh:
                return import_dax(fh.read())
    except (IndexError, ValueError) as e:
        if isinstance(e, WorkloadError):
            raise
        raise WorkloadError(f"bad workload descriptor {descriptor!r}: {e}") from None
    raise WorkloadError(f"unknown workload kind {kind!r}")


def workload_kind(dag: WorkflowDag) -> str:
    return str(dag.meta.get("kind", dag.name or "workflow"))

