import json
from fractions import Fraction

import numpy as np
import pytest

from golden import PRICES, RUNTIMES
from wfsched.dag import validate
from wfsched.platform import CatalogError, VmType
from wfsched.workloads import (SMALL_VCPUS, WorkloadError, ec2_types, example_catalog, fft_size,
                               gaussian_size, gen_fft, gen_gaussian, gen_random, gen_vm_pool,
                               import_dax, load_catalog, load_workflow, make_workload, save_catalog,
                               save_workflow, two_workflows, unit_work)


def path_sums(g):
    """Set of total work over every entry-to-exit path (by enumeration)."""
    sums = {}
    for j in reversed(g.topological_order()):
        w = g.jobs[j].work
        succ = g.successors(j)
        sums[j] = {w} if not succ else {w + s for k in succ for s in sums[k]}
    return set().union(*(sums[e] for e in g.entries()))


@pytest.mark.parametrize("m,n", [(2, 5), (4, 15), (16, 95), (32, 223), (128, 1151), (256, 2559)])
def test_fft_sizes(m, n):
    g = gen_fft(m)
    assert len(g) == n == fft_size(m)
    assert validate(g).ok


@pytest.mark.parametrize("m", [2, 4, 8, 16, 32, 64])
def test_fft_paths_equal_under_unit_work(m):
    assert len(path_sums(gen_fft(m, work_sampler=unit_work))) == 1


def test_fft_rejects_non_power_of_two():
    for m in (0, 1, 3, 12):
        with pytest.raises(WorkloadError):
            gen_fft(m)


@pytest.mark.parametrize("n", range(2, 61))
def test_gaussian_sizes(n):
    g = gen_gaussian(n)
    assert len(g) == (n * n + n - 2) // 2 == gaussian_size(n)
    assert validate(g).ok


def test_gaussian_named_sizes():
    assert [len(gen_gaussian(n)) for n in (5, 36, 48, 60)] == [14, 665, 1175, 1829]
    with pytest.raises(WorkloadError):
        gen_gaussian(1)


def test_gaussian_single_entry_and_exit():
    g = gen_gaussian(6)
    assert len(g.entries()) == 1 and len(g.exits()) == 1


def test_random_edge_cases_and_determinism():
    assert len(gen_random(1)) == 1
    assert gen_random(30, 0.0).edges == []
    a, b = gen_random(61, 0.2, seed=42), gen_random(61, 0.2, seed=42)
    assert a == b and a.edges
    assert gen_random(61, 0.2, seed=43) != a
    assert validate(a).ok
    with pytest.raises(WorkloadError):
        gen_random(0)
    with pytest.raises(WorkloadError):
        gen_random(5, 1.5)


def test_default_work_range():
    works = [j.work for j in gen_fft(64, seed=1).jobs.values()]
    assert min(works) >= 10 and max(works) <= 100
    assert all(j.cpu == 1 and j.mem == 1 for j in gen_fft(4).jobs.values())


def test_pool_sizes():
    types = ec2_types()
    pool = gen_vm_pool(types, 12, "normal", seed=1)
    small = [i for i in pool.instances if i.type.vcpus <= SMALL_VCPUS]
    assert len(pool.instances) == 12 and len(small) == 8
    assert len(gen_vm_pool(types, 2, "scarce").instances) == 1
    assert len(gen_vm_pool(types, 95, "scarce").instances) == 48
    assert len(gen_vm_pool(types, 95, "sufficient").instances) == 143


def test_pool_determinism_and_errors():
    t = ec2_types()
    assert save_catalog(gen_vm_pool(t, 40, "normal", 9)) == save_catalog(gen_vm_pool(t, 40, "normal", 9))
    with pytest.raises(WorkloadError):
        gen_vm_pool(t, 4, "plenty")
    with pytest.raises(CatalogError):
        gen_vm_pool([VmType("s", 2, Fraction(1), Fraction(1))], 4)


def test_pool_draws_every_type_eventually():
    pool = gen_vm_pool(ec2_types(), 3000, "normal", seed=0)
    counts = {}
    for i in pool.instances:
        counts[i.type.name] = counts.get(i.type.name, 0) + 1
    assert len(counts) == 23
    small = [c for n, c in counts.items() if pool.types[n].vcpus <= SMALL_VCPUS]
    assert np.std(small) / np.mean(small) < 0.2


def test_bundled_example_matches_tables(fig1):
    cat = example_catalog()
    assert {n: t.price for n, t in cat.types.items()} == PRICES
    for j, row in RUNTIMES.items():
        assert tuple(fig1.jobs[j].runtimes[k] for k in ("VM1", "VM2", "VM3")) == row


def test_workflow_round_trip():
    for g in (gen_fft(16), gen_gaussian(7), gen_random(20, 0.3, seed=2)):
        back = load_workflow(save_workflow(g))
        assert back == g and back.name == g.name


def test_example_round_trip(fig1):
    assert load_workflow(save_workflow(fig1)) == fig1


def test_catalog_round_trip():
    pool = gen_vm_pool(ec2_types(), 30, "normal", 4)
    back = load_catalog(save_catalog(pool))
    assert [(i.id, i.type) for i in back.instances] == [(i.id, i.type) for i in pool.instances]


def test_loader_errors():
    with pytest.raises(WorkloadError, match="non-empty"):
        load_workflow('{"jobs": []}')
    with pytest.raises(WorkloadError, match="line 2"):
        load_workflow('{"jobs": [\n oops]}')
    with pytest.raises(WorkloadError, match=r"jobs\[0\].*colour"):
        load_workflow('{"jobs": [{"id": "a", "colour": 1}]}')
    assert len(load_workflow('{"jobs": [{"id": "a", "colour": 1}]}', strict=False)) == 1
    with pytest.raises(WorkloadError, match=r"jobs\[1\].work"):
        load_workflow('{"jobs": [{"id": "a"}, {"id": "b", "work": "x"}]}')
    with pytest.raises(WorkloadError, match="cycle"):
        load_workflow('{"jobs": [{"id": "a"}, {"id": "b"}], "edges": [["a", "b"], ["b", "a"]]}')
    with pytest.raises(WorkloadError, match="unknown type"):
        load_catalog('{"types": [{"name": "a", "vcpus": 1, "mem_gib": 1, "price_per_slot": 1}],'
                     ' "instances": [{"id": "x", "type": "b"}]}')


def test_fractional_values_stay_exact():
    g = load_workflow('{"jobs": [{"id": "a", "work": 0.1, "mem_gib": 2.5}]}')
    assert g.jobs["a"].work == Fraction(1, 10) and g.jobs["a"].mem == Fraction(5, 2)


def test_two_workflows_fixture():
    a, b = two_workflows()
    assert len(a) == len(b) == 6
    assert a.entries() == ["n1"] and b.entries() == ["n7"]


DAX = """<?xml version="1.0"?>
<adag xmlns="http://pegasus.isi.edu/schema/DAX" name="tiny">
  <job id="ID1" name="a" runtime="12.5"><uses file="f" link="output"/></job>
  <job id="ID2" name="b" runtime="3"/>
  <job id="ID3" name="c" runtime="4"/>
  <child ref="ID2"><parent ref="ID1"/></child>
  <child ref="ID3"><parent ref="ID1"/><parent ref="ID2"/></child>
</adag>"""


def test_dax_import():
    g = import_dax(DAX)
    assert g.predecessors("ID2") == ["ID1"]
    assert len(g.predecessors("ID3")) == 2
    assert g.jobs["ID1"].work == Fraction(25, 2)
    assert import_dax(DAX, ref_vcpus=4).jobs["ID2"].work == 12


def test_dax_errors():
    with pytest.raises(WorkloadError, match="malformed"):
        import_dax("<adag><job id='a'></adag>")
    with pytest.raises(WorkloadError, match="unknown job"):
        import_dax("<adag><job id='a' runtime='1'/><child ref='a'><parent ref='zz'/></child></adag>")
    with pytest.raises(WorkloadError, match="cycle"):
        import_dax("<adag><job id='a' runtime='1'/><job id='b' runtime='1'/>"
                   "<child ref='a'><parent ref='b'/></child><child ref='b'><parent ref='a'/></child></adag>")


def test_large_dax():
    rng = np.random.default_rng(0)
    parts = ['<adag name="cybershake-like">']
    parts += [f'<job id="j{i}" runtime="{rng.integers(1, 50)}"/>' for i in range(1000)]
    for i in range(1, 1000):
        ps = {int(p) for p in rng.integers(0, i, size=2)}
        parts.append(f'<child ref="j{i}">' + "".join(f'<parent ref="j{p}"/>' for p in ps) + "</child>")
    parts.append("</adag>")
    g = import_dax("".join(parts))
    assert len(g) == 1000 and validate(g).ok


def test_make_workload(tmp_path):
    assert len(make_workload("fft:4")) == 15
    assert len(make_workload("gaussian:5")) == 14
    assert len(make_workload("random:10:0.5", seed=3)) == 10
    assert len(make_workload("example")) == 12
    p = tmp_path / "w.json"
    p.write_text(save_workflow(gen_fft(2)))
    assert len(make_workload(f"file:{p}")) == 5
    d = tmp_path / "w.dax"
    d.write_text(DAX)
    assert len(make_workload(f"dax:{d}")) == 3
    for bad in ("fft", "fft:x", "blob:3", "fft:6"):
        with pytest.raises(WorkloadError):
            make_workload(bad)


def test_meta_records_seed():
    g = gen_fft(8, seed=5)
    assert json.loads(save_workflow(g))["meta"]["seed"] == 5
