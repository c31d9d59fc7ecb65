import random
from fractions import Fraction

import pytest

from wfsched.budget import budget_levels, split_uniform
from wfsched.dag import Job, WorkflowDag
from wfsched.mip import (HorizonTooSmall, Infeasible, InstanceTooLarge, build_model, decode, encode,
                         evaluate, export_lp, parse_lp, solve_bruteforce, solve_milp)
from wfsched.platform import VmCatalog, VmInstance, VmType, running_time
from wfsched.ranking import priorities
from wfsched.scheduler import Assignment, Schedule, schedule_greedy, validate_schedule


def one_vm(price=1):
    return VmCatalog.one_each([VmType("v", 1, Fraction(1), Fraction(price))])


def sub(g, ids):
    ids = set(ids)
    return WorkflowDag([g.jobs[j] for j in sorted(ids, key=lambda s: int(s[1:]))],
                       [e for e in g.edges if set(e) <= ids])


def tiny_instance(rng, n_jobs, n_vms):
    types = [VmType(f"k{i}", rng.choice([1, 2, 4]), Fraction(1), Fraction(rng.randint(1, 6)))
             for i in range(n_vms)]
    cat = VmCatalog(types, [VmInstance(f"i{i}", t) for i, t in enumerate(types)])
    ids = [f"j{i}" for i in range(n_jobs)]
    edges = [(ids[a], ids[b]) for a in range(n_jobs) for b in range(a + 1, n_jobs) if rng.random() < 0.35]
    return WorkflowDag([Job(i, work=Fraction(rng.randint(1, 5))) for i in ids], edges), cat


def test_single_job_model():
    g = WorkflowDag([Job("a", work=Fraction(2))])
    m = build_model(g, one_vm(), 100, 5)
    assert len(m.x) == 5 and m.num_variables == 6
    assert solve_bruteforce(g, one_vm(), 100, 5).makespan == 2
    assert solve_milp(m)[1] == 2
    lp = export_lp(m)
    assert sum(1 for ln in lp.splitlines() if ln.startswith(" assign_") and ln.endswith("= 1")) == 1


def test_chain_on_one_vm():
    g = WorkflowDag([Job("A", work=Fraction(2)), Job("B", work=Fraction(2))], [("A", "B")])
    assert solve_bruteforce(g, one_vm(), 100, 6).makespan == 4
    assert solve_milp(build_model(g, one_vm(), 100, 6))[1] == 4


def test_example_subgraph_oracle_equals_milp(fig1, vms3):
    g = sub(fig1, ["n7", "n11", "n12"])
    best = solve_bruteforce(g, vms3, 10_000, 30)
    vals, d = solve_milp(build_model(g, vms3, 10_000, 30))
    assert best.makespan == d == 15
    assert validate_schedule(decode(build_model(g, vms3, 10_000, 30), vals, vms3), g, vms3, 10_000).ok


def test_example_model_counts(fig1, vms3):
    m = build_model(fig1, vms3, 500, 100)
    J, V, T, E = 12, 3, 100, len(fig1.edges)
    assert m.num_variables == J * V * T + 1 == 3601
    assert m.family_counts() == {"assign": J, "cpu": J, "mem": J, "prec": E, "excl": V * T,
                                 "span": J, "budget": 1}


def test_lp_round_trip(fig1, vms3):
    m = build_model(fig1, vms3, 500, 100)
    text = export_lp(m)
    parsed = parse_lp(text)
    assert len(parsed.variables) == m.num_variables
    assert parsed.family_counts() == m.family_counts()
    assert [(r.name, r.coeffs, r.sense, r.rhs) for r in parsed.rows] == \
           [(r.name, dict(r.coeffs), r.sense, r.rhs) for r in m.rows]
    assert parsed.objective == "d" and parsed.sense == "minimize"
    assert parsed.generals == ["d"] and parsed.bounds == ["0 <= d <= 100"]


def test_lp_layout_and_determinism(fig1, vms3):
    a = export_lp(build_model(fig1, vms3, 500, 60))
    b = export_lp(build_model(fig1, vms3, 500, 60))
    assert a == b
    heads = [ln for ln in a.splitlines() if not ln.startswith(" ")]
    for section in ("Minimize", "Subject To", "Bounds", "Binary", "Generals", "End"):
        assert section in heads
    assert max(len(ln) for ln in a.splitlines()) <= 110


def test_fractional_prices_round_trip():
    t = VmType("t", 1, Fraction(1), Fraction(29, 2500))
    cat = VmCatalog.one_each([t])
    g = WorkflowDag([Job("a", work=Fraction(3))])
    m = build_model(g, cat, Fraction(1, 10), 4)
    budget_row = parse_lp(export_lp(m)).rows[-1]
    assert budget_row.coeffs["x_a_t_0"] == Fraction(87, 2500) and budget_row.rhs == Fraction(1, 10)


def test_greedy_schedule_is_a_feasible_point(fig1, vms3):
    m = build_model(fig1, vms3, 500, 100)
    s = schedule_greedy(fig1, vms3, split_uniform(fig1, vms3, 500), priorities(fig1, vms3, "plain"))
    assert evaluate(m, encode(m, s)) == []


def test_exclusivity_rows_equal_no_overlap():
    rng = random.Random(11)
    for _ in range(300):
        g, cat = tiny_instance(rng, rng.randint(2, 4), rng.randint(1, 2))
        g = WorkflowDag(list(g.jobs.values()))  # no precedence, only packing matters
        T = 12
        m = build_model(g, cat, 10_000, T)
        s = Schedule()
        for job in g.jobs.values():
            inst = rng.choice(cat.instances)
            dur = running_time(job, inst.type)
            start = rng.randint(0, T - dur)
            s.assignments[job.id] = Assignment(job.id, inst.id, inst.type.name, start, start + dur,
                                               inst.type.price * dur)
        excl_ok = not [n for n in evaluate(m, encode(m, s)) if n.startswith("excl")]
        assert excl_ok == validate_schedule(s, g, cat).ok


def test_horizon_too_small(fig1, vms3):
    with pytest.raises(HorizonTooSmall):
        build_model(fig1, vms3, 500, 10)
    with pytest.raises(HorizonTooSmall):
        build_model(WorkflowDag([Job("a", work=Fraction(3))]), one_vm(), 10, 2)


def test_default_horizon_is_twice_heft(fig1, vms3):
    assert build_model(fig1, vms3, 500).horizon == 98


def test_oracle_guards(fig1, vms3):
    with pytest.raises(InstanceTooLarge):
        solve_bruteforce(fig1, vms3, 500, 30)
    g = WorkflowDag([Job("a", work=Fraction(2))])
    with pytest.raises(InstanceTooLarge):
        solve_bruteforce(g, one_vm(), 10, 31)
    with pytest.raises(Infeasible):
        solve_bruteforce(g, one_vm(price=5), 9, 10)
    with pytest.raises(Infeasible):
        solve_bruteforce(g, one_vm(), 10, 1)


def test_oracle_single_job_fastest_affordable(fig1, vms3):
    g = WorkflowDag([fig1.jobs["n4"]])  # costs 39 / 40 / 90 for 13 / 8 / 15 slots
    best = solve_bruteforce(g, vms3, 100, 30).assignments["n4"]
    assert (best.vm, best.start) == ("VM2", 0)
    assert solve_bruteforce(g, vms3, 39, 30).assignments["n4"].vm == "VM1"


def test_oracle_packs_independent_jobs():
    g = WorkflowDag([Job("a", work=Fraction(3)), Job("b", work=Fraction(5))])
    s = solve_bruteforce(g, one_vm(), 100, 10)
    assert s.makespan == 8


def test_oracle_not_worse_than_greedy_on_example_chain(fig1, vms3):
    g = sub(fig1, ["n7", "n12"])
    for D in (53, 60, 80, 200):
        opt = solve_bruteforce(g, vms3, D, 30)
        gr = schedule_greedy(g, vms3, split_uniform(g, vms3, D), priorities(g, vms3))
        assert opt.makespan <= gr.makespan


def test_oracle_matches_milp_on_random_tiny():
    rng = random.Random(5)
    for _ in range(6):
        g, cat = tiny_instance(rng, 4, 2)
        D = budget_levels(g, cat).at(Fraction(1, 2))
        opt = solve_bruteforce(g, cat, D, 20)
        _, d = solve_milp(build_model(g, cat, D, 20))
        assert opt.makespan == d
