from fractions import Fraction

import pytest

from wfsched.dag import (DagError, Job, WorkflowDag, as_extended, merge_workflows, successors,
                         topological_order, validate)
from wfsched.workloads import two_workflows


def chain(*ids):
    return WorkflowDag([Job(i, work=Fraction(1)) for i in ids], list(zip(ids, ids[1:])))


def test_two_node_chain_is_valid():
    assert validate(chain("A", "B")).ok


def test_two_cycle_reported():
    g = WorkflowDag([Job("A"), Job("B")], [("A", "B"), ("B", "A")])
    rep = validate(g)
    assert not rep.ok
    assert sorted(rep.cycle) == ["A", "B"]


def test_longer_cycle_lists_its_nodes():
    g = WorkflowDag([Job(c) for c in "WXYZ"], [("W", "X"), ("X", "Y"), ("Y", "Z"), ("Z", "X")])
    rep = validate(g)
    assert sorted(rep.cycle) == ["X", "Y", "Z"]


def test_self_loop_and_dangling_edge():
    g = WorkflowDag([Job("A")], [("A", "A"), ("A", "ghost")])
    rep = validate(g)
    text = " ".join(rep.errors)
    assert "self" in text and "ghost" in text


def test_empty_workflow_rejected():
    assert not validate(WorkflowDag([])).ok


def test_fig1_validates(fig1):
    assert validate(fig1).ok
    assert len(fig1.real_jobs) == 12


def test_fig1_middle_jobs_independent(fig1):
    # n3, n8, n9 have no path between any two of them
    def reach(a):
        seen, stack = set(), [a]
        while stack:
            for s in fig1.successors(stack.pop()):
                if s not in seen:
                    seen.add(s)
                    stack.append(s)
        return seen
    for a in ("n3", "n8", "n9"):
        assert not {"n3", "n8", "n9"} - {a} & reach(a)


def test_pseudo_job_must_be_empty():
    with pytest.raises(DagError):
        Job("p", work=Fraction(1), is_pseudo=True)
    with pytest.raises(DagError):
        Job("j", work=Fraction(-1))


def test_merge_two_workflows_matches_extended_layout():
    wa, wb = two_workflows()
    ext = merge_workflows([wa, wb], entry_id="n0", exit_id="n13")
    assert len(ext.jobs) == 14
    assert successors(ext.base, "n0") == ["n1", "n7"]
    assert ext.base.predecessors("n0") == []
    assert ext.base.successors("n13") == []
    assert set(ext.base.predecessors("n13")) == set(wa.exits()) | set(wb.exits())
    assert set(wa.edges) | set(wb.edges) <= set(ext.base.edges)


def test_merge_single_job_gives_three_chain():
    ext = merge_workflows([WorkflowDag([Job("a", work=Fraction(3))])])
    assert ext.topological_order() == ["_entry", "a", "_exit"]


def test_merge_two_single_jobs():
    ext = merge_workflows([WorkflowDag([Job("a")]), WorkflowDag([Job("b")])])
    assert ext.successors("_entry") == ["a", "b"]
    assert ext.predecessors("_exit") == ["a", "b"]


def test_merge_errors():
    with pytest.raises(DagError):
        merge_workflows([])
    with pytest.raises(DagError):
        merge_workflows([chain("a"), chain("a")])


def test_strip_recovers_inputs():
    ws = two_workflows()
    back = merge_workflows(ws).strip()
    assert [set(w.edges) for w in back] == [set(w.edges) for w in ws]
    assert [list(w.jobs) for w in back] == [list(w.jobs) for w in ws]


def test_every_job_between_entry_and_exit(fig1):
    ext = as_extended(fig1)
    down, up = {ext.entry}, {ext.exit}
    for j in ext.topological_order():
        if any(p in down for p in ext.predecessors(j)):
            down.add(j)
    for j in reversed(ext.topological_order()):
        if any(s in up for s in ext.successors(j)):
            up.add(j)
    assert all(j.id in down and j.id in up for j in ext.real_jobs)


def test_topological_order_chain_and_ties():
    assert topological_order(chain("A", "B", "C")) == ["A", "B", "C"]
    g = WorkflowDag([Job("n10"), Job("n2"), Job("n1")])
    assert topological_order(g) == ["n1", "n2", "n10"]


def test_topological_order_respects_edges(fig1):
    order = topological_order(fig1)
    pos = {j: i for i, j in enumerate(order)}
    assert sorted(order) == sorted(fig1.jobs)
    assert all(pos[a] < pos[b] for a, b in fig1.edges)


def test_exit_has_no_successors(fig1):
    assert fig1.successors("n12") == []


def test_unknown_job():
    with pytest.raises(DagError):
        chain("A").successors("Z")


def test_cyclic_topological_order_raises():
    with pytest.raises(DagError):
        topological_order(WorkflowDag([Job("A"), Job("B")], [("A", "B"), ("B", "A")]))
