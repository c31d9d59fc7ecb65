"""Job priorities: plain and stationary-weighted upward ranks."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Mapping

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dag import ExtendedDag, JobId, WorkflowDag, id_key
from .platform import VmCatalog, eligible_types, running_time

DENSE_LIMIT = 2000


class UnschedulableJob(ValueError):
    """A job has no VM type able to host it."""


class NumericalError(RuntimeError):
    def __init__(self, msg: str, residual: float):
        super().__init__(f"{msg} (residual {residual:.3e})")
        self.residual = residual


def avg_exec_time(job, catalog: VmCatalog, whole_slots: bool = True) -> Fraction:
    """Mean running time over the eligible VM types that have instances.

    With ``whole_slots`` the mean is rounded up to an integer slot count.
    """
    if job.is_pseudo:
        return Fraction(0)
    types = eligible_types(job, catalog)
    if not types:
        raise UnschedulableJob(f"job {job.id!r} fits no VM type in the pool")
    mean = Fraction(sum(running_time(job, t) for t in types), len(types))
    return Fraction(math.ceil(mean)) if whole_slots else mean


def _base(dag) -> WorkflowDag:
    return dag.base if isinstance(dag, ExtendedDag) else dag


def plain_upward_rank(dag, catalog: VmCatalog, whole_slots: bool = True) -> dict[JobId, Fraction]:
    g = _base(dag)
    ranks: dict[JobId, Fraction] = {}
    for j in reversed(g.topological_order()):
        succ = g._succ[j]
        best = max((ranks[i] for i in succ), default=Fraction(0))
        ranks[j] = avg_exec_time(g.jobs[j], catalog, whole_slots) + best
    return ranks


@dataclass
class TransitionMatrix:
    """Row-stochastic matrix of the uniform random walk (back edges included)."""

    nodes: list[JobId]
    matrix: sp.csr_matrix

    @property
    def index(self) -> dict[JobId, int]:
        return {n: i for i, n in enumerate(self.nodes)}

    def prob(self, src: JobId, dst: JobId) -> float:
        idx = self.index
        return float(self.matrix[idx[src], idx[dst]])

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


def build_transition_matrix(dag) -> TransitionMatrix:
    """Uniform transitions to successors; exits jump back to entries.

    For an :class:`ExtendedDag` the only back edge is pseudo exit to pseudo
    entry. For a bare workflow every exit links to every entry.
    """
    g = _base(dag)
    nodes = list(g.jobs)
    idx = {n: i for i, n in enumerate(nodes)}
    if isinstance(dag, ExtendedDag):
        back = {dag.exit: [dag.entry]}
    else:
        entries = g.entries()
        back = {x: entries for x in g.exits()}
    rows, cols, vals = [], [], []
    for j in nodes:
        targets = g._succ[j] or back.get(j, [])
        if not targets:
            raise ValueError(f"node {j!r} has no successor and no back edge")
        p = 1.0 / len(targets)
        for t in targets:
            rows.append(idx[j])
            cols.append(idx[t])
            vals.append(p)
    n = len(nodes)
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return TransitionMatrix(nodes, mat)


class StationaryVector(Mapping):
    """Stationary probabilities keyed by node, with the achieved residual."""

    def __init__(self, nodes, values, residual: float = 0.0):
        self.nodes = list(nodes)
        self.array = np.asarray(values, dtype=float)
        self.residual = residual
        self._idx = {n: i for i, n in enumerate(self.nodes)}

    def __getitem__(self, node) -> float:
        return float(self.array[self._idx[node]])

    def __iter__(self) -> Iterator:
        return iter(self.nodes)

    def __len__(self) -> int:
        return len(self.nodes)

    def scaled(self, factor: float) -> "StationaryVector":
        return StationaryVector(self.nodes, self.array * factor, self.residual)


def stationary_residual(P: TransitionMatrix, pi: np.ndarray) -> float:
    return float(np.max(np.abs(P.matrix.T @ pi - pi)))


def stationary_distribution(P: TransitionMatrix, method: str = "auto", tol: float = 1e-9,
                            max_iter: int = 100_000) -> StationaryVector:
    """Solve pi P = pi with sum(pi) = 1.

    ``auto`` uses a dense solve up to ``DENSE_LIMIT`` nodes and a sparse LU
    solve above it. ``power`` iterates the lazy chain (P + I) / 2, which has
    the same stationary vector but no periodicity, so it converges
    geometrically. ``cesaro`` averages plain power iterates; it also copes
    with periodic chains but its error only shrinks like 1/k.
    """
    n = len(P.nodes)
    if method == "auto":
        method = "dense" if n <= DENSE_LIMIT else "sparse"
    if method == "dense":
        A = P.dense().T - np.eye(n)
        A[-1, :] = 1.0
        b = np.zeros(n)
        b[-1] = 1.0
        try:
            pi = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            raise NumericalError("singular stationary system", float("inf")) from None
    elif method == "sparse":
        A = (P.matrix.T - sp.identity(n, format="csr")).tolil()
        A[n - 1, :] = np.ones(n)
        b = np.zeros(n)
        b[-1] = 1.0
        pi = spla.spsolve(A.tocsc(), b)
        if not np.all(np.isfinite(pi)):
            raise NumericalError("singular stationary system", float("inf"))
    elif method == "power":
        pi = _lazy_power(P, tol, max_iter)
    elif method == "cesaro":
        pi = _cesaro_power(P, tol, max_iter)
    else:
        raise ValueError(f"unknown method {method!r}")
    res = stationary_residual(P, pi)
    if res > tol or abs(pi.sum() - 1.0) > tol:
        raise NumericalError("stationary solve did not converge", res)
    return StationaryVector(P.nodes, pi, res)


def _lazy_power(P: TransitionMatrix, tol: float, max_iter: int) -> np.ndarray:
    PT = P.matrix.T.tocsr()
    x = np.full(len(P.nodes), 1.0 / len(P.nodes))
    for k in range(1, max_iter + 1):
        x = 0.5 * (x + PT @ x)
        if k % 16 == 0 and np.max(np.abs(PT @ x - x)) <= tol / 4:
            break
    res = float(np.max(np.abs(PT @ x - x)))
    if res > tol:
        raise NumericalError(f"power iteration stalled after {max_iter} steps", res)
    return x / x.sum()


def _cesaro_power(P: TransitionMatrix, tol: float, max_iter: int) -> np.ndarray:
    n = len(P.nodes)
    PT = P.matrix.T.tocsr()
    x = np.full(n, 1.0 / n)
    acc = x.copy()
    avg = x
    for k in range(1, max_iter + 1):
        x = PT @ x
        acc += x
        avg = acc / (k + 1)
        if k % 16 == 0 or k == max_iter:
            if np.max(np.abs(PT @ avg - avg)) <= tol:
                break
    res = float(np.max(np.abs(PT @ avg - avg)))
    if res > tol:
        raise NumericalError(f"power iteration stalled after {max_iter} steps", res)
    return avg / avg.sum()


def weighted_upward_rank(dag, catalog: VmCatalog, pi: Mapping[JobId, float],
                         whole_slots: bool = True) -> dict[JobId, float]:
    """Upward rank with each job's mean runtime scaled by its stationary weight."""
    g = _base(dag)
    ranks: dict[JobId, float] = {}
    for j in reversed(g.topological_order()):
        best = max((ranks[i] for i in g._succ[j]), default=0.0)
        rbar = float(avg_exec_time(g.jobs[j], catalog, whole_slots))
        ranks[j] = rbar * pi[j] + best
    return ranks


@dataclass
class PriorityList:
    order: list[JobId]
    ranks: dict[JobId, float]

    def __iter__(self):
        return iter(self.order)

    def __len__(self):
        return len(self.order)


def priority_list(ranks: Mapping[JobId, float], dag=None, rtol: float = 1e-10) -> PriorityList:
    """Sort jobs by descending rank; near-equal ranks fall back to id order.

    Pseudo jobs are dropped when ``dag`` is given. Ranks within ``rtol`` of
    the first member of a run are treated as tied so that float noise from
    rescaling cannot reorder jobs.
    """
    g = _base(dag) if dag is not None else None
    ids = [j for j in ranks if g is None or not g.jobs[j].is_pseudo]
    ids.sort(key=lambda j: (-float(ranks[j]), id_key(j)))
    order: list[JobId] = []
    i = 0
    while i < len(ids):
        head = float(ranks[ids[i]])
        k = i + 1
        while k < len(ids) and head - float(ranks[ids[k]]) <= rtol * abs(head):
            k += 1
        order.extend(sorted(ids[i:k], key=id_key))
        i = k
    return PriorityList(order, {j: ranks[j] for j in order})


def priorities(dag, catalog: VmCatalog, scheme: str = "plain", whole_slots: bool = True,
               pi_scale: float = 1.0) -> PriorityList:
    """Rank every real job of ``dag`` under ``scheme`` ("plain" or "weighted")."""
    from .dag import as_extended
    ext = as_extended(dag)
    if scheme == "plain":
        ranks = plain_upward_rank(ext, catalog, whole_slots)
    elif scheme == "weighted":
        pi = stationary_distribution(build_transition_matrix(ext))
        if pi_scale != 1.0:
            pi = pi.scaled(pi_scale)
        ranks = weighted_upward_rank(ext, catalog, pi, whole_slots)
    else:
        raise ValueError(f"unknown priority scheme {scheme!r}")
    return priority_list(ranks, ext)
