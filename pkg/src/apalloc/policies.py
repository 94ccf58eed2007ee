"""The five AP assignment policies and the demand views they decide from.

Network-side policies solve the constrained problem with the local search:
``real`` from ground-truth demand, ``predicted`` and ``distributed`` from
flow-history predictions and last-known link qualities. The two baselines
are terminal-driven: ``terminal`` picks the in-range AP advertising the most
spare capacity and ``closest`` simply joins the strongest AP.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cluster import SubWorld, decompose, decomposition_mask
from .history import FlowHistoryStore, PositionStore
from .model import UNASSIGNED, Assignment, FlowType, OptimizerConfig, Problem
from .optimizer import SearchResult, initial_assignment, local_search
from .predictor import TransitionChain, expected_rate, fallback_type, predict_next

POLICY_NAMES = ("real", "predicted", "distributed", "terminal", "closest")
NETWORK_SIDE = frozenset({"real", "predicted", "distributed"})


@dataclass(frozen=True)
class Demand:
    """Per-terminal demand at one event: class id (-1 none), rate, elephant flag."""

    flow_type: np.ndarray
    rate: np.ndarray
    elephant: np.ndarray

    @classmethod
    def from_classes(cls, classes, rates, flow_types: Sequence[FlowType]) -> "Demand":
        classes = np.asarray(classes, dtype=np.int64)
        eleph = np.array([c >= 0 and flow_types[c].is_elephant for c in classes], dtype=bool)
        return cls(classes, np.where(classes >= 0, rates, 0.0).astype(float), eleph)

    @property
    def active(self) -> np.ndarray:
        return self.flow_type >= 0


def build_problem(q, demand: Demand, ap_elephant, capacity, tau: float,
                  terminal_ids=None, ap_ids=None) -> Problem:
    """Problem over all terminals; rows without demand get no usable link."""
    q = np.where(demand.active[:, None], q, 0.0)
    return Problem(q, demand.rate, demand.elephant, ap_elephant, capacity, tau,
                   terminal_ids, ap_ids)


def predicted_demand(terminals: Sequence[int], chain: TransitionChain, fhd: FlowHistoryStore,
                     flow_types: Sequence[FlowType], use_pooled: bool = True,
                     pending=None, include_idle: bool = True) -> Demand:
    """Controller-side demand derived only from the flow history.

    ``pending`` flags terminals that signalled a new flow the analyzer has
    not classified yet; their class is predicted from the chain. A terminal
    whose latest recorded flow is still open keeps that class. Idle
    terminals get a predicted next flow only with ``include_idle``. The
    cheapest mouse class is the cold-start fallback; rates are the
    history's class averages.
    """
    by_id = {f.id: f for f in flow_types}
    fallback = fallback_type(flow_types)
    pending = np.zeros(len(terminals), dtype=bool) if pending is None else np.asarray(pending, bool)
    classes = np.full(len(terminals), -1, dtype=np.int64)
    rates = np.zeros(len(terminals))
    for k, t in enumerate(terminals):
        last = fhd.last(int(t))
        if not pending[k] and last is not None and last.is_open:
            ft = by_id[last.flow_type]
        elif pending[k] or include_idle:
            pred = predict_next(chain, int(t), fhd, None if last is None else last.flow_type,
                                use_pooled=use_pooled)
            ft = fallback if pred is None else pred.flow_type
        else:
            continue
        classes[k] = ft.id
        rates[k] = expected_rate(ft, fhd)
    return Demand.from_classes(classes, rates, flow_types)


def solve(problem: Problem, config: OptimizerConfig, prev: Assignment | None = None,
          rng: np.random.Generator | None = None, check: bool = False) -> SearchResult:
    start = initial_assignment(problem, config.init_mode,
                               prev if prev is not None else Assignment.empty(problem.n))
    return local_search(problem, config, start, rng=rng, check=check)


def centralized_real(problem: Problem, config: OptimizerConfig, prev=None, rng=None,
                     check: bool = False) -> SearchResult:
    """Upper bound: the search run on the true demand and link qualities."""
    return solve(problem, config, prev, rng, check)


def centralized_predicted(world_q_known, terminals, chain, fhd, flow_types, ap_elephant,
                          capacity, config: OptimizerConfig, prev=None, rng=None,
                          check: bool = False, use_pooled: bool = True) -> tuple[SearchResult, Problem]:
    """One controller for every AP, deciding from history and last-known qualities."""
    demand = predicted_demand(terminals, chain, fhd, flow_types, use_pooled)
    problem = build_problem(world_q_known, demand, ap_elephant, capacity, config.tau)
    return solve(problem, config, prev, rng, check), problem


def solve_distributed(problem: Problem, labels, config: OptimizerConfig,
                      prev: Assignment | None = None, rng: np.random.Generator | None = None,
                      check: bool = False, route=None) -> tuple[Assignment, float, list[SubWorld], Problem]:
    """Independent searches per AP cluster, stitched into one assignment.

    Returns the global assignment, its fitness, the sub-worlds, and the
    decomposed problem (links restricted to each terminal's own cluster)
    the assignment is feasible for.
    """
    subs = decompose(problem, labels, route)
    rng = np.random.default_rng(config.rng_seed) if rng is None else rng
    ap = np.full(problem.n, UNASSIGNED, dtype=np.int64)
    fitness = 0.0
    for sub, sub_rng in zip(subs, rng.spawn(len(subs))):
        local_prev = None
        if prev is not None and len(sub.rows):
            col_of = {int(c): k for k, c in enumerate(sub.ap_cols)}
            local_prev = Assignment(np.array([col_of.get(int(prev.ap[r]), UNASSIGNED)
                                              for r in sub.rows], dtype=np.int64))
        res = solve(sub.problem, config, local_prev, sub_rng, check)
        fitness += res.fitness
        linked = res.assignment.ap >= 0
        ap[sub.rows[linked]] = sub.ap_cols[res.assignment.ap[linked]]
    restricted = problem.masked(decomposition_mask(problem, subs))
    return Assignment(ap), fitness, subs, restricted


def distributed_predicted(world_q_known, terminals, labels, chain, fhd, flow_types,
                          ap_elephant, capacity, config: OptimizerConfig, prev=None, rng=None,
                          check: bool = False, use_pooled: bool = True):
    demand = predicted_demand(terminals, chain, fhd, flow_types, use_pooled)
    problem = build_problem(world_q_known, demand, ap_elephant, capacity, config.tau)
    return solve_distributed(problem, labels, config, prev, rng, check)


def terminal_side(q, spare, tau: float, sequential: bool = False, rates=None,
                  active=None) -> Assignment:
    """Each terminal joins the in-range AP advertising the most spare capacity.

    All terminals see the same snapshot, so neighbours herd onto the same AP.
    With ``sequential`` the snapshot is decremented by each choice in
    terminal order instead. Ties go to the better link, then the lower AP.
    """
    q = np.asarray(q, dtype=float)
    spare = np.array(spare, dtype=float)
    n, l = q.shape
    rates = np.zeros(n) if rates is None else np.asarray(rates, dtype=float)
    active = np.ones(n, dtype=bool) if active is None else np.asarray(active, dtype=bool)
    ap = np.full(n, UNASSIGNED, dtype=np.int64)
    for i in range(n):
        if not active[i]:
            continue
        inrange = np.flatnonzero(q[i] > tau)
        if inrange.size == 0:
            continue
        order = np.lexsort((inrange, -q[i, inrange], -spare[inrange]))
        j = inrange[order[0]]
        ap[i] = j
        if sequential:
            spare[j] = max(spare[j] - rates[i], 0.0)
    return Assignment(ap)


def closest_ap(q, tau: float = 0.0, active=None) -> Assignment:
    """Strongest in-range AP for every terminal, regardless of type or load."""
    q = np.asarray(q, dtype=float)
    n = q.shape[0]
    active = np.ones(n, dtype=bool) if active is None else np.asarray(active, dtype=bool)
    ap = np.full(n, UNASSIGNED, dtype=np.int64)
    if q.shape[1] == 0:
        return Assignment(ap)
    best = np.argmax(q, axis=1)  # first max = lowest AP id on ties
    ok = active & (q[np.arange(n), best] > tau)
    ap[ok] = best[ok]
    return Assignment(ap)
