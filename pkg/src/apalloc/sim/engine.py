"""Discrete-time event loop: run one policy over a scenario and account losses."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace
from typing import IO

import numpy as np

from ..cluster import kmeans, route_terminals, silhouette_select
from ..history import FlowHistoryStore, FlowRecord, PositionStore
from ..model import (UNASSIGNED, Assignment, HandoverModel, InitMode, OptimizerConfig,
                     ap_loads, is_feasible)
from ..policies import (NETWORK_SIDE, POLICY_NAMES, Demand, build_problem, closest_ap,
                        predicted_demand, solve, solve_distributed, terminal_side)
from ..predictor import RandomUnderOver, train
from .scenario import ScenarioModel


class UnknownPolicyError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Controller settings for a run.

    ``gamma_ms=None`` models the decision time from the iteration budget so
    that metrics stay deterministic; pass a measured value to override.
    """

    iterations: int = 5
    init_mode: InitMode = InitMode.PREVIOUS
    parallel_width: int = 3
    picks_per_iteration: int | None = None
    clusters: int | str = "auto"
    cluster_k_range: tuple[int, ...] = (2, 3, 4, 5, 6)
    analysis_delay: float = 1.0
    phd_lag_ticks: int = 1
    retrain_period: float = 30.0
    balance: bool = True
    use_pooled: bool = True
    reserve_idle: bool = False
    terminal_sequential: bool = False
    gamma_ms: float | None = None
    check_feasibility: bool = False

    def __post_init__(self):
        if isinstance(self.init_mode, str):
            object.__setattr__(self, "init_mode", InitMode(self.init_mode))
        if self.clusters != "auto" and int(self.clusters) < 1:
            raise ValueError("clusters must be 'auto' or >= 1")
        object.__setattr__(self, "cluster_k_range", tuple(int(k) for k in self.cluster_k_range))

    def optimizer(self, tau: float, seed: int | None = None) -> OptimizerConfig:
        return OptimizerConfig(tau=tau, iterations=self.iterations, init_mode=self.init_mode,
                               parallel_width=self.parallel_width,
                               picks_per_iteration=self.picks_per_iteration, rng_seed=seed)

    def handover_model(self, technology: str) -> HandoverModel:
        return HandoverModel.for_technology(technology, self.gamma_ms, self.iterations)


@dataclass(frozen=True)
class TickStats:
    tick: int
    offered_bits: float
    carried_bits: float
    handovers: int
    fitness: float


@dataclass
class RunMetrics:
    policy: str
    seed: int
    offered_bits: float = 0.0
    carried_bits: float = 0.0
    handover_count: int = 0
    mean_handover_ms: float = 0.0
    violations: int = 0
    decisions: int = 0
    ticks: list[TickStats] = field(default_factory=list)

    @property
    def lost_bits(self) -> float:
        return self.offered_bits - self.carried_bits

    @property
    def loss_percent(self) -> float:
        return 0.0 if self.offered_bits <= 0 else 100.0 * self.lost_bits / self.offered_bits

    def row(self) -> dict:
        return {"policy": self.policy, "seed": self.seed,
                "loss_percent": self.loss_percent, "handovers": self.handover_count,
                "mean_handover_ms": self.mean_handover_ms}


def cluster_labels(scenario: ScenarioModel, config: RunConfig, seed: int = 0) -> np.ndarray:
    if scenario.n_aps == 0:
        return np.zeros(0, dtype=np.int64)
    if config.clusters == "auto":
        ks = [k for k in config.cluster_k_range if 2 <= k <= scenario.n_aps - 1]
        if not ks:
            return np.zeros(scenario.n_aps, dtype=np.int64)
        k, _ = silhouette_select(scenario.ap_pos, ks, seed=seed)
    else:
        k = min(int(config.clusters), scenario.n_aps)
    best = min((kmeans(scenario.ap_pos, k, seed=seed * 1000 + r) for r in range(3)),
               key=lambda res: res.inertia)
    return best.labels


def carried_traffic(ap: np.ndarray, cls: np.ndarray, rate: np.ndarray, q_true: np.ndarray,
                    tau: float, ap_elephant: np.ndarray, capacity: np.ndarray,
                    elephant_class: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-terminal carried rate and per-AP admitted offered load.

    A flow is lost if its terminal is unassigned, out of range of its AP, or
    is an elephant flow on a mouse AP. Overloaded APs carry every admitted
    flow at the same fraction capacity / load.
    """
    n = len(ap)
    active = cls >= 0
    linked = active & (ap >= 0)
    cols = np.where(linked, ap, 0)
    ok = linked & (q_true[np.arange(n), cols] > tau)
    eleph_flow = np.zeros(n, dtype=bool)
    eleph_flow[active] = elephant_class[cls[active]]
    ok &= ~(eleph_flow & ~ap_elephant[cols])
    admitted = np.where(ok, ap, UNASSIGNED)
    load = ap_loads(admitted, rate, len(capacity))
    frac = np.ones(len(capacity))
    over = load > capacity
    frac[over] = capacity[over] / load[over]
    carried = np.where(ok, rate * frac[cols], 0.0)
    return carried, load


class _Controller:
    """FHD/PHD bookkeeping and flow-analyzer delivery for one run."""

    def __init__(self, scenario: ScenarioModel, config: RunConfig, seed: int):
        self.s = scenario
        self.config = config
        self.seed = seed
        self.fhd = FlowHistoryStore()
        for sess in sorted(scenario.history, key=lambda x: (x.terminal, x.start)):
            self.fhd.record_flow(FlowRecord(sess.terminal, sess.flow_type, sess.start,
                                            sess.end, sess.rate))
        self.phd = PositionStore()
        self.pending = np.zeros(scenario.n_users, dtype=bool)
        self.row = {int(t): k for k, t in enumerate(scenario.terminal_ids)}
        self.starts = sorted((sess.start, sess.terminal) for sess in scenario.sessions)
        self.start_cursor = 0
        events = []
        for sess in scenario.sessions:
            events.append((sess.start + config.analysis_delay, 0, sess.terminal, sess))
            events.append((sess.end + config.analysis_delay, 1, sess.terminal, sess))
        # ends sort before starts delivered at the same instant
        events.sort(key=lambda e: (e[0], -e[1], e[2], e[3].start))
        self.events = events
        self.cursor = 0
        self.chain = None
        self.next_train = -np.inf
        self.ap_index = {int(a): k for k, a in enumerate(scenario.ap_ids)}

    def deliver(self, now: float):
        # flow starts are signalled at once; their class arrives with the analyzer
        while self.start_cursor < len(self.starts) and self.starts[self.start_cursor][0] <= now + 1e-9:
            self.pending[self.row[self.starts[self.start_cursor][1]]] = True
            self.start_cursor += 1
        while self.cursor < len(self.events) and self.events[self.cursor][0] <= now + 1e-9:
            _, kind, term, sess = self.events[self.cursor]
            if kind == 0:
                self.fhd.record_flow(FlowRecord(term, sess.flow_type, sess.start))
                self.pending[self.row[term]] = False
            else:
                self.fhd.close_flow(term, sess.end, sess.rate)
            self.cursor += 1

    def report_positions(self, tick: int, q_lagged: np.ndarray):
        t = tick * self.s.tick
        for k, term in enumerate(self.s.terminal_ids):
            cols = np.flatnonzero(q_lagged[k] > 0)
            self.phd.report(int(term), {int(self.s.ap_ids[c]): float(q_lagged[k, c]) for c in cols}, t)

    def retrain(self, now: float):
        if now >= self.next_train:
            balance = RandomUnderOver(self.seed) if self.config.balance else None
            self.chain = train(self.fhd, balance, self.s.flow_types)
            self.next_train = now + self.config.retrain_period

    def known_quality(self) -> np.ndarray:
        return self.phd.matrix(self.s.terminal_ids, self.ap_index, self.s.n_aps)

    def demand(self) -> Demand:
        return predicted_demand(self.s.terminal_ids, self.chain, self.fhd, self.s.flow_types,
                                self.config.use_pooled, self.pending, self.config.reserve_idle)


def run(scenario: ScenarioModel, policy: str, config: RunConfig | None = None,
        seed: int = 0, labels: np.ndarray | None = None, observer=None) -> RunMetrics:
    """Simulate ``policy`` over every tick of ``scenario``.

    Decisions are taken once per tick after that tick's flow events, using
    the previous tick's assignment as the warm start. ``observer``, if given,
    is called as ``observer(tick, problem, prev)`` before every
    network-side decision.
    """
    if policy not in POLICY_NAMES:
        raise UnknownPolicyError(f"unknown policy {policy!r}; choose from {', '.join(POLICY_NAMES)}")
    config = config or RunConfig()
    s = scenario
    tau = s.tau
    opt = config.optimizer(tau)
    rng = np.random.default_rng([seed, 0x5EED])
    ho = config.handover_model(s.kind.technology)
    metrics = RunMetrics(policy, seed, mean_handover_ms=ho.total(policy in NETWORK_SIDE))
    cls_all, rate_all = s.activity()
    elephant_class = np.array([f.is_elephant for f in s.flow_types], dtype=bool)
    ctl = _Controller(s, config, seed) if policy in ("predicted", "distributed") else None
    if policy == "distributed" and labels is None:
        labels = cluster_labels(s, config, seed)
    prev = Assignment.empty(s.n_users)
    prev_active = np.zeros(s.n_users, dtype=bool)
    last_load = np.zeros(s.n_aps)

    for k in range(s.n_ticks):
        now = k * s.tick
        cls, rate = cls_all[k], rate_all[k]
        active = cls >= 0
        q_true = s.true_quality(k)
        fitness = 0.0
        if policy == "real":
            demand = Demand.from_classes(cls, rate, s.flow_types)
            problem = build_problem(q_true, demand, s.ap_elephant, s.capacity, tau)
            if observer is not None:
                observer(k, problem, prev)
            res = solve(problem, opt, prev, rng, config.check_feasibility)
            assign, fitness, checked = res.assignment, res.fitness, problem
        elif ctl is not None:
            ctl.deliver(now)
            ctl.report_positions(k, s.true_quality(max(0, k - config.phd_lag_ticks)))
            ctl.retrain(now)
            q_known = ctl.known_quality()
            problem = build_problem(q_known, ctl.demand(), s.ap_elephant, s.capacity, tau)
            if observer is not None:
                observer(k, problem, prev)
            if policy == "predicted":
                res = solve(problem, opt, prev, rng, config.check_feasibility)
                assign, fitness, checked = res.assignment, res.fitness, problem
            else:
                route = route_terminals(q_known, labels)
                assign, fitness, _, checked = solve_distributed(
                    problem, labels, opt, prev, rng, config.check_feasibility, route)
        elif policy == "terminal":
            spare = np.maximum(s.capacity - last_load, 0.0)
            assign = terminal_side(q_true, spare, tau, config.terminal_sequential, rate)
            checked = None
        else:
            assign = closest_ap(q_true, tau)
            checked = None

        if checked is not None:
            metrics.decisions += 1
            if config.check_feasibility:
                metrics.violations += len(is_feasible(assign, checked).violations)

        carried, last_load = carried_traffic(assign.ap, cls, rate, q_true, tau,
                                             s.ap_elephant, s.capacity, elephant_class)
        both = active & prev_active & (assign.ap >= 0) & (prev.ap >= 0)
        handovers = int(np.count_nonzero(both & (assign.ap != prev.ap)))
        offered = float(rate[active].sum()) * s.tick
        carried_bits = min(float(carried.sum()) * s.tick, offered)  # rounding guard
        metrics.offered_bits += offered
        metrics.carried_bits += carried_bits
        metrics.handover_count += handovers
        metrics.ticks.append(TickStats(k, offered, carried_bits, handovers, fitness))
        prev, prev_active = Assignment(assign.ap, k), active
    return metrics


METRIC_FIELDS = ("policy", "seed", "loss_percent", "handovers", "mean_handover_ms")


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def write_metrics(rows, fh: IO[str]):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(METRIC_FIELDS)
    for r in rows:
        d = r.row() if isinstance(r, RunMetrics) else r
        w.writerow([_fmt(d[k]) for k in METRIC_FIELDS])


def write_timeseries(metrics: RunMetrics, fh: IO[str]):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["tick", "offered_bits", "carried_bits", "loss_percent", "handovers", "fitness"])
    for t in metrics.ticks:
        loss = 0.0 if t.offered_bits <= 0 else 100.0 * (1 - t.carried_bits / t.offered_bits)
        w.writerow([t.tick, _fmt(t.offered_bits), _fmt(t.carried_bits), _fmt(loss),
                    t.handovers, _fmt(t.fitness)])
