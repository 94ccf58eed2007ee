"""Wall-clock cost of a controller decision, the gamma term of a handover."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..model import Assignment, InitMode, OptimizerConfig, Problem
from ..optimizer import initial_assignment, local_search
from ..policies import Demand, build_problem
from .scenario import ScenarioConfig, generate_scenario

FULL_SCALE = ScenarioConfig(area=(700.0, 500.0), ap_count=834, user_count=90, duration=60.0)


@dataclass(frozen=True)
class GammaReport:
    iterations: tuple[int, ...]
    seconds: tuple[float, ...]  # fastest wall time of one decision per budget
    per_iteration_ms: float     # slope of the least-squares fit
    intercept_ms: float
    r_squared: float
    per_decision_ms: float      # at ``decision_iterations``
    decision_iterations: int

    def gamma_ms(self) -> float:
        return self.per_decision_ms


def full_scale_problem(seed: int = 0, tick: int = 30) -> tuple[Problem, Assignment]:
    """One busy tick of a full-size scenario, every terminal carrying a flow.

    Also returns the previous tick's solution as a warm start.
    """
    sc = generate_scenario(FULL_SCALE.with_seed(seed))
    rng = np.random.default_rng(seed)
    cls = rng.integers(len(sc.flow_types), size=sc.n_users)
    rate = np.array([sc.flow_types[c].mean_rate for c in cls])
    demand = Demand.from_classes(cls, rate, sc.flow_types)
    cfg = OptimizerConfig(tau=sc.tau, iterations=5, rng_seed=seed)
    prev_problem = build_problem(sc.true_quality(tick - 1), demand, sc.ap_elephant, sc.capacity, sc.tau)
    prev = local_search(prev_problem, cfg, initial_assignment(prev_problem, InitMode.EMPTY)).assignment
    problem = build_problem(sc.true_quality(tick), demand, sc.ap_elephant, sc.capacity, sc.tau)
    return problem, prev


def _decide(problem: Problem, prev: Assignment, iterations: int, seed: int) -> float:
    cfg = OptimizerConfig(tau=problem.tau, iterations=iterations, init_mode=InitMode.PREVIOUS)
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    local_search(problem, cfg, initial_assignment(problem, InitMode.PREVIOUS, prev), rng=rng)
    return time.perf_counter() - t0


def measure_gamma(problem: Problem | None = None, prev: Assignment | None = None,
                  grid=(5, 10, 20, 40, 80), repeats: int = 25,
                  decision_iterations: int = 5) -> GammaReport:
    """Time full decisions (initial repair plus search) across iteration budgets.

    Budgets are interleaved over ``repeats`` rounds after a warm-up call so
    drift hits them evenly. The line is fitted to the per-budget minimum,
    the least noisy estimate; the per-decision figure is a median.
    """
    if problem is None:
        problem, prev = full_scale_problem()
    prev = Assignment.empty(problem.n) if prev is None else prev
    budgets = sorted(set(int(g) for g in grid) | {decision_iterations})
    samples = {it: [] for it in budgets}
    for it in budgets:
        _decide(problem, prev, it, 0)
    for r in range(repeats):
        for it in budgets:
            samples[it].append(_decide(problem, prev, it, r))
    best = {it: min(v) for it, v in samples.items()}
    med = {it: float(np.median(v)) for it, v in samples.items()}
    xs = np.array([int(g) for g in grid], dtype=float)
    ys = np.array([best[int(g)] for g in grid]) * 1e3
    slope, intercept = np.polyfit(xs, ys, 1)
    resid = ys - (slope * xs + intercept)
    ss_tot = float(((ys - ys.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return GammaReport(tuple(int(g) for g in grid), tuple(best[int(g)] for g in grid),
                       float(slope), float(intercept), r2, med[decision_iterations] * 1e3,
                       decision_iterations)
