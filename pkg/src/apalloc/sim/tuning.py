"""Iteration-budget sweeps: fitness against iterations for each start mode."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..model import Assignment, InitMode, OptimizerConfig, Problem
from ..optimizer import initial_assignment, local_search
from .engine import RunConfig, run
from .scenario import ScenarioModel


@dataclass(frozen=True)
class Instance:
    tick: int
    problem: Problem
    prev: Assignment


@dataclass(frozen=True)
class TunePoint:
    seed: int
    init_mode: str
    iterations: int
    mean_fitness: float
    instances: int

    def row(self) -> dict:
        return {"seed": self.seed, "init_mode": self.init_mode, "iterations": self.iterations,
                "mean_fitness": self.mean_fitness, "instances": self.instances}


TUNE_FIELDS = ("seed", "init_mode", "iterations", "mean_fitness", "instances")


def capture_instances(scenario: ScenarioModel, config: RunConfig | None = None, seed: int = 0,
                      every: int = 10, policy: str = "predicted") -> list[Instance]:
    """Decision problems met by a run, sampled every ``every`` ticks.

    Ticks where nobody carries demand are skipped.
    """
    if every < 1:
        raise ValueError("every must be >= 1")
    out: list[Instance] = []

    def grab(tick, problem, prev):
        if tick % every == 0 and problem.rate.any():
            out.append(Instance(tick, problem, prev))

    run(scenario, policy, config, seed=seed, observer=grab)
    return out


def sweep(instances, modes, grid, seed: int = 0, parallel_width: int = 3) -> list[TunePoint]:
    """Mean best fitness after each budget in ``grid``, per start mode.

    One search per (instance, mode) runs to the largest budget; thanks to
    the prefix property its trace holds every smaller budget too. Both
    modes share random numbers per instance.
    """
    grid = sorted(set(int(g) for g in grid))
    if not grid:
        raise ValueError("iteration grid is empty")
    if grid[0] < 0:
        raise ValueError("iteration counts must be >= 0")
    modes = [InitMode(m) for m in modes]
    if not modes:
        raise ValueError("no init modes given")
    top = grid[-1]
    points = []
    for mode in modes:
        sums = np.zeros(len(grid))
        for m, inst in enumerate(instances):
            cfg = OptimizerConfig(tau=inst.problem.tau, iterations=top, init_mode=mode,
                                  parallel_width=parallel_width)
            start = initial_assignment(inst.problem, mode, inst.prev)
            res = local_search(inst.problem, cfg, start, rng=np.random.default_rng([seed, m]))
            fit = [f for _, f, _ in res.trace]
            # a run that stopped early keeps its last value
            sums += [fit[min(g, len(fit) - 1)] for g in grid]
        n = len(instances)
        for g, total in zip(grid, sums):
            points.append(TunePoint(seed, mode.value, g, float(total / n) if n else 0.0, n))
    return points
