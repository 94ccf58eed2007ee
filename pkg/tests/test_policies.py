import numpy as np
import pytest

from apalloc.history import FlowHistoryStore, FlowRecord
from apalloc.model import (PRE5G_FLOW_TYPES, Assignment, InitMode, OptimizerConfig, is_feasible,
                           total_fitness)
from apalloc.optimizer import brute_force_oracle, initial_assignment
from apalloc.policies import (Demand, build_problem, centralized_predicted, centralized_real,
                              closest_ap, predicted_demand, terminal_side)
from apalloc.predictor import fallback_type, train

from conftest import random_problem

TYPES = PRE5G_FLOW_TYPES
V = next(f.id for f in TYPES if f.is_elephant)
M = next(f.id for f in TYPES if not f.is_elephant)


def history(seqs, open_last=False):
    store = FlowHistoryStore()
    for t, seq in seqs.items():
        for k, c in enumerate(seq):
            end = None if open_last and k == len(seq) - 1 else k + 0.5
            store.record_flow(FlowRecord(t, c, float(k), end))
    return store


class TestPredictedDemand:
    def test_alternating_history_predicts_video(self):
        fhd = history({1: [V, M, V, M]})
        d = predicted_demand([1], train(fhd, flow_types=TYPES), fhd, TYPES, pending=[True])
        assert d.flow_type.tolist() == [V] and d.elephant.tolist() == [True]
        assert d.rate[0] == TYPES[V].mean_rate

    def test_cold_start_falls_back_to_mouse(self):
        fhd = history({})
        d = predicted_demand([5], train(fhd, flow_types=TYPES), fhd, TYPES, pending=[True])
        assert d.flow_type.tolist() == [fallback_type(TYPES).id]
        assert not d.elephant[0]

    def test_open_flow_keeps_its_class(self):
        fhd = history({1: [V, M, V, M]}, open_last=True)
        d = predicted_demand([1], train(fhd, flow_types=TYPES), fhd, TYPES)
        assert d.flow_type.tolist() == [M]

    def test_idle_terminals(self):
        fhd = history({1: [V, M, V, M]})
        chain = train(fhd, flow_types=TYPES)
        assert predicted_demand([1], chain, fhd, TYPES, include_idle=False).flow_type.tolist() == [-1]
        assert predicted_demand([1], chain, fhd, TYPES, include_idle=True).flow_type.tolist() == [V]

    def test_rate_is_class_average(self):
        fhd = history({1: [V, M, V, M]})
        fhd.record_flow(FlowRecord(2, V, 0.0, 1.0, 3.0e6))
        d = predicted_demand([1], train(fhd, flow_types=TYPES), fhd, TYPES, pending=[True])
        assert d.rate[0] == 3.0e6


class TestCentralized:
    def test_no_active_terminals(self, rng):
        q = rng.random((4, 3))
        demand = Demand.from_classes([-1] * 4, np.zeros(4), TYPES)
        p = build_problem(q, demand, [True, False, True], [10.0] * 3, 0.0)
        res = centralized_real(p, OptimizerConfig(iterations=5, init_mode=InitMode.EMPTY))
        assert res.assignment.n_assigned == 0

    def test_perfect_prediction_matches_real(self, rng):
        # every terminal streams its open flow, so the controller's view is the truth
        q = rng.uniform(0.01, 0.03, (6, 4))
        ap_e, cap = np.array([True, True, False, False]), np.array([6e6, 6e6, 5e4, 5e4])
        classes = [V, M, V, M, M, V]
        fhd = FlowHistoryStore([FlowRecord(t, c, 0.0) for t, c in enumerate(classes)])
        chain = train(fhd, flow_types=TYPES)
        cfg = OptimizerConfig(iterations=10, init_mode=InitMode.EMPTY)
        pred, p_pred = centralized_predicted(q, range(6), chain, fhd, TYPES, ap_e, cap, cfg,
                                             rng=np.random.default_rng(9))
        truth = Demand.from_classes(classes, [TYPES[c].mean_rate for c in classes], TYPES)
        p_real = build_problem(q, truth, ap_e, cap, 0.0)
        real = centralized_real(p_real, cfg, rng=np.random.default_rng(9))
        assert pred.assignment == real.assignment
        assert np.array_equal(p_pred.rate, p_real.rate)

    def test_real_beats_noisy_prediction_on_average(self):
        gaps = []
        for seed in range(30):
            rng = np.random.default_rng(seed)
            p = random_problem(rng, 5, 3)
            cfg = OptimizerConfig(iterations=20 * p.n, init_mode=InitMode.EMPTY)
            real = centralized_real(p, cfg, rng=np.random.default_rng(seed))
            # a controller that mistakes each flow's size by up to 50%
            noisy = p.__class__(p.q, p.rate * rng.uniform(0.5, 1.5, p.n), p.elephant,
                                p.ap_elephant, p.capacity, p.tau)
            guess = centralized_real(noisy, cfg, rng=np.random.default_rng(seed)).assignment
            kept = initial_assignment(p, InitMode.PREVIOUS, guess)
            kept = Assignment(np.where(kept.ap == guess.ap, kept.ap, -1))
            if not is_feasible(kept, p):
                kept = Assignment.empty(p.n)
            gaps.append(real.fitness - total_fitness(kept, p.q, p.rate))
            assert real.fitness <= brute_force_oracle(p)[0] + 1e-12
        assert np.mean(gaps) >= 0.0


class TestTerminalSide:
    def test_max_spare(self):
        assert terminal_side([[0.02, 0.02]], [5e6, 8e6], 0.01).ap.tolist() == [1]

    def test_colocated_terminals_herd(self):
        a = terminal_side([[0.02, 0.03], [0.02, 0.03]], [5e6, 8e6], 0.01, rates=[6e6, 6e6])
        assert a.ap.tolist() == [1, 1]

    def test_sequential_snapshot_spreads(self):
        a = terminal_side([[0.02, 0.03], [0.02, 0.03]], [5e6, 8e6], 0.01, sequential=True,
                          rates=[6e6, 6e6])
        assert a.ap.tolist() == [1, 0]

    def test_nothing_in_range(self):
        assert terminal_side([[0.005, 0.0]], [5e6, 8e6], 0.01).ap.tolist() == [-1]


class TestClosest:
    def test_strongest(self):
        assert closest_ap([[0.02, 0.01]]).ap.tolist() == [0]

    def test_tie_lowest_id(self):
        assert closest_ap([[0.01, 0.03, 0.03]]).ap.tolist() == [1]

    def test_inactive_and_out_of_range(self):
        a = closest_ap([[0.02, 0.01], [0.005, 0.001]], tau=0.01, active=[False, True])
        assert a.ap.tolist() == [-1, -1]
