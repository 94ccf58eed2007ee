import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from apalloc.model import (FIVEG_FLOW_TYPES, PRE5G_FLOW_TYPES, AccessPoint, Assignment,
                           FlowType, HandoverModel, InitMode, OptimizerConfig, Problem, Tag,
                           ap_loads, is_feasible, total_fitness)
from apalloc.optimizer import initial_assignment

from conftest import problems

VIDEO = 2.58e6


def one_ap(n, rate, elephant=True, cap=10e6, ap_elephant=True):
    return Problem(np.full((n, 1), 0.02), np.full(n, rate), np.full(n, elephant),
                   [ap_elephant], [cap], tau=0.01)


class TestFitness:
    def test_empty_assignment_scores_zero(self):
        assert total_fitness(np.zeros((3, 2)), np.full((3, 2), 0.01), np.ones(3)) == 0.0

    def test_single_video_link(self):
        L = np.array([[1]])
        assert total_fitness(L, [[0.01]], [VIDEO]) == pytest.approx(25_800)

    def test_two_links_add_up(self):
        L = np.array([[1, 0], [0, 1]])
        q = np.array([[0.01, 0.0], [0.0, 0.02]])
        assert total_fitness(L, q, [1e6, 1e6]) == pytest.approx(30_000)

    def test_per_link_rates(self):
        a = Assignment(np.array([1, -1]))
        rate = np.array([[5.0, 7.0], [1.0, 1.0]])
        assert total_fitness(a, np.full((2, 2), 0.5), rate) == pytest.approx(3.5)

    def test_missing_rate_raises(self):
        with pytest.raises(ValueError):
            total_fitness(Assignment(np.array([0])), [[0.01]], [np.nan])

    def test_out_of_range_ap_raises(self):
        with pytest.raises(ValueError):
            total_fitness(Assignment(np.array([3])), [[0.01]], [1.0])

    @given(problems(), st.integers(0, 2**31 - 1))
    def test_linear_over_disjoint_parts(self, p, seed):
        rng = np.random.default_rng(seed)
        ap = rng.integers(-1, p.l, size=p.n)
        split = rng.random(p.n) < 0.5
        left = np.where(split, ap, -1)
        right = np.where(split, -1, ap)
        whole = total_fitness(Assignment(ap), p.q, p.rate)
        parts = total_fitness(Assignment(left), p.q, p.rate) + total_fitness(Assignment(right), p.q, p.rate)
        assert whole == pytest.approx(parts, rel=1e-12, abs=1e-15)


class TestFeasibility:
    def test_two_videos_fit(self):
        res = is_feasible(Assignment(np.array([0, 0])), one_ap(2, VIDEO))
        assert res.ok and not res.violations

    def test_five_videos_overflow(self):
        res = is_feasible(Assignment(np.zeros(5, dtype=np.int64)), one_ap(5, VIDEO))
        assert not res
        assert res.constraints() == {"capacity"}

    def test_elephant_on_mouse_ap(self):
        res = is_feasible(Assignment(np.array([0])), one_ap(1, VIDEO, ap_elephant=False))
        assert res.constraints() == {"type"}

    def test_escape_with_room_left(self):
        # mouse terminal on the elephant AP while the mouse AP could take it
        p = Problem([[0.02, 0.03]], [12.58e3], [False], [False, True], [50e3, 10e6], 0.01)
        res = is_feasible(Assignment(np.array([1])), p)
        assert res.constraints() == {"escape"}
        assert is_feasible(Assignment(np.array([0])), p)

    def test_escape_allowed_when_mouse_ap_full(self):
        p = Problem([[0.02, 0.03], [0.02, 0.0]], [30e3, 30e3], [False, False],
                    [False, True], [50e3, 10e6], 0.01)
        assert is_feasible(Assignment(np.array([1, 0])), p)

    def test_escape_room_equal_to_rate_does_not_bind(self):
        # room exactly r leaves max(room - r, 0) = 0, so escaping is fine
        p = Problem([[0.02, 0.03], [0.02, 0.0]], [25e3, 25e3], [False, False],
                    [False, True], [50e3, 10e6], 0.01)
        assert is_feasible(Assignment(np.array([1, 0])), p)

    def test_quality_threshold(self):
        p = Problem([[0.01]], [1.0], [True], [True], [10.0], tau=0.01)
        assert is_feasible(Assignment(np.array([0])), p).constraints() == {"quality"}

    def test_matrix_with_two_links_in_a_row(self):
        p = Problem(np.full((1, 2), 0.02), [1.0], [True], [True, True], [10.0, 10.0], 0.01)
        res = is_feasible(np.array([[1, 1]]), p)
        assert "single" in res.constraints()

    def test_lists_every_violation(self):
        p = Problem(np.array([[0.02, 0.0], [0.02, 0.0], [0.0, 0.02]]), [6.0, 6.0, 1.0],
                    [True, True, True], [True, False], [10.0, 10.0], 0.01)
        res = is_feasible(Assignment(np.array([0, 0, 1])), p)
        assert res.constraints() == {"capacity", "type"}

    @given(problems(), st.integers(0, 2**31 - 1), st.floats(1.0, 10.0))
    def test_monotone_in_capacity(self, p, seed, factor):
        rng = np.random.default_rng(seed)
        start = initial_assignment(p, InitMode.PREVIOUS, Assignment(rng.integers(-1, p.l, p.n)))
        assert is_feasible(start, p)
        # more room keeps the hard constraints; the escape rule depends on room itself
        bigger = is_feasible(start, p.with_capacity(p.capacity * factor))
        assert not bigger.constraints() & {"quality", "single", "type", "capacity"}

    @given(problems(), st.integers(0, 2**31 - 1))
    def test_removing_a_link_keeps_hard_constraints(self, p, seed):
        rng = np.random.default_rng(seed)
        start = initial_assignment(p, InitMode.PREVIOUS, Assignment(rng.integers(-1, p.l, p.n)))
        for i in np.flatnonzero(start.ap >= 0):
            ap = start.ap.copy()
            ap[i] = -1
            res = is_feasible(Assignment(ap), p)
            assert not res.constraints() & {"quality", "single", "type", "capacity"}


class TestTypes:
    def test_flow_type_needs_positive_rate(self):
        with pytest.raises(ValueError):
            FlowType(0, "x", Tag.MOUSE, 0.0)

    def test_class_tables(self):
        assert [f.is_elephant for f in PRE5G_FLOW_TYPES].count(True) == 1
        assert PRE5G_FLOW_TYPES[0].mean_rate == 2.58e6
        assert {f.name: f.mean_rate for f in FIVEG_FLOW_TYPES} == {
            "vr_entertainment": 2.5e9, "hq_messaging": 2e6}

    def test_access_point_validation(self):
        with pytest.raises(ValueError):
            AccessPoint(0, Tag.MOUSE, (0, 0), -1.0)

    def test_assignment_matrix_round_trip(self):
        a = Assignment(np.array([2, -1, 0]))
        L = a.to_matrix(3)
        assert L.sum(axis=1).tolist() == [1, 0, 1]
        assert Assignment.from_matrix(L) == a
        with pytest.raises(ValueError):
            Assignment.from_matrix(np.array([[1, 1]]))

    def test_loads(self):
        assert ap_loads(np.array([0, 0, 1, -1]), np.array([1.0, 2.0, 4.0, 8.0]), 3).tolist() == [3, 4, 0]

    def test_problem_arrays_are_read_only(self):
        p = one_ap(2, 1.0)
        with pytest.raises(ValueError):
            p.q[0, 0] = 1.0

    def test_problem_shape_checks(self):
        with pytest.raises(ValueError):
            Problem(np.zeros((2, 1)), [1.0], [True, True], [True], [1.0])

    def test_optimizer_config_validation(self):
        with pytest.raises(ValueError):
            OptimizerConfig(parallel_width=0)
        with pytest.raises(ValueError):
            OptimizerConfig(iterations=-1)


class TestHandoverModel:
    def test_composition(self):
        m = HandoverModel(45.2, 34.7, 0.2)
        assert m.total() == pytest.approx(80.1)
        assert m.total(network_side=False) == 34.7

    def test_technologies(self):
        assert HandoverModel.for_technology("5g").total() == pytest.approx(60.7)
        assert HandoverModel.for_technology("lte").zeta == 30.0
        assert HandoverModel.for_technology("wifi", gamma=1.5).total() == pytest.approx(81.4)

    def test_negative_component_rejected(self):
        with pytest.raises(ValueError):
            HandoverModel(gamma=-1.0)
