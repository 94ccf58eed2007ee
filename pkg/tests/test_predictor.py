import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.metrics import f1_score

from apalloc.history import FlowHistoryStore, FlowRecord
from apalloc.model import PRE5G_FLOW_TYPES, FlowType, Tag
from apalloc.predictor import (RandomUnderOver, TransitionChain, balance_successions,
                               expected_rate, f_score, fallback_type, next_type, predict_next,
                               successions, train)

A, B, C = 0, 1, 2
TYPES = [FlowType(A, "a", Tag.ELEPHANT, 2e6), FlowType(B, "b", Tag.MOUSE, 1e4),
         FlowType(C, "c", Tag.MOUSE, 5e3)]
sequences = st.dictionaries(st.integers(0, 5), st.lists(st.integers(0, 4), max_size=25), max_size=5)


def brute_counts(seq):
    counts = {}
    for k in range(len(seq) - 1):
        counts[(seq[k], seq[k + 1])] = counts.get((seq[k], seq[k + 1]), 0) + 1
    return counts


class TestTrain:
    def test_counting(self):
        chain = train({1: [A, B, A, B]})
        assert chain.weight(1, A, B) == 2
        assert chain.weight(1, B, A) == 1
        assert chain.weight(1, A, A) == 0
        assert chain.last_flow_type[1] == B

    def test_single_record_has_no_transitions(self):
        chain = train({1: [A]})
        assert chain.weights[1] == {}
        assert chain.last_flow_type[1] == A

    def test_from_store(self):
        store = FlowHistoryStore([FlowRecord(3, A, 0.0, 1.0), FlowRecord(3, C, 2.0, 3.0)])
        assert train(store).weight(3, A, C) == 1

    def test_balanced_retrain_is_deterministic(self):
        hist = {1: [A, B, A, B, C, A, A, A, B, C], 2: [C, C, C, A]}
        one, two = train(hist, RandomUnderOver(7)), train(hist, RandomUnderOver(7))
        assert one == two

    def test_balancing_reaches_the_median(self):
        pairs = [(A, B)] * 6 + [(B, A)] * 2 + [(B, C)]
        out = balance_successions(pairs, np.random.default_rng(0))
        counts = {b: sum(1 for _, y in out if y == b) for b in (A, B, C)}
        assert counts == {A: 2, B: 2, C: 2}

    @given(sequences)
    def test_counts_match_successions(self, hist):
        chain = train(hist)
        for t, seq in hist.items():
            if seq:
                assert chain.weights[t] == brute_counts(seq)

    @given(sequences)
    def test_pooled_counts_sum_to_successions(self, hist):
        chain = train(hist)
        for a in range(5):
            total = sum(1 for s in hist.values() for x, _ in successions(s) if x == a)
            assert sum(chain.outgoing(None, a).values()) == total


class TestPredict:
    def test_argmax(self):
        chain = TransitionChain({1: {(B, A): 2, (B, C): 0}}, {1: B}, {f.id: f for f in TYPES})
        assert next_type(chain, 1) == A

    def test_tie_lowest_id(self):
        chain = TransitionChain({1: {(B, C): 1, (B, A): 1}}, {1: B}, {f.id: f for f in TYPES})
        assert next_type(chain, 1) == A

    def test_unknown_terminal(self):
        assert predict_next(train({1: [A, B]}, flow_types=TYPES), 2) is None

    def test_video_after_messaging(self):
        chain = train({1: [A, B, A, B]}, flow_types=TYPES)
        p = predict_next(chain, 1)
        assert p.flow_type.id == A and p.flow_type.is_elephant
        assert p.expected_rate == 2e6

    def test_rate_from_history_average(self):
        chain = train({1: [A, B, A, B]}, flow_types=TYPES)
        store = FlowHistoryStore([FlowRecord(1, A, 0.0, 1.0, 3e6)])
        assert predict_next(chain, 1, store).expected_rate == 3e6
        assert expected_rate(TYPES[2], None) == 5e3

    def test_pooled_fallback(self):
        chain = train({1: [A, B], 2: [C]}, flow_types=TYPES)
        assert next_type(chain, 2) is None
        assert next_type(chain, 2, last=A, use_pooled=True) == B

    def test_cold_start_class(self):
        assert fallback_type(TYPES).id == C
        assert not fallback_type(PRE5G_FLOW_TYPES).is_elephant
        with pytest.raises(ValueError):
            fallback_type([TYPES[0]])

    @given(sequences, st.integers(2, 50))
    def test_argmax_invariant_under_scaling(self, hist, factor):
        chain = train(hist)
        big = chain.scaled(factor)
        for t in chain.terminals():
            for a in range(5):
                assert next_type(chain, t, a) == next_type(big, t, a)
                assert next_type(chain, t, a, True) == next_type(big, t, a, True)

    @given(sequences, st.permutations(range(6)))
    def test_terminal_relabel_invariance(self, hist, perm):
        chain = train(hist)
        moved = train({perm[t]: s for t, s in hist.items()})
        for t in chain.terminals():
            assert next_type(chain, t) == next_type(moved, perm[t])

    def test_dump_load(self):
        chain = train({1: [A, B, A, C], 4: [C, C]}, flow_types=TYPES)
        buf = io.StringIO()
        chain.dump(buf)
        buf.seek(0)
        assert TransitionChain.load(buf, TYPES) == chain


class TestFScore:
    def test_alternating_is_perfect(self):
        seq = [A, B] * 20
        per, macro = f_score(train({1: seq}), seq, 1)
        assert macro == 1.0 and per == {A: 1.0, B: 1.0}

    def test_all_wrong(self):
        chain = train({1: [A, A, A, B, B, B]})
        assert f_score(chain, [A, B, A, B], 1)[1] == 0.0

    def test_empty_test_set(self):
        with pytest.raises(ValueError):
            f_score(train({1: [A, B]}), [A], 1)

    @given(st.lists(st.integers(0, 3), min_size=2, max_size=30),
           st.lists(st.integers(0, 3), min_size=2, max_size=30))
    def test_matches_sklearn(self, train_seq, test_seq):
        chain = train({1: train_seq})
        per, macro = f_score(chain, test_seq, 1)
        preds = [next_type(chain, 1, a) for a, _ in successions(test_seq)]
        actual = [b for _, b in successions(test_seq)]
        labels = sorted(set(actual) | {p for p in preds if p is not None})
        preds = [-1 if p is None else p for p in preds]
        ref = f1_score(actual, preds, labels=labels, average=None, zero_division=0)
        assert [per[c] for c in labels] == pytest.approx(list(ref))
        assert macro == pytest.approx(float(np.mean(ref)))
