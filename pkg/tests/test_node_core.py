import random
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from engramnet.node_core import (
    ActivationTrace,
    IndexTable,
    f1_score,
    lookup,
    record_trace,
    select_fanout,
)

node_sets = st.frozensets(st.integers(0, 15), max_size=6)


def tp_fp_fn_f1(pred, actual):
    tp = len(pred & actual)
    fp = len(pred - actual)
    fn = len(actual - pred)
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def table_with(*pairs, capacity=20):
    t = IndexTable(capacity)
    for fan_in, fan_out, strength in pairs:
        t.replace_entries(t.entries + [ActivationTrace(frozenset(fan_in), frozenset(fan_out), strength)])
    return t


# -- f1 -------------------------------------------------------------------------


def test_f1_examples():
    assert f1_score({1, 2, 3}, {1, 2, 3}) == 1.0
    assert f1_score({1, 2}, {3, 4}) == 0.0
    assert f1_score({1, 2}, {2, 3}) == pytest.approx(0.5)


def test_f1_empty_conventions():
    assert f1_score(set(), set()) == 1.0
    assert f1_score(set(), {1}) == 0.0
    assert f1_score({1}, set()) == 0.0


@given(node_sets, node_sets)
def test_f1_properties(a, b):
    s = f1_score(a, b)
    assert s == f1_score(b, a)
    assert 0.0 <= s <= 1.0
    if a and b:
        assert (s == 1.0) == (a == b)
        assert s == pytest.approx(tp_fp_fn_f1(a, b))


# -- lookup -----------------------------------------------------------------------


def test_lookup_exact_reuse():
    t = table_with(({1, 2, 3}, {7, 8}, 1))
    r = lookup(t, frozenset({1, 2, 3}), 0.8)
    assert r.matched and r.fan_out == {7, 8} and r.score == 1.0


def test_lookup_empty_table():
    assert not lookup(IndexTable(), frozenset({1}), 0.8).matched


def test_lookup_disjoint_misses():
    r = lookup(table_with(({1, 2, 3}, {9}, 1)), frozenset({4, 5}), 0.8)
    assert not r.matched and r.score == 0.0


def test_lookup_threshold_is_strict():
    # F1({1,2,3,4},{1,2,3,4,5}) = 8/9 ≈ 0.889
    t = table_with(({1, 2, 3, 4}, {9}, 1))
    assert lookup(t, frozenset({1, 2, 3, 4, 5}), 0.8).matched
    assert not lookup(t, frozenset({1, 2, 3, 4, 5}), 8 / 9).matched


def test_lookup_ties_go_to_earliest_entry():
    t = table_with(({1, 2, 3, 4, 5}, {10}, 1), ({1, 2, 3, 4, 6}, {11}, 1))
    r = lookup(t, frozenset({1, 2, 3, 4}), 0.8)
    assert r.fan_out == {10}


def test_lookup_threshold_validation():
    with pytest.raises(ValueError):
        lookup(IndexTable(), frozenset(), 0.0)
    with pytest.raises(ValueError):
        lookup(IndexTable(), frozenset(), 1.5)


@given(st.lists(st.tuples(node_sets, node_sets.filter(bool)), max_size=8), node_sets, st.floats(0.05, 1.0))
def test_lookup_returns_stored_output_above_threshold(entries, probe, threshold):
    t = IndexTable(20)
    for fi, fo in entries:
        record_trace(t, ActivationTrace(fi, fo))
    r = lookup(t, probe, threshold)
    if r.matched:
        assert r.fan_out in t.outputs()
        assert r.score > threshold
        best = max(f1_score(e.fan_in, probe) for e in t.entries)
        assert r.score == pytest.approx(best)


# -- select_fanout --------------------------------------------------------------------


def test_select_all_when_e_out_covers_candidates():
    assert select_fanout(IndexTable(), [1, 2, 3], 3, random.Random(0)) == {1, 2, 3}


def test_select_empty_candidates():
    assert select_fanout(IndexTable(), [], 2, random.Random(0)) == frozenset()


def test_select_uniform_on_empty_table():
    rng = random.Random(42)
    counts = Counter(next(iter(select_fanout(IndexTable(), [1, 2], 1, rng))) for _ in range(10_000))
    assert abs(counts[1] / 10_000 - 0.5) < 0.03
    assert stats.chisquare([counts[1], counts[2]]).pvalue > 1e-3


def test_select_inverse_frequency_weights():
    # freq(A)=3, freq(B)=0 -> P(B) = 1 / (1 + 1/4) = 0.8
    A, B = 1, 2
    t = table_with(({10}, {A}, 1), ({11}, {A, 5}, 1), ({12}, {A, 6}, 1))
    assert t.frequency()[A] == 3 and t.frequency()[B] == 0
    rng = random.Random(7)
    counts = Counter(next(iter(select_fanout(t, [A, B], 1, rng))) for _ in range(10_000))
    assert abs(counts[B] / 10_000 - 0.8) < 0.03
    assert stats.chisquare([counts[A], counts[B]], [2000, 8000]).pvalue > 1e-3


def test_select_rejects_bad_e_out():
    with pytest.raises(ValueError):
        select_fanout(IndexTable(), [1], 0, random.Random(0))


@given(st.lists(st.integers(0, 50), unique=True, max_size=12), st.integers(1, 5), st.integers(0, 2**32))
def test_select_is_subset_of_right_size(cands, e_out, seed):
    out = select_fanout(IndexTable(), cands, e_out, random.Random(seed))
    assert out <= set(cands)
    assert len(out) == min(e_out, len(cands))


# -- record_trace -------------------------------------------------------------------------


def test_record_merges_most_similar_outputs():
    X, Y, Z, W, Q = 1, 2, 3, 4, 5
    t = table_with(({10}, {X, Y, Z}, 1), ({11}, {X, Y, W}, 1), capacity=2)
    record_trace(t, ActivationTrace(frozenset({12}), frozenset({Q})))
    assert set(t.outputs()) == {frozenset({X, Y}), frozenset({Q})}
    assert t.get(frozenset({10})).fan_out == {X, Y}
    assert t.get(frozenset({11})).fan_out == {X, Y}


def test_record_discards_weakest_output():
    t = table_with(({10}, {1}, 5), ({11}, {2}, 1), capacity=2)
    record_trace(t, ActivationTrace(frozenset({12}), frozenset({3})))
    assert t.get(frozenset({11})) is None
    assert set(t.outputs()) == {frozenset({1}), frozenset({3})}


def test_record_plain_insert_below_capacity():
    t = IndexTable(5)
    record_trace(t, ActivationTrace(frozenset({1}), frozenset({2})))
    assert len(t) == 1 and t.get(frozenset({1})).strength == 1


def test_record_repeat_bumps_strength_and_overwrite_resets():
    t = IndexTable(5)
    for _ in range(3):
        record_trace(t, ActivationTrace(frozenset({1}), frozenset({2})))
    assert t.get(frozenset({1})).strength == 3
    record_trace(t, ActivationTrace(frozenset({1}), frozenset({4})))
    e = t.get(frozenset({1}))
    assert e.fan_out == {4} and e.strength == 1 and len(t) == 1


def test_capacity_zero_keeps_nothing():
    t = IndexTable(0)
    record_trace(t, ActivationTrace(frozenset({1}), frozenset({2})))
    assert len(t) == 0


@given(
    st.integers(0, 6),
    st.lists(st.tuples(node_sets, node_sets), max_size=40),
    st.floats(0.0, 1.0),
)
def test_k_bound_after_any_stream(K, stream, merge_threshold):
    t = IndexTable(K)
    for fi, fo in stream:
        record_trace(t, ActivationTrace(fi, fo), merge_threshold)
        assert len(t.outputs()) <= K
        assert len({e.fan_in for e in t.entries}) == len(t)
        assert all(e.strength >= 1 for e in t.entries)


@given(st.lists(st.tuples(node_sets, node_sets), max_size=30))
def test_record_is_deterministic(stream):
    a, b = IndexTable(3), IndexTable(3)
    for fi, fo in stream:
        record_trace(a, ActivationTrace(fi, fo))
        record_trace(b, ActivationTrace(fi, fo))
    assert a == b
