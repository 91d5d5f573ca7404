from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lincoln.negsample import (EdgePool, MNSStats, NoNegativeFound, dump_batches_csv,
                               make_candidate_batch, mns_negative)


def rng(seed=0):
    return np.random.default_rng(seed)


def test_only_reachable_outcome():
    pool = EdgePool([(1, 2), (2, 3)])
    for s in range(20):
        assert mns_negative(pool, 3, rng(s)) == frozenset({1, 2, 3})


def test_single_edge_is_degenerate():
    with pytest.raises(NoNegativeFound):
        mns_negative(EdgePool([(1, 2)]), 2, rng())


def test_grown_subset_avoids_positives():
    pool = EdgePool([(1, 2, 3), (3, 4)])
    seen = set()
    for s in range(200):
        neg = mns_negative(pool, 2, rng(s))
        assert len(neg) == 2
        assert neg not in ({3, 4}, {1, 2, 3})
        assert neg <= {1, 2, 3, 4}
        seen.add(neg)
    assert seen <= {frozenset(p) for p in ({1, 2}, {1, 3}, {2, 3}, {2, 4}, {1, 4})}


def test_fallback_counted():
    pool = EdgePool([(0, 1), (2, 3)], nodes=[0, 1, 2, 3, 9])
    stats = MNSStats()
    for s in range(30):
        neg = mns_negative(pool, 3, rng(s), stats)
        assert len(neg) == 3
    assert stats.fallbacks == 30


def test_target_size_guard():
    with pytest.raises(ValueError):
        mns_negative(EdgePool([(1, 2)]), 1, rng())


def test_batch_counting():
    pool = EdgePool([(0, 1), (1, 2), (2, 3), (3, 4)])
    b = make_candidate_batch(pool, [(0, 1), (2, 3)], 1, rng())
    assert len(b) == 4 and b.labels.sum() == 2


def test_batch_singletons_dropped():
    pool = EdgePool([(0, 1), (1, 2), (5,), (6,)])
    b = make_candidate_batch(pool, [(5,), (6,)], 1, rng())
    assert len(b) == 0 and b.dropped == 2


def test_batch_determinism():
    pool = EdgePool([(0, 1, 2), (1, 3), (3, 4, 5), (5, 6)])
    a = make_candidate_batch(pool, [(0, 1, 2), (3, 4, 5)], 3, rng(7))
    b = make_candidate_batch(pool, [(0, 1, 2), (3, 4, 5)], 3, rng(7))
    assert a.candidates == b.candidates and a.labels.tolist() == b.labels.tolist()


def test_ratio_guard():
    with pytest.raises(ValueError):
        make_candidate_batch(EdgePool([(0, 1)]), [(0, 1)], 0, rng())


snapshots = st.lists(st.sets(st.integers(0, 14), min_size=1, max_size=5), min_size=2, max_size=15)


@settings(max_examples=80, deadline=None)
@given(snapshots, st.integers(1, 4), st.integers(0, 10 ** 6))
def test_batch_invariants(edges, ratio, seed):
    edges = [tuple(sorted(e)) for e in edges]
    pool = EdgePool(edges)
    positives = sorted({e for e in edges if len(e) >= 2})
    b = make_candidate_batch(pool, positives, ratio, rng(seed))
    pos_sets = pool.positives
    negs = [c for c, y in zip(b.candidates, b.labels) if y == 0]
    kept_pos = [c for c, y in zip(b.candidates, b.labels) if y == 1]
    assert len(kept_pos) + b.dropped == len(positives)
    assert all(len(c) >= 2 for c in b.candidates)
    assert all(frozenset(c) not in pos_sets for c in negs)
    # negatives are size-matched to the positives they were drawn for
    want = Counter()
    for p in kept_pos:
        want[len(p)] += ratio
    assert Counter(len(c) for c in negs) == want
    # connected growth: without fallback every negative touches some hyperedge
    if b.fallbacks == 0:
        nodes_in_edges = {v for e in edges if len(e) >= 2 for v in e}
        assert all(set(c) & nodes_in_edges for c in negs)


def test_dump_csv(tmp_path):
    pool = EdgePool([(0, 1), (1, 2), (2, 3)])
    b = make_candidate_batch(pool, [(0, 1)], 1, rng(), snapshot=4)
    dump_batches_csv([b], tmp_path / "b.csv")
    rows = (tmp_path / "b.csv").read_text().splitlines()
    assert len(rows) == 2 and all(r.startswith("4,") for r in rows)
