import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lincoln import diffcore as dc
from lincoln.metrics import NoPositives, SingleClass, auroc, average_precision
from lincoln.synthetic import planted_period, toy
from lincoln.trainer import (EPS, DatasetTooSmall, EmptyBatch, Lincoln, TrainConfig, UnknownNode,
                             bce_loss, contrastive_loss, live_update_run, predict_candidate,
                             report_curves, report_rows, split_counts, total_loss)

T = dc.Tensor


# --- metrics ------------------------------------------------------------------

def brute_auroc(s, y):
    pos = [a for a, l in zip(s, y) if l]
    neg = [a for a, l in zip(s, y) if not l]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def brute_ap(s, y):
    order = sorted(range(len(s)), key=lambda i: -s[i])    # sorted() is stable
    hits, total = 0, 0.0
    for rank, i in enumerate(order, 1):
        if y[i]:
            hits += 1
            total += hits / rank
    return total / hits


def test_auroc_examples():
    assert auroc([0.9, 0.8, 0.3, 0.2], [1, 1, 0, 0]) == 1.0
    assert auroc([0.4] * 5, [1, 0, 1, 0, 0]) == 0.5
    # pairs: 0.8 > 0.7 wins, 0.6 < 0.7 loses
    assert auroc([0.8, 0.7, 0.6], [1, 0, 1]) == 0.5 == brute_auroc([0.8, 0.7, 0.6], [1, 0, 1])
    with pytest.raises(SingleClass):
        auroc([0.1, 0.2], [1, 1])


def test_ap_examples():
    assert average_precision([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0
    assert average_precision([0.9, 0.8, 0.7], [1, 0, 1]) == pytest.approx(0.833333, abs=1e-6)
    assert average_precision([0.9, 0.8, 0.7, 0.1], [0, 0, 0, 1]) == 0.25
    with pytest.raises(NoPositives):
        average_precision([0.1], [0])


batches = st.integers(2, 64).flatmap(lambda n: st.tuples(
    st.lists(st.integers(0, 6).map(lambda k: k / 6), min_size=n, max_size=n),
    st.lists(st.integers(0, 1), min_size=n, max_size=n)))


@settings(max_examples=200, deadline=None)
@given(batches)
def test_metrics_match_oracles(batch):
    s, y = batch
    if 0 < sum(y) < len(y):
        assert abs(auroc(s, y) - brute_auroc(s, y)) <= 1e-12
    if sum(y):
        assert abs(average_precision(s, y) - brute_ap(s, y)) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(batches)
def test_monotone_transform_invariance(batch):
    s, y = batch
    if not 0 < sum(y) < len(y):
        return
    t = [math.exp(3 * v) - 7 for v in s]
    assert auroc(t, y) == auroc(s, y)
    assert average_precision(t, y) == average_precision(s, y)


# --- predictor and losses -------------------------------------------------------

def test_predictor_examples():
    P = np.array([[1.0, 0.0], [0.0, 1.0], [3.0, -2.0]])
    row_of = {10: 0, 11: 1, 12: 2}
    assert predict_candidate(P, row_of, (10, 12), np.zeros((2, 1)), np.zeros((1, 1))) == 0.5
    y = predict_candidate(P, row_of, (10, 11), np.ones((2, 1)), np.zeros((1, 1)))
    assert y == pytest.approx(1 / (1 + math.exp(-1)), abs=1e-15)
    assert round(y, 4) == 0.7311


def test_predictor_unknown_nodes():
    P, w, b = np.ones((1, 2)), np.ones((2, 1)), np.zeros((1, 1))
    assert predict_candidate(P, {5: 0}, (5, 99), w, b) == predict_candidate(P, {5: 0}, (5, 5, 98), w, b)
    with pytest.raises(UnknownNode):
        predict_candidate(P, {5: 0}, (7, 8), w, b)
    with pytest.raises(ValueError):
        predict_candidate(P, {5: 0}, (5,), w, b)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_predictor_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    P = rng.normal(size=(9, 6))
    w, b = rng.normal(size=(6, 1)), rng.normal(size=(1, 1))
    row_of = {v: v for v in range(9)}
    cand = list(rng.choice(9, int(rng.integers(2, 9)), replace=False))
    ref = predict_candidate(P, row_of, cand, w, b)
    for _ in range(100):
        assert predict_candidate(P, row_of, list(rng.permutation(cand)), w, b) == ref


def test_bce_examples():
    assert bce_loss(T([0.5, 0.5, 0.5]), [1, 0, 1]).data[0] == pytest.approx(math.log(2), abs=1e-15)
    exact = bce_loss(T([1.0, 0.0]), [1, 0]).data[0]
    assert exact == pytest.approx(-math.log(1 - EPS), rel=1e-9)
    assert bce_loss(T([0.9, 0.2]), [1, 0]).data[0] == pytest.approx(0.164252, abs=1e-6)
    with pytest.raises(EmptyBatch):
        bce_loss(T(np.zeros(0)), [])


def test_contrastive_examples():
    Q = T([[1.0, 2.0], [0.0, -3.0]])
    assert contrastive_loss(Q, Q).data[0] == pytest.approx(0.0, abs=1e-15)
    A, B = T([[1.0, 0.0], [0.0, 2.0]]), T([[0.0, 5.0], [3.0, 0.0]])
    assert contrastive_loss(A, B).data[0] == pytest.approx(math.log(2), abs=1e-15)
    assert contrastive_loss(Q, T(-Q.data)).data[0] == pytest.approx(-math.log(EPS), rel=1e-12)
    zero_row = contrastive_loss(T(np.zeros((1, 2))), T([[1.0, 1.0]]))
    assert zero_row.data[0] == pytest.approx(math.log(2), abs=1e-15)
    with pytest.raises(dc.ShapeMismatch):
        contrastive_loss(T(np.ones((2, 2))), T(np.ones((3, 2))))


def test_total_loss_examples():
    lp = T([0.5])
    assert total_loss(lp, T([0.2]), 0.0) is lp
    assert total_loss(lp, T([0.2]), 1.0).data[0] == pytest.approx(0.7, abs=1e-15)
    assert total_loss(lp, T([math.log(2)]), 0.5).data[0] == pytest.approx(0.5 + 0.346574, abs=1e-6)
    with pytest.raises(ValueError):
        total_loss(lp, T([0.2]), -1.0)


def test_full_model_gradcheck():
    from lincoln.cli import gradcheck_loss
    model, f = gradcheck_loss(TrainConfig(d=4, k=2, bptt_window=2))
    assert dc.grad_check(f, model.store, 1e-5) <= 1e-4


# --- protocol -----------------------------------------------------------------

def test_split_counts():
    assert split_counts(10) == [7, 2, 1]
    for n in range(1, 200):
        c = split_counts(n)
        assert sum(c) == n and all(abs(a - f * n) < 1 for a, f in zip(c, (0.7, 0.2, 0.1)))


def test_config_validation():
    for bad in ({"beta": -1}, {"lr": 0}, {"epochs_per_snapshot": 0}, {"d": 3},
                {"intermediate_layers": "x"}, {"runs": 0}):
        with pytest.raises(ValueError):
            TrainConfig(**bad)
    with pytest.raises(ValueError, match="unknown config keys: bogus"):
        TrainConfig.from_dict({"bogus": 1})
    cfg = TrainConfig(d=8)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


def small_cfg(**kw):
    base = dict(d=4, k=1, epochs_per_snapshot=3, runs=2, negative_ratio=2, seed=3)
    base.update(kw)
    return TrainConfig(**base)


def small_ds(period=1):
    return planted_period(n_snapshots=4, period=period, pool=30, noise_edges=20, seed=1)


def test_live_update_report_shape():
    rep = live_update_run(small_ds(), small_cfg())
    assert len(rep["runs"]) == 2
    for r in rep["runs"]:
        assert [s["snapshot"] for s in r["snapshots"]] == [1, 2, 3]
        for s in r["snapshots"]:
            assert 0 <= s["auroc"] <= 1 and 0 <= s["ap"] <= 1
            assert 2 <= s["n_test"] <= 3 * (1 + 2)
    assert rep["mean_auroc"] == pytest.approx(np.mean([r["mean_auroc"] for r in rep["runs"]]))
    assert len(report_rows(rep)) == 6
    assert [c["snapshot"] for c in report_curves(rep)] == [1, 2, 3]
    json.dumps(rep)


def test_unscorable_snapshots_are_reported_as_skipped():
    # period 3: the targets at t = 1, 2 consist only of never-seen nodes
    rep = live_update_run(small_ds(period=3), small_cfg())
    for r in rep["runs"]:
        assert r["skipped"] == [1, 2]
        assert [s["snapshot"] for s in r["snapshots"]] == [3]


def test_live_update_determinism():
    a = live_update_run(small_ds(), small_cfg())
    b = live_update_run(small_ds(), small_cfg())
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_parallel_matches_sequential():
    a = live_update_run(small_ds(), small_cfg())
    b = live_update_run(small_ds(), small_cfg(), parallel=True)
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_small_datasets_rejected():
    with pytest.raises(DatasetTooSmall):
        live_update_run(toy(), small_cfg())          # no snapshot has 10 usable edges
    ds = toy()
    ds.snapshots = ds.snapshots[:1]
    with pytest.raises(DatasetTooSmall):
        live_update_run(ds, small_cfg())


def test_best_epoch_parameters_are_kept():
    rep = live_update_run(small_ds(), small_cfg(runs=1, epochs_per_snapshot=4), keep_models=True)
    (m,) = rep["models"]
    assert isinstance(m, Lincoln)
    assert all(1 <= s["best_epoch"] <= 4 for s in rep["runs"][0]["snapshots"])
