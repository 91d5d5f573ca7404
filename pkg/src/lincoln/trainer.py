"""Predictor head, losses, the LINCOLN model wrapper and the live-update protocol."""
from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from . import diffcore as dc
from .diffcore import Tensor
from .hypercore import DynamicHypergraph, Snapshot
from .inter import (LAYER_MODES, HiddenStates, LiveRows, advance_snapshot, gather_state,
                    register_gru_params, updated_layers)
from .intra import EncoderOptions, LayerStack, SnapshotOps, encode_snapshot, register_encoder_params
from .metrics import auroc, average_precision
from .negsample import EdgePool, make_candidate_batch

log = logging.getLogger(__name__)

EPS = 1e-7


class UnknownNode(KeyError):
    pass


class EmptyBatch(ValueError):
    pass


class DatasetTooSmall(ValueError):
    pass


@dataclass
class TrainConfig:
    d: int = 64
    k: int = 2
    beta: float = 0.5
    lr: float = 1e-3
    epochs_per_snapshot: int = 50
    negative_ratio: int = 1
    snapshot_policy: str = "equal_count"
    snapshots: int = 10
    seed: int = 0
    intermediate_layers: str = "all"
    disable_pin: bool = False
    disable_bihe: bool = False
    runs: int = 5
    bptt_window: int = 1
    pin_every_layer: bool = True
    activation: str = "relu"
    min_edges: int = 10

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if self.epochs_per_snapshot < 1:
            raise ValueError("epochs_per_snapshot must be >= 1")
        if self.d % 2 or self.d < 2:
            raise ValueError("d must be a positive even number")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.intermediate_layers not in LAYER_MODES:
            raise ValueError(f"intermediate_layers must be one of {LAYER_MODES}")
        if self.bptt_window < 1:
            raise ValueError("bptt_window must be >= 1")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def encoder_options(self) -> EncoderOptions:
        return EncoderOptions(k=self.k, pin=not self.disable_pin, bihe=not self.disable_bihe,
                              pin_every_layer=self.pin_every_layer, activation=self.activation)


# ---------------------------------------------------------------------------
# predictor and losses

def pooling_matrix(candidates: Sequence[Sequence[int]], row_of: Dict[int, int],
                   n_rows: int) -> Tuple[sp.csr_matrix, List[int]]:
    """Sparse mean-pooling over known member rows; unknown members are skipped.

    Returns the matrix and the indices of candidates that had a known member.
    Columns are sorted so the result does not depend on member order.
    """
    rows, cols, vals, kept = [], [], [], []
    for i, cand in enumerate(candidates):
        known = sorted({row_of[v] for v in cand if v in row_of})
        if not known:
            continue
        r = len(kept)
        kept.append(i)
        rows += [r] * len(known)
        cols += known
        vals += [1.0 / len(known)] * len(known)
    m = sp.csr_matrix((vals, (rows, cols)), shape=(len(kept), n_rows))
    m.sort_indices()
    return m, kept


def predict_candidates(P: Tensor, row_of: Dict[int, int], candidates, w: Tensor, b: Tensor):
    """sigmoid(mean(P[candidate]) . w + b) for each candidate with a known node."""
    pool, kept = pooling_matrix(candidates, row_of, P.shape[0])
    if not kept:
        return None, kept
    q = dc.spmm(pool, P)
    return dc.reshape_row(dc.sigmoid(dc.affine(q, w, b))), kept


def predict_candidate(P, row_of: Dict[int, int], candidate, w, b) -> float:
    P, w, b = dc.const(P), dc.const(w), dc.const(b)
    if len(set(candidate)) < 2:
        raise ValueError("candidates need at least two nodes")
    probs, kept = predict_candidates(P, row_of, [candidate], w, b)
    if not kept:
        raise UnknownNode(f"no node of {sorted(candidate)} has an embedding")
    return float(probs.data[0, 0])


def bce_loss(probs: Tensor, labels) -> Tensor:
    """Mean binary cross-entropy with predictions clamped to [eps, 1 - eps]."""
    y = np.asarray(labels, dtype=np.float64).reshape(probs.shape)
    if y.size == 0:
        raise EmptyBatch("empty batch")
    one = dc.Tensor(np.ones(probs.shape))
    p = dc.sub(one, dc.clamp_below(dc.sub(one, dc.clamp_below(probs, EPS)), EPS))
    pos = dc.mul(dc.Tensor(y), dc.log(p))
    neg = dc.mul(dc.Tensor(1.0 - y), dc.log(dc.sub(one, p)))
    per = dc.scale(dc.add(pos, neg), -1.0)
    return dc.row_mean(per) if per.data.ndim == 2 else dc.mean_all(per)


def contrastive_loss(QS: Tensor, QT: Tensor) -> Tensor:
    """-mean log((1 + cos) / 2) between matching structural/temporal rows."""
    c = dc.row_cosine(QS, QT)
    s = dc.scale(dc.add(c, dc.Tensor(np.ones(c.shape))), 0.5)
    return dc.scale(dc.mean_all(dc.log(dc.clamp_below(s, EPS))), -1.0)


def total_loss(pred: Tensor, con: Optional[Tensor], beta: float) -> Tensor:
    if beta < 0:
        raise ValueError("beta must be >= 0")
    if con is None or beta == 0:
        return pred
    return dc.add(pred, dc.scale(con, beta))


# ---------------------------------------------------------------------------
# model

@dataclass
class Forward:
    stack: LayerStack
    live: LiveRows
    hidden: HiddenStates


class Lincoln:
    def __init__(self, cfg: TrainConfig, node_count: int, rng: np.random.Generator,
                 time_origin: float = 0.0, time_unit: float = 1.0):
        self.cfg = cfg
        self.node_count = node_count
        self.opts = cfg.encoder_options()
        self.layers = updated_layers(cfg.k, cfg.intermediate_layers)
        self.time_origin, self.time_unit = float(time_origin), float(time_unit)
        self.store = dc.ParamStore()
        register_encoder_params(self.store, rng, cfg.d, cfg.k, node_count)
        register_gru_params(self.store, rng, cfg.d, self.layers)
        self.store.add("pred.w", dc.uniform_init(rng, (cfg.d, 1), cfg.d))
        self.store.add("pred.b", np.zeros((1, 1)))
        self._ops: Dict[int, SnapshotOps] = {}

    @classmethod
    def for_dataset(cls, cfg: TrainConfig, ds: DynamicHypergraph, rng):
        first, last = ds.snapshots[0].spec.t_start, ds.snapshots[-1].spec.t_end
        unit = max((last - first) / len(ds.snapshots), 1e-12)
        return cls(cfg, ds.node_count, rng, first, unit)

    def ops(self, snapshot: Snapshot) -> SnapshotOps:
        key = id(snapshot)
        if key not in self._ops:
            self._ops[key] = SnapshotOps.build(snapshot, self.time_origin, self.time_unit)
        return self._ops[key]

    def zero_state(self) -> HiddenStates:
        return HiddenStates.zeros(self.node_count, self.cfg.d, self.cfg.k)

    def encode(self, snapshot: Snapshot, hidden: HiddenStates,
               live: Optional[LiveRows] = None) -> LayerStack:
        nodes = snapshot.local_nodes
        P_in = dc.spmm(_select(nodes, self.node_count), self.store["features"])
        carried = [None] * self.cfg.k
        for layer in self.layers:
            if layer < self.cfg.k:
                carried[layer] = gather_state(hidden, layer, nodes, live)
        return encode_snapshot(self.ops(snapshot), P_in, self.store, self.opts, carried)

    def forward(self, window: Sequence[Snapshot], hidden: HiddenStates) -> Forward:
        """Encode consecutive snapshots, carrying state; gradients span the window."""
        live = None
        for snap in window:
            stack = self.encode(snap, hidden, live)
            live, hidden = advance_snapshot(stack, hidden, self.store, snap.local_nodes,
                                            self.cfg.intermediate_layers, live)
        return Forward(stack, live, hidden)

    def node_rows(self, fwd: Forward, candidates) -> Tuple[Tensor, Dict[int, int]]:
        """P*^(k) rows for every seen node touched by the candidates."""
        need = sorted({v for c in candidates for v in c if fwd.hidden.seen[v]})
        nodes = np.array(need, dtype=np.int64)
        rows = gather_state(fwd.hidden, self.cfg.k, nodes, fwd.live)
        return rows, {int(v): i for i, v in enumerate(nodes)}

    def score(self, fwd: Forward, candidates):
        rows, row_of = self.node_rows(fwd, candidates)
        return predict_candidates(rows, row_of, candidates, self.store["pred.w"], self.store["pred.b"])

    def loss(self, fwd: Forward, candidates, labels) -> Tuple[Tensor, List[int]]:
        probs, kept = self.score(fwd, candidates)
        if probs is None:
            raise EmptyBatch("no scorable candidates")
        lp = bce_loss(probs, np.asarray(labels)[kept])
        lc = None
        if self.opts.bihe and fwd.stack.QS is not None:
            lc = contrastive_loss(fwd.stack.QS, fwd.stack.QT)
        return total_loss(lp, lc, self.cfg.beta), kept


def _select(nodes, n):
    nodes = np.asarray(nodes, dtype=np.int64)
    return sp.csr_matrix((np.ones(len(nodes)), (np.arange(len(nodes)), nodes)), shape=(len(nodes), n))


# ---------------------------------------------------------------------------
# live-update protocol

def split_counts(n: int, fractions=(0.7, 0.2, 0.1)) -> List[int]:
    """Largest-remainder rounding; ties go to the earlier split."""
    raw = [f * n for f in fractions]
    counts = [math.floor(r + 1e-9) for r in raw]
    rema = [r - c for r, c in zip(raw, counts)]
    for i in sorted(range(len(raw)), key=lambda i: (-round(rema[i], 9), i))[: n - sum(counts)]:
        counts[i] += 1
    return counts


def _evaluate(model: Lincoln, fwd: Forward, batch) -> Optional[Tuple[float, float, int]]:
    probs, kept = model.score(fwd, batch.candidates)
    if probs is None:
        return None
    y = batch.labels[kept]
    if y.min() == y.max():
        return None
    s = probs.data.ravel()
    return auroc(s, y), average_precision(s, y), len(kept)


def _run_once(ds: DynamicHypergraph, cfg: TrainConfig, run: int, seed_seq) -> dict:
    init_ss, split_ss, neg_ss = seed_seq.spawn(3)
    model = Lincoln.for_dataset(cfg, ds, np.random.default_rng(init_ss))
    split_rng = np.random.default_rng(split_ss)
    neg_rng = np.random.default_rng(neg_ss)
    history = {-1: model.zero_state()}     # hidden state after encoding snapshot s
    rows, skipped = [], []
    for t in range(1, len(ds.snapshots)):
        target = ds.snapshots[t]
        lo = max(0, t - cfg.bptt_window)
        window = ds.snapshots[lo:t]
        start_state = history[lo - 1]
        positives = sorted({e.nodes for e in target.edges if e.size >= 2})
        if len(positives) >= cfg.min_edges:
            rec = _train_snapshot(model, cfg, window, start_state, target, positives,
                                  split_rng, neg_rng)
        else:
            rec = None
            log.warning("snapshot %d skipped: %d usable hyperedges", t, len(positives))
        if rec is None:
            skipped.append(t)
        else:
            rec["snapshot"] = t
            rows.append(rec)
        fwd = model.forward(window, start_state)
        history[t - 1] = fwd.hidden
        for s in [s for s in history if s < t - cfg.bptt_window]:
            del history[s]
    n = len(ds.snapshots)
    lo = max(0, n - cfg.bptt_window)
    final = model.forward(ds.snapshots[lo:], history[lo - 1]).hidden
    out = {"run": run, "seed": _seed_of(seed_seq), "snapshots": rows, "skipped": skipped}
    if rows:
        out["mean_auroc"] = float(np.mean([r["auroc"] for r in rows]))
        out["mean_ap"] = float(np.mean([r["ap"] for r in rows]))
    out["model"] = model
    out["state"] = final
    return out


def _seed_of(ss) -> int:
    return int(ss.generate_state(1)[0])


def _train_snapshot(model: Lincoln, cfg: TrainConfig, window, start_state, target: Snapshot,
                    positives, split_rng, neg_rng) -> Optional[dict]:
    n_tr, n_va, n_te = split_counts(len(positives))
    order = split_rng.permutation(len(positives))
    parts = [[positives[i] for i in order[a:b]]
             for a, b in ((0, n_tr), (n_tr, n_tr + n_va), (n_tr + n_va, len(positives)))]
    pool = EdgePool([e.nodes for e in target.edges], target.local_nodes)
    idx = target.spec.index
    val = make_candidate_batch(pool, parts[1], cfg.negative_ratio, neg_rng, idx)
    test = make_candidate_batch(pool, parts[2], cfg.negative_ratio, neg_rng, idx)
    store = model.store
    best = None
    for epoch in range(cfg.epochs_per_snapshot + 1):
        fwd = model.forward(window, start_state)
        if epoch > 0:
            v = _evaluate(model, fwd, val)
            te = _evaluate(model, fwd, test)
            if te is not None:
                score = v[0] if v is not None else -1.0
                if best is None or score > best["val_auroc"]:
                    best = {"val_auroc": score, "auroc": te[0], "ap": te[1], "n_test": te[2],
                            "best_epoch": epoch, "params": store.snapshot()}
        if epoch == cfg.epochs_per_snapshot:
            break
        train = make_candidate_batch(pool, parts[0], cfg.negative_ratio, neg_rng, idx)
        try:
            loss, kept = model.loss(fwd, train.candidates, train.labels)
        except EmptyBatch:
            continue
        if len(set(train.labels[kept].tolist())) < 2:
            continue    # one class left after dropping unknown candidates: no ranking signal
        grads = dc.backward(loss, store)
        dc.adam_step(store, grads, cfg.lr)
    if best is None:
        return None
    store.restore(best.pop("params"))
    return best


def live_update_run(ds: DynamicHypergraph, cfg: TrainConfig, parallel: bool = False,
                    keep_models: bool = False) -> dict:
    """Train/validate/test inside every snapshot in order; average over runs.

    Snapshot t is predicted from the encoding of snapshots before it. Returns
    a JSON-serializable report (plus ``models`` and final hidden ``states``
    if ``keep_models``).
    """
    if len(ds.snapshots) < 2:
        raise DatasetTooSmall("live-update evaluation needs at least two snapshots")
    seqs = np.random.SeedSequence(cfg.seed).spawn(cfg.runs)
    if parallel and cfg.runs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor() as ex:
            runs = list(ex.map(_run_once, [ds] * cfg.runs, [cfg] * cfg.runs, range(cfg.runs), seqs))
    else:
        runs = [_run_once(ds, cfg, r, s) for r, s in enumerate(seqs)]
    models = [r.pop("model") for r in runs]
    states = [r.pop("state") for r in runs]
    scored = [r for r in runs if r["snapshots"]]
    if not scored:
        raise DatasetTooSmall(f"no snapshot had >= {cfg.min_edges} usable hyperedges")
    report = {
        "config": cfg.to_dict(),
        "runs": runs,
        "mean_auroc": float(np.mean([r["mean_auroc"] for r in scored])),
        "mean_ap": float(np.mean([r["mean_ap"] for r in scored])),
    }
    if keep_models:
        report["models"] = models
        report["states"] = states
    return report


def report_rows(report: dict) -> List[dict]:
    return [{"run": r["run"], "snapshot": s["snapshot"], "auroc": s["auroc"], "ap": s["ap"],
             "n_test": s["n_test"]} for r in report["runs"] for s in r["snapshots"]]


def report_curves(report: dict) -> List[dict]:
    by: Dict[int, List[dict]] = {}
    for row in report_rows(report):
        by.setdefault(row["snapshot"], []).append(row)
    return [{"snapshot": t, "auroc": float(np.mean([r["auroc"] for r in rs])),
             "ap": float(np.mean([r["ap"] for r in rs])), "runs": len(rs)}
            for t, rs in sorted(by.items())]
