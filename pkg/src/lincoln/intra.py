"""Intra-snapshot encoder: time injection, 2-stage aggregation, proximity-graph encoding."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from . import diffcore as dc
from .diffcore import ShapeMismatch, Tensor
from .hypercore import Snapshot


class OddDimension(ValueError):
    pass


class InvalidTau(ValueError):
    pass


def identity(x: Tensor) -> Tensor:
    return x


ACTIVATIONS = {"relu": dc.relu, "identity": identity, "tanh": dc.tanh}


@dataclass
class PeriodicParams:
    """freq is in cycles per time unit (angular frequency = 2*pi*freq)."""
    freq: Tensor
    phase: Tensor

    def __post_init__(self):
        if self.freq.shape != self.phase.shape:
            raise ShapeMismatch(f"freq {self.freq.shape} vs phase {self.phase.shape}")


@dataclass
class ProximityGraph:
    n: int
    adjacency: sp.csr_matrix      # symmetric, zero diagonal, weights in (0, 1]
    kind: str

    def normalized(self) -> sp.csr_matrix:
        """D^-1/2 (A + I) D^-1/2 with unit self-loops."""
        a = self.adjacency + sp.identity(self.n, format="csr")
        deg = np.asarray(a.sum(axis=1)).ravel()
        inv = sp.diags(1.0 / np.sqrt(deg))
        return (inv @ a @ inv).tocsr()


@dataclass
class LayerStack:
    P: List[Tensor]                  # P^(0..k), each |V_t| x d
    Q: List[Tensor]                  # hyperedge embeddings from N2E, layers 1..k
    Q_prime: List[Tensor]            # what E2N consumed, layers 1..k
    P_prime: List[Tensor]            # attention output fed to N2E, layers 1..k
    QS: Optional[Tensor] = None      # last-layer structural / temporal embeddings
    QT: Optional[Tensor] = None

    @property
    def k(self) -> int:
        return len(self.P) - 1


def periodic_time_embedding(t_start: float, t_end: float, params: PeriodicParams,
                            d: Optional[int] = None) -> Tensor:
    """(1, d) row: cosines of both window endpoints."""
    m = params.freq.shape[-1]
    if d is not None and (d % 2 or d != 2 * m):
        raise OddDimension(f"time embedding needs even d = 2*{m}, got {d}")
    start = dc.cos_affine(params.freq, params.phase, t_start)
    end = dc.cos_affine(params.freq, params.phase, t_end)
    return dc.concat_cols([start, end])


def snapshot_attention(P: Tensor, snap: Tensor, Wq: Tensor, Wk: Tensor, Wv: Tensor) -> Tensor:
    """Per-node sigmoid gate on a scaled dot score, with residual injection.

    alpha_v = sigmoid((p_v Wq) . (snap Wk) / sqrt(d));  p'_v = p_v + alpha_v * (snap Wv)
    """
    d = P.shape[1]
    if snap.shape != (1, d):
        raise ShapeMismatch(f"snap {snap.shape} does not match embedding width {d}")
    key = dc.matmul(snap, Wk)                                   # 1 x d
    score = dc.scale(dc.matmul(dc.matmul(P, Wq), dc.transpose(key)), 1.0 / np.sqrt(d))
    gate = dc.sigmoid(score)                                    # n x 1
    return dc.add(P, dc.matmul(gate, dc.matmul(snap, Wv)))      # outer product gate x value


def edge_mean_operator(snapshot: Snapshot) -> sp.csr_matrix:
    """D_E^-1 H^T."""
    H = snapshot.incidence
    return (sp.diags(1.0 / snapshot.d_e) @ H.T).tocsr()


def node_mean_operator(snapshot: Snapshot) -> sp.csr_matrix:
    """D_V^-1 H."""
    return (sp.diags(1.0 / snapshot.d_v) @ snapshot.incidence).tocsr()


def n2e_aggregate(edge_mean: sp.csr_matrix, P: Tensor, W: Tensor, b: Tensor,
                  act: Callable = dc.relu) -> Tensor:
    if edge_mean.shape[1] != P.shape[0]:
        raise ShapeMismatch(f"N2E: operator {edge_mean.shape} vs P {P.shape}")
    return act(dc.affine(dc.spmm(edge_mean, P), W, b))


def e2n_aggregate(node_mean: sp.csr_matrix, Q: Tensor, W: Tensor, b: Tensor,
                  act: Callable = dc.relu) -> Tensor:
    if node_mean.shape[1] != Q.shape[0]:
        raise ShapeMismatch(f"E2N: operator {node_mean.shape} vs Q {Q.shape}")
    return act(dc.affine(dc.spmm(node_mean, Q), W, b))


def build_proximity_graphs(snapshot: Snapshot, tau: Optional[float] = None):
    """Structural (Jaccard) and temporal (exp(-|dt|/tau)) graphs over hyperedges.

    Hyperedges are linked iff they share a node; both graphs have the same
    sparsity pattern. tau defaults to the snapshot duration.
    """
    if snapshot.n_edges < 1:
        raise ValueError("snapshot has no hyperedges")
    if tau is None:
        tau = float(snapshot.spec.t_end - snapshot.spec.t_start)
    if not tau > 0:
        raise InvalidTau(f"tau must be positive, got {tau}")
    H = snapshot.incidence
    inter = (H.T @ H).tocoo()
    keep = inter.row != inter.col
    i, j, shared = inter.row[keep], inter.col[keep], inter.data[keep]
    sizes = snapshot.d_e
    w_s = shared / (sizes[i] + sizes[j] - shared)
    ts = snapshot.timestamps.astype(np.float64)
    w_t = np.exp(-np.abs(ts[i] - ts[j]) / tau)
    n = snapshot.n_edges
    gs = sp.csr_matrix((w_s, (i, j)), shape=(n, n))
    gt = sp.csr_matrix((w_t, (i, j)), shape=(n, n))
    return ProximityGraph(n, gs, "structural"), ProximityGraph(n, gt, "temporal")


def dump_proximity_csv(gs: ProximityGraph, gt: ProximityGraph, path) -> None:
    s, t = gs.adjacency.tocoo(), gt.adjacency.tocsr()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["edge_i", "edge_j", "w_s", "w_t"])
        for i, j, ws in sorted(zip(s.row, s.col, s.data)):
            w.writerow([int(i), int(j), repr(float(ws)), repr(float(t[i, j]))])


def gcn_propagate(Q: Tensor, norm_adj: sp.csr_matrix, W: Tensor, act: Callable = dc.relu) -> Tensor:
    """One GCN layer: act(A_hat Q W). ``norm_adj`` comes from ProximityGraph.normalized()."""
    if norm_adj.shape[0] != Q.shape[0]:
        raise ShapeMismatch(f"GCN: graph on {norm_adj.shape[0]} nodes, Q has {Q.shape[0]} rows")
    return act(dc.matmul(dc.spmm(norm_adj, Q), W))


def st_aggregate(QS: Tensor, QT: Tensor, W: Tensor, b: Tensor, act: Callable = dc.relu) -> Tensor:
    dc._same_shape(QS, QT, "st_aggregate")
    return act(dc.affine(dc.concat_cols([QS, QT]), W, b))


@dataclass
class SnapshotOps:
    """Constant operators for one snapshot, built once and reused every epoch."""
    snapshot: Snapshot
    edge_mean: sp.csr_matrix
    node_mean: sp.csr_matrix
    adj_s: sp.csr_matrix
    adj_t: sp.csr_matrix
    t_start: float
    t_end: float

    @classmethod
    def build(cls, snapshot: Snapshot, time_origin: float = 0.0, time_unit: float = 1.0,
              tau: Optional[float] = None) -> "SnapshotOps":
        gs, gt = build_proximity_graphs(snapshot, tau)
        return cls(snapshot, edge_mean_operator(snapshot), node_mean_operator(snapshot),
                   gs.normalized(), gt.normalized(),
                   (snapshot.spec.t_start - time_origin) / time_unit,
                   (snapshot.spec.t_end - time_origin) / time_unit)


@dataclass
class EncoderOptions:
    k: int = 2
    pin: bool = True
    bihe: bool = True
    pin_every_layer: bool = True
    activation: str = "relu"


def encode_snapshot(ops: SnapshotOps, P_in: Tensor, store: dc.ParamStore, opts: EncoderOptions,
                    carried: Optional[Sequence[Optional[Tensor]]] = None) -> LayerStack:
    """Run k layers of [time injection -> N2E -> proximity encoding -> E2N].

    ``carried[l]`` (local rows of the previous snapshot's recurrent state for
    layer l, or None) is added to the input of layer l+1.
    """
    act = ACTIVATIONS[opts.activation]
    snap = None
    if opts.pin:
        periodic = PeriodicParams(store["time.freq"], store["time.phase"])
        snap = periodic_time_embedding(ops.t_start, ops.t_end, periodic, P_in.shape[1])
    stack = LayerStack([P_in], [], [], [])
    for layer in range(1, opts.k + 1):
        x = stack.P[-1]
        if carried is not None and carried[layer - 1] is not None:
            x = dc.add(x, carried[layer - 1])
        p = f"layer{layer}."
        if opts.pin and (opts.pin_every_layer or layer == 1):
            x = snapshot_attention(x, snap, store[p + "att.Wq"], store[p + "att.Wk"], store[p + "att.Wv"])
        stack.P_prime.append(x)
        Q = n2e_aggregate(ops.edge_mean, x, store[p + "n2e.W"], store[p + "n2e.b"], act)
        stack.Q.append(Q)
        if opts.bihe:
            QS = gcn_propagate(Q, ops.adj_s, store[p + "gcn_s.W"], act)
            QT = gcn_propagate(Q, ops.adj_t, store[p + "gcn_t.W"], act)
            Qp = st_aggregate(QS, QT, store[p + "st.W"], store[p + "st.b"], act)
            stack.QS, stack.QT = QS, QT
        else:
            Qp = Q
        stack.Q_prime.append(Qp)
        stack.P.append(e2n_aggregate(ops.node_mean, Qp, store[p + "e2n.W"], store[p + "e2n.b"], act))
    return stack


def register_encoder_params(store: dc.ParamStore, rng: np.random.Generator, d: int, k: int,
                            n_nodes: int, periods=(2.0, 64.0)) -> None:
    """Uniform(+-1/sqrt(fan_in)) weights; time frequencies geometric in period."""
    if d % 2:
        raise OddDimension(f"d must be even, got {d}")
    u = dc.uniform_init
    store.add("features", u(rng, (n_nodes, d), d))
    m = d // 2
    lo, hi = periods
    store.add("time.freq", (1.0 / np.geomspace(lo, hi, m)).reshape(1, m))
    store.add("time.phase", rng.uniform(-np.pi, np.pi, size=(1, m)))
    for layer in range(1, k + 1):
        p = f"layer{layer}."
        for name in ("att.Wq", "att.Wk", "att.Wv", "n2e.W", "e2n.W", "gcn_s.W", "gcn_t.W"):
            store.add(p + name, u(rng, (d, d), d))
        store.add(p + "n2e.b", u(rng, (1, d), d))
        store.add(p + "e2n.b", u(rng, (1, d), d))
        store.add(p + "st.W", u(rng, (2 * d, d), 2 * d))
        store.add(p + "st.b", u(rng, (1, d), 2 * d))
