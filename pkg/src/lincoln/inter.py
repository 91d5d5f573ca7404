"""Inter-snapshot learning: per-layer GRU updates of node states over a changing node set.

Gating convention: z pulls toward the candidate,
    z  = sigmoid(x Wz + h Uz + bz)
    r  = sigmoid(x Wr + h Ur + br)
    h~ = tanh(x Wh + (r * h) Uh + bh)
    h' = (1 - z) * h + z * h~
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from . import diffcore as dc
from .diffcore import Tensor
from .intra import LayerStack

LAYER_MODES = ("final_only", "half", "all")


class LayerCountMismatch(ValueError):
    pass


def updated_layers(k: int, mode: str) -> List[int]:
    """Which of the layers 0..k carry a recurrent state."""
    if mode == "final_only":
        return [k]
    if mode == "half":
        return list(range(k // 2 + (k % 2), k + 1)) if k > 1 else [k]
    if mode == "all":
        return list(range(k + 1))
    raise ValueError(f"unknown intermediate_layers mode {mode!r}")


@dataclass
class HiddenStates:
    layers: List[np.ndarray]           # per layer 0..k: node_count x d
    seen: np.ndarray                   # bool per node

    @classmethod
    def zeros(cls, node_count: int, d: int, k: int) -> "HiddenStates":
        return cls([np.zeros((node_count, d)) for _ in range(k + 1)],
                   np.zeros(node_count, dtype=bool))

    def copy(self) -> "HiddenStates":
        return HiddenStates([a.copy() for a in self.layers], self.seen.copy())


def register_gru_params(store: dc.ParamStore, rng: np.random.Generator, d: int, layers) -> None:
    for layer in layers:
        p = f"gru{layer}."
        for gate in ("z", "r", "h"):
            store.add(p + "W" + gate, dc.uniform_init(rng, (d, d), d))
            store.add(p + "U" + gate, dc.uniform_init(rng, (d, d), d))
            store.add(p + "b" + gate, dc.uniform_init(rng, (1, d), d))


def gru_cell(x: Tensor, h: Tensor, store: dc.ParamStore, prefix: str) -> Tensor:
    g = lambda name: store[prefix + name]
    z = dc.sigmoid(dc.add(dc.affine(x, g("Wz"), g("bz")), dc.matmul(h, g("Uz"))))
    r = dc.sigmoid(dc.add(dc.affine(x, g("Wr"), g("br")), dc.matmul(h, g("Ur"))))
    cand = dc.tanh(dc.add(dc.affine(x, g("Wh"), g("bh")), dc.matmul(dc.mul(r, h), g("Uh"))))
    keep = dc.mul(dc.sub(dc.Tensor(np.ones(z.shape)), z), h)
    return dc.add(keep, dc.mul(z, cand))


def selection(rows: Sequence[int], n_cols: int) -> sp.csr_matrix:
    """0/1 matrix picking ``rows`` out of an n_cols-row matrix."""
    rows = np.asarray(rows, dtype=np.int64)
    return sp.csr_matrix((np.ones(len(rows)), (np.arange(len(rows)), rows)),
                         shape=(len(rows), n_cols))


@dataclass
class LiveRows:
    """Differentiable recurrent outputs produced inside the current BPTT window."""
    nodes: np.ndarray                    # global ids, sorted
    layers: Dict[int, Tensor]            # layer -> |nodes| x d


def gather_state(hidden: HiddenStates, layer: int, nodes: np.ndarray,
                 live: Optional[LiveRows] = None) -> Tensor:
    """Rows of a layer's state for ``nodes``; rows produced inside the current
    BPTT window stay attached to the graph, older rows are constants."""
    base = hidden.layers[layer][nodes]
    if live is None or layer not in live.layers:
        return dc.Tensor(base)
    pos = {int(v): i for i, v in enumerate(live.nodes)}
    hit = [i for i, v in enumerate(nodes) if int(v) in pos]
    if not hit:
        return dc.Tensor(base)
    base = base.copy()
    base[hit] = 0.0
    pick = sp.csr_matrix((np.ones(len(hit)), (hit, [pos[int(nodes[i])] for i in hit])),
                         shape=(len(nodes), len(live.nodes)))
    return dc.add(dc.Tensor(base), dc.spmm(pick, live.layers[layer]))


def temporal_update(P_layer: Tensor, h_prev: Tensor, store: dc.ParamStore, layer: int) -> Tensor:
    """P*^(l) for the local nodes; the caller writes it back into the global state."""
    return gru_cell(P_layer, h_prev, store, f"gru{layer}.")


def advance_snapshot(stack: LayerStack, hidden: HiddenStates, store: dc.ParamStore,
                     nodes: np.ndarray, mode: str = "all",
                     live: Optional[LiveRows] = None) -> Tuple[LiveRows, HiddenStates]:
    """Per-layer GRU update for one snapshot.

    Returns the differentiable outputs (layer -> local rows) and a new
    HiddenStates with the local rows overwritten; other rows are untouched.
    """
    k = len(hidden.layers) - 1
    if stack.k != k:
        raise LayerCountMismatch(f"stack has {stack.k + 1} layers, state has {k + 1}")
    nodes = np.asarray(nodes, dtype=np.int64)
    if len(nodes) and (nodes.min() < 0 or nodes.max() >= len(hidden.seen)):
        raise IndexError("node id outside the global node table")
    fresh = {}
    new = hidden.copy()
    for layer in updated_layers(k, mode):
        h_prev = gather_state(hidden, layer, nodes, live)
        h_new = temporal_update(stack.P[layer], h_prev, store, layer)
        fresh[layer] = h_new
        new.layers[layer][nodes] = h_new.data
    new.seen[nodes] = True
    return _merge_live(live, nodes, fresh), new


def _merge_live(live: Optional[LiveRows], nodes: np.ndarray, fresh: Dict[int, Tensor]) -> LiveRows:
    """Rows from earlier snapshots of the window stay live unless overwritten."""
    if live is None:
        return LiveRows(nodes, fresh)
    older = np.setdiff1d(live.nodes, nodes)
    if not len(older):
        return LiveRows(nodes, fresh)
    union = np.union1d(nodes, older)
    pos = {int(v): i for i, v in enumerate(union)}
    old_pos = {int(v): i for i, v in enumerate(live.nodes)}
    put_new = sp.csr_matrix((np.ones(len(nodes)), ([pos[int(v)] for v in nodes], np.arange(len(nodes)))),
                            shape=(len(union), len(nodes)))
    put_old = sp.csr_matrix((np.ones(len(older)), ([pos[int(v)] for v in older],
                                                    [old_pos[int(v)] for v in older])),
                            shape=(len(union), len(live.nodes)))
    layers = {}
    for layer, h in fresh.items():
        if layer in live.layers:
            layers[layer] = dc.add(dc.spmm(put_new, h), dc.spmm(put_old, live.layers[layer]))
        else:
            layers[layer] = dc.spmm(put_new, h)
    return LiveRows(union, layers)
