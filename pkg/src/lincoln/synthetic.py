"""Seeded synthetic dynamic hypergraphs with planted mechanisms."""
from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

import numpy as np

from .hypercore import DynamicHypergraph, from_edge_lists


def toy() -> DynamicHypergraph:
    """6 nodes, 3 hyperedges, 2 snapshots: the gradient-check instance."""
    return from_edge_lists([[((0, 1, 2), 0), ((2, 3, 4), 1)], [((1, 4, 5), 2)]],
                           bounds=[(0, 2), (2, 4)], node_count=6)


def _noise(rng, universe: np.ndarray, count: int, sizes: Tuple[int, int]) -> List[Tuple[int, ...]]:
    out = []
    for _ in range(count):
        s = int(rng.integers(sizes[0], sizes[1] + 1))
        out.append(tuple(sorted(int(v) for v in rng.choice(universe, s, replace=False))))
    return out


def planted_period(n_snapshots: int = 12, n_tracked: int = 30, period: int = 3,
                   edge_size: int = 3, staggered: bool = True, noise_edges: int = 200,
                   noise_sizes: Tuple[int, int] = (1, 1), pool: int = 200,
                   tracked_noise: float = 0.0, slot: int = 10, seed: int = 0) -> DynamicHypergraph:
    """Disjoint tracked hyperedges that re-appear every ``period`` snapshots.

    staggered: tracked edge i appears at snapshots t with t % period == i % period.
    Otherwise all tracked edges appear at t % period == 0. Each snapshot also
    holds ``noise_edges`` uniform random node sets over ``pool`` extra nodes,
    and each inactive tracked node shows up as a singleton with probability
    ``tracked_noise``.
    """
    rng = np.random.default_rng(seed)
    tracked = [tuple(range(i * edge_size, (i + 1) * edge_size)) for i in range(n_tracked)]
    n_track_nodes = n_tracked * edge_size
    pool_nodes = np.arange(n_track_nodes, n_track_nodes + pool)
    snaps, bounds = [], []
    for t in range(n_snapshots):
        if staggered:
            active = [e for i, e in enumerate(tracked) if i % period == t % period]
        else:
            active = tracked if t % period == 0 else []
        busy = {v for e in active for v in e}
        idle = [v for v in range(n_track_nodes) if v not in busy]
        stray = [(v,) for v, u in zip(idle, rng.random(len(idle))) if u < tracked_noise]
        noise = _noise(rng, pool_nodes, noise_edges, noise_sizes) if pool else []
        sets = active + stray + noise
        times = rng.integers(t * slot, (t + 1) * slot, size=len(sets))
        snaps.append([(e, int(ts)) for e, ts in zip(sets, times)])
        bounds.append((t * slot, (t + 1) * slot))
    return from_edge_lists(snaps, bounds=bounds, node_count=n_track_nodes + pool)


def planted_similarity(n_snapshots: int = 10, n_nodes: int = 600, lineages: int = 20,
                       edge_size: int = 3, flip: int = 1, echoes: int = 2, burst: int = 2,
                       p_burst: float = 0.5, slot: int = 100, seed: int = 0) -> DynamicHypergraph:
    """Future hyperedges are perturbations of recent, temporally tight ones.

    Each lineage holds one hyperedge per snapshot. Every member node also
    shows up ``echoes`` times as a singleton: within ``burst`` time units of
    the hyperedge for bursty lineages, anywhere in the snapshot otherwise.
    Bursty lineages continue in the next snapshot as a copy with ``flip``
    members swapped for random nodes; other lineages end, their nodes
    reappear once as singletons, and fresh lineages replace them. Bursty and
    ending lineages look the same structurally; only formation times differ.
    """
    rng = np.random.default_rng(seed)
    nodes = np.arange(n_nodes)

    def fresh():
        return tuple(sorted(int(v) for v in rng.choice(nodes, edge_size, replace=False)))

    current = [fresh() for _ in range(lineages)]
    ended: List[Tuple[int, ...]] = []
    snaps, bounds = [], []
    for t in range(n_snapshots):
        lo, hi = t * slot, (t + 1) * slot
        edges = []
        for e in ended:
            edges.extend(((v,), int(rng.integers(lo, hi))) for v in e)
        nxt, ended = [], []
        for e in current:
            ts = int(rng.integers(lo + burst, hi - burst))
            edges.append((e, ts))
            tight = rng.random() < p_burst
            for v in e:
                for _ in range(echoes):
                    at = int(rng.integers(ts - burst, ts + burst + 1)) if tight else int(rng.integers(lo, hi))
                    edges.append(((v,), at))
            if tight:
                nxt.append(_perturb(rng, e, nodes, flip))
            else:
                ended.append(e)
        current = nxt + [fresh() for _ in range(lineages - len(nxt))]
        snaps.append(edges)
        bounds.append((lo, hi))
    return from_edge_lists(snaps, bounds=bounds, node_count=n_nodes)


def _perturb(rng, edge: Sequence[int], nodes: np.ndarray, flip: int) -> Tuple[int, ...]:
    keep = list(rng.choice(edge, len(edge) - flip, replace=False))
    fresh = [v for v in rng.permutation(nodes) if v not in edge][:flip]
    return tuple(sorted(int(v) for v in keep + fresh))
