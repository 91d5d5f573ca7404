"""Motif negative sampling (MNS) and labeled candidate batches."""
from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

MAX_TRIES = 50


class NoNegativeFound(RuntimeError):
    pass


class EdgePool:
    """Hyperedges of one snapshot indexed for connected growth."""

    def __init__(self, edges: Iterable[Sequence[int]], nodes: Optional[Iterable[int]] = None):
        self.edges: List[Tuple[int, ...]] = [tuple(sorted(set(e))) for e in edges]
        self.positives: Set[FrozenSet[int]] = {frozenset(e) for e in self.edges}
        self.by_node: Dict[int, List[int]] = defaultdict(list)
        for j, e in enumerate(self.edges):
            for v in e:
                self.by_node[v].append(j)
        self.nodes = np.array(sorted(set(nodes) if nodes is not None else self.by_node), dtype=np.int64)
        self.growable = [j for j, e in enumerate(self.edges) if len(e) >= 2]


@dataclass
class MNSStats:
    fallbacks: int = 0
    failures: int = 0


def mns_negative(pool: EdgePool, target_size: int, rng: np.random.Generator,
                 stats: Optional[MNSStats] = None) -> FrozenSet[int]:
    """Grow a connected node set of exactly ``target_size`` nodes that is not a positive.

    The seed hyperedge contributes at most target_size - 1 of its nodes, so a
    seed of the target size cannot just reproduce itself. Growth then unions
    random other hyperedges touching the set; on overshoot only a random subset of
    the last hyperedge's new nodes is taken. With no touching hyperedge left,
    a random snapshot node is added instead (counted in ``stats.fallbacks``).
    """
    if target_size < 2:
        raise ValueError("negative candidates need at least two nodes")
    if not pool.growable:
        raise NoNegativeFound("snapshot has no hyperedge of size >= 2")
    for _ in range(MAX_TRIES):
        seed_j = pool.growable[rng.integers(len(pool.growable))]
        seed = pool.edges[seed_j]
        if len(seed) >= target_size:
            S = set(int(v) for v in rng.choice(seed, target_size - 1, replace=False))
        else:
            S = set(seed)
        fell_back = False
        while len(S) < target_size:
            touching = sorted({j for v in S for j in pool.by_node[v]
                               if j != seed_j and any(u not in S for u in pool.edges[j])})
            if touching:
                e = pool.edges[touching[rng.integers(len(touching))]]
                novel = [u for u in e if u not in S]
                need = target_size - len(S)
                if len(novel) > need:
                    novel = [int(u) for u in rng.choice(novel, need, replace=False)]
                S.update(novel)
            else:
                rest = [int(v) for v in pool.nodes if v not in S]
                if not rest:
                    break
                S.add(rest[rng.integers(len(rest))])
                fell_back = True
        cand = frozenset(S)
        if len(cand) == target_size and cand not in pool.positives:
            if stats is not None and fell_back:
                stats.fallbacks += 1
            return cand
    if stats is not None:
        stats.failures += 1
    raise NoNegativeFound(f"no size-{target_size} negative after {MAX_TRIES} tries")


@dataclass
class CandidateBatch:
    candidates: List[Tuple[int, ...]]
    labels: np.ndarray
    snapshot: int
    dropped: int = 0
    fallbacks: int = 0

    def __len__(self) -> int:
        return len(self.candidates)


def make_candidate_batch(pool: EdgePool, positives: Sequence[Sequence[int]], ratio: int,
                         rng: np.random.Generator, snapshot: int = 0,
                         size_policy: str = "match") -> CandidateBatch:
    """Each usable positive plus ``ratio`` size-matched MNS negatives, shuffled.

    Positives of size < 2 and positives for which no negative can be found are
    dropped and counted.
    """
    if ratio < 1:
        raise ValueError("ratio must be >= 1")
    if size_policy != "match":
        raise ValueError(f"unknown size policy {size_policy!r}")
    stats = MNSStats()
    cands, labels, dropped = [], [], 0
    for pos in positives:
        pos = tuple(sorted(set(pos)))
        if len(pos) < 2:
            dropped += 1
            continue
        try:
            negs = [mns_negative(pool, len(pos), rng, stats) for _ in range(ratio)]
        except NoNegativeFound:
            dropped += 1
            continue
        cands.append(pos)
        labels.append(1)
        for n in negs:
            cands.append(tuple(sorted(n)))
            labels.append(0)
    order = rng.permutation(len(cands))
    return CandidateBatch([cands[i] for i in order], np.array(labels, dtype=np.int64)[order],
                          snapshot, dropped, stats.fallbacks)


def dump_batches_csv(batches: Iterable[CandidateBatch], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for b in batches:
            for c, y in zip(b.candidates, b.labels):
                w.writerow([b.snapshot, int(y), *c])
