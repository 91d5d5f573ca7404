"""Observation tooling: structural overlap vs formation-time gap, and periodic re-appearance."""
from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .hypercore import DynamicHypergraph, Hyperedge

OVERLAP_MODES = ("count", "jaccard")


class WindowEmpty(ValueError):
    pass


@dataclass(frozen=True)
class OverlapGapRow:
    overlap_bucket: float        # intersection size, or Jaccard bin lower edge
    mean_abs_time_gap: float
    pair_count: int


@dataclass(frozen=True)
class ReappearanceRow:
    snapshot: int
    reappearance_rate: float


def window_size(n_snapshots: int, fraction: float = 0.2) -> int:
    return max(1, math.floor(fraction * n_snapshots))


def _sample(ds: DynamicHypergraph, sample_size: int, fraction: float,
            rng: np.random.Generator) -> List[Tuple[int, Hyperedge]]:
    """Uniform sample (without replacement) of (snapshot index, edge) from the window."""
    if not ds.snapshots:
        raise WindowEmpty("dataset has no snapshots")
    pool = [(t, e) for t, s in enumerate(ds.snapshots[:window_size(len(ds.snapshots), fraction)])
            for e in s.edges]
    if not pool:
        raise WindowEmpty("sample window holds no hyperedges")
    pick = rng.choice(len(pool), min(sample_size, len(pool)), replace=False)
    return [pool[i] for i in sorted(pick)]


def jaccard_bucket(a: frozenset, b: frozenset, bins: int = 10) -> float:
    """Lower edge of the Jaccard bin; bins are [i/bins, (i+1)/bins), the last one closed."""
    j = len(a & b) / len(a | b)
    return min(math.floor(j * bins), bins - 1) / bins


def overlap_vs_time_gap(ds: DynamicHypergraph, sample_size: int = 50,
                        rng: Optional[np.random.Generator] = None, mode: str = "count",
                        fraction: float = 0.2) -> List[OverlapGapRow]:
    """Mean |t_i - t_j| per overlap bucket over same-snapshot overlapping sampled pairs."""
    if sample_size < 2:
        raise ValueError("sample_size must be >= 2")
    if mode not in OVERLAP_MODES:
        raise ValueError(f"mode must be one of {OVERLAP_MODES}")
    rng = rng if rng is not None else np.random.default_rng(0)
    sample = _sample(ds, sample_size, fraction, rng)
    gaps: Dict[float, List[int]] = defaultdict(list)
    for i in range(len(sample)):
        ti, ei = sample[i]
        a = frozenset(ei.nodes)
        for j in range(i + 1, len(sample)):
            tj, ej = sample[j]
            if ti != tj:
                continue
            b = frozenset(ej.nodes)
            shared = len(a & b)
            if not shared:
                continue
            key = float(shared) if mode == "count" else jaccard_bucket(a, b)
            gaps[key].append(abs(ei.timestamp - ej.timestamp))
    return [OverlapGapRow(k, float(np.mean(v)), len(v)) for k, v in sorted(gaps.items())]


def reappearance_rate(ds: DynamicHypergraph, sample_size: int = 50,
                      rng: Optional[np.random.Generator] = None,
                      fraction: float = 0.2) -> List[ReappearanceRow]:
    """Share of sampled window relations whose exact node set occurs in each later snapshot."""
    if len(ds.snapshots) < 2:
        raise ValueError("reappearance needs at least two snapshots")
    rng = rng if rng is not None else np.random.default_rng(0)
    sample = _sample(ds, sample_size, fraction, rng)
    tracked = [frozenset(e.nodes) for _, e in sample]
    rows = []
    for t in range(window_size(len(ds.snapshots), fraction), len(ds.snapshots)):
        present = set(ds.snapshots[t].edge_sets())
        hits = sum(1 for s in tracked if s in present)
        rows.append(ReappearanceRow(t, hits / len(tracked)))
    return rows


def write_overlap_csv(rows: List[OverlapGapRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["overlap", "mean_gap", "count"])
        for r in rows:
            w.writerow([repr(r.overlap_bucket), repr(r.mean_abs_time_gap), r.pair_count])


def write_reappearance_csv(rows: List[ReappearanceRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["snapshot", "rate"])
        for r in rows:
            w.writerow([r.snapshot, repr(r.reappearance_rate)])
