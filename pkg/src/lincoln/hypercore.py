"""Dynamic hypergraph data model, simplex-format ingestion and snapshotting."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp


class FormatError(ValueError):
    """Base class for ingestion errors (CLI maps these to exit code 2)."""


class LengthMismatch(FormatError):
    pass


class ZeroSizeSimplex(FormatError):
    pass


class NonIntegerToken(FormatError):
    pass


class EmptyEdgeList(FormatError):
    pass


class InvalidT(FormatError):
    pass


class TimestampOutOfRange(ValueError):
    pass


@dataclass(frozen=True)
class Hyperedge:
    nodes: Tuple[int, ...]
    timestamp: int

    def __post_init__(self):
        if len(self.nodes) < 1:
            raise ValueError("hyperedge needs at least one node")
        if any(b <= a for a, b in zip(self.nodes, self.nodes[1:])):
            raise ValueError(f"hyperedge nodes must be strictly increasing: {self.nodes}")
        if self.timestamp < 0:
            raise ValueError("timestamp must be non-negative")

    @property
    def size(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class SnapshotSpec:
    index: int
    t_start: int
    t_end: int

    def __post_init__(self):
        if not self.t_start < self.t_end:
            raise ValueError(f"empty interval [{self.t_start}, {self.t_end})")


@dataclass
class Snapshot:
    spec: SnapshotSpec
    edges: List[Hyperedge]
    local_nodes: np.ndarray            # sorted global ids
    incidence: sp.csr_matrix          # |V_t| x |E_t|
    d_v: np.ndarray
    d_e: np.ndarray
    local_index: Dict[int, int] = field(repr=False, default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.local_nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def timestamps(self) -> np.ndarray:
        return np.array([e.timestamp for e in self.edges], dtype=np.int64)

    def edge_sets(self) -> List[frozenset]:
        return [frozenset(e.nodes) for e in self.edges]


@dataclass
class DynamicHypergraph:
    snapshots: List[Snapshot]
    node_count: int
    id_map: List[int]                 # dense id -> raw id
    dropped_empty: int = 0

    def __post_init__(self):
        starts = [s.spec.t_start for s in self.snapshots]
        if starts != sorted(starts):
            raise ValueError("snapshots must be ordered by t_start")
        for s in self.snapshots:
            if len(s.local_nodes) and s.local_nodes[-1] >= self.node_count:
                raise ValueError("node id out of range")

    @property
    def n_edges(self) -> int:
        return sum(s.n_edges for s in self.snapshots)

    def __len__(self) -> int:
        return len(self.snapshots)


def _ints(lines: Iterable[str], stream: str) -> List[int]:
    out = []
    for lineno, line in enumerate(lines, 1):
        for tok in line.split():
            try:
                out.append(int(tok))
            except ValueError:
                raise NonIntegerToken(f"{stream}: line {lineno}: {tok!r} is not an integer") from None
    return out


def parse_simplex_dataset(nverts_stream: Iterable[str], simplices_stream: Iterable[str],
                          times_stream: Iterable[str]) -> Tuple[List[Hyperedge], List[int]]:
    """Parse the nverts/simplices/times triple.

    Returns the hyperedges (dense ids, input order) and the dense->raw id map.
    Raw ids are numbered densely by first appearance.
    """
    nverts = _ints(nverts_stream, "nverts")
    simplices = _ints(simplices_stream, "simplices")
    times = _ints(times_stream, "times")
    if len(nverts) != len(times):
        raise LengthMismatch(f"times: {len(times)} entries but nverts has {len(nverts)}")
    if sum(nverts) != len(simplices):
        raise LengthMismatch(f"simplices: {len(simplices)} entries but nverts sums to {sum(nverts)}")
    remap: Dict[int, int] = {}
    edges, pos = [], 0
    for i, (n, ts) in enumerate(zip(nverts, times)):
        if n <= 0:
            raise ZeroSizeSimplex(f"nverts: entry {i} has size {n}")
        if ts < 0:
            raise NonIntegerToken(f"times: entry {i} is negative")
        raw = simplices[pos:pos + n]
        pos += n
        for r in raw:
            if r not in remap:
                remap[r] = len(remap)
        edges.append(Hyperedge(tuple(sorted({remap[r] for r in raw})), ts))
    id_map = [0] * len(remap)
    for r, d in remap.items():
        id_map[d] = r
    return edges, id_map


def read_simplex_files(nverts_path, simplices_path, times_path):
    with open(nverts_path) as a, open(simplices_path) as b, open(times_path) as c:
        return parse_simplex_dataset(a, b, c)


def build_snapshot(edges: Sequence[Hyperedge], spec: SnapshotSpec) -> Snapshot:
    for e in edges:
        if not spec.t_start <= e.timestamp < spec.t_end:
            raise TimestampOutOfRange(
                f"edge at {e.timestamp} outside [{spec.t_start}, {spec.t_end})")
    local_nodes = np.array(sorted({v for e in edges for v in e.nodes}), dtype=np.int64)
    index = {int(v): i for i, v in enumerate(local_nodes)}
    rows = [index[v] for e in edges for v in e.nodes]
    cols = [j for j, e in enumerate(edges) for _ in e.nodes]
    H = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(local_nodes), len(edges)))
    d_v = np.asarray(H.sum(axis=1)).ravel()
    d_e = np.asarray(H.sum(axis=0)).ravel()
    return Snapshot(spec, list(edges), local_nodes, H, d_v, d_e, index)


def partition_into_snapshots(edges: Sequence[Hyperedge], policy: str = "equal_count", T: int = 10,
                             node_count: Optional[int] = None,
                             id_map: Optional[List[int]] = None) -> DynamicHypergraph:
    """Split edges into T snapshots by count or by equal time intervals.

    Empty snapshots (possible under equal_duration) are dropped; their number
    is kept in ``DynamicHypergraph.dropped_empty``.
    """
    if not edges:
        raise EmptyEdgeList("no hyperedges to partition")
    if T < 1:
        raise InvalidT(f"T must be >= 1, got {T}")
    order = sorted(range(len(edges)), key=lambda i: edges[i].timestamp)  # stable
    ordered = [edges[i] for i in order]
    t_min = ordered[0].timestamp
    t_max = ordered[-1].timestamp
    groups: List[Tuple[List[Hyperedge], int, int]] = []
    if policy == "equal_count":
        if T > len(ordered):
            raise InvalidT(f"T={T} exceeds the number of edges ({len(ordered)})")
        per = math.ceil(len(ordered) / T)
        chunks, i = [], 0
        while i < len(ordered):
            j = min(i + per, len(ordered))
            # never cut inside a run of equal timestamps (intervals are half-open)
            while j < len(ordered) and ordered[j].timestamp == ordered[j - 1].timestamp:
                j += 1
            chunks.append(ordered[i:j])
            i = j
        lo = t_min
        for c, chunk in enumerate(chunks):
            hi = chunks[c + 1][0].timestamp if c + 1 < len(chunks) else chunk[-1].timestamp + 1
            groups.append((chunk, lo, hi))
            lo = hi
    elif policy == "equal_duration":
        lo, hi = t_min, t_max + 1
        bounds = [lo + (hi - lo) * i // T for i in range(T + 1)]
        buckets: List[List[Hyperedge]] = [[] for _ in range(T)]
        b = 0
        for e in ordered:
            while e.timestamp >= bounds[b + 1]:
                b += 1
            buckets[b].append(e)
        groups.extend((buckets[i], bounds[i], bounds[i + 1]) for i in range(T))
    else:
        raise ValueError(f"unknown partition policy {policy!r}")
    snapshots, dropped = [], 0
    for chunk, lo, hi in groups:
        if not chunk:
            dropped += 1
            continue
        snapshots.append(build_snapshot(chunk, SnapshotSpec(len(snapshots), lo, hi)))
    if node_count is None:
        node_count = 1 + max(v for e in edges for v in e.nodes)
    if id_map is None:
        id_map = list(range(node_count))
    return DynamicHypergraph(snapshots, node_count, list(id_map), dropped)


# ---------------------------------------------------------------------------
# self-describing JSON dataset file

def dataset_to_dict(ds: DynamicHypergraph) -> dict:
    return {
        "node_count": ds.node_count,
        "id_map": list(map(int, ds.id_map)),
        "snapshots": [
            {"t_start": int(s.spec.t_start), "t_end": int(s.spec.t_end),
             "edges": [[list(map(int, e.nodes)), int(e.timestamp)] for e in s.edges]}
            for s in ds.snapshots
        ],
    }


def dataset_from_dict(d: dict) -> DynamicHypergraph:
    snaps = []
    for i, s in enumerate(d["snapshots"]):
        edges = [Hyperedge(tuple(nodes), int(ts)) for nodes, ts in s["edges"]]
        snaps.append(build_snapshot(edges, SnapshotSpec(i, int(s["t_start"]), int(s["t_end"]))))
    return DynamicHypergraph(snaps, int(d["node_count"]), list(d["id_map"]))


def save_dataset(ds: DynamicHypergraph, path) -> None:
    with open(path, "w") as fh:
        json.dump(dataset_to_dict(ds), fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_dataset(path) -> DynamicHypergraph:
    with open(path) as fh:
        return dataset_from_dict(json.load(fh))


def from_edge_lists(snapshots: Sequence[Sequence[Tuple[Sequence[int], int]]],
                    bounds: Optional[Sequence[Tuple[int, int]]] = None,
                    node_count: Optional[int] = None) -> DynamicHypergraph:
    """Build a dataset straight from per-snapshot ``(nodes, timestamp)`` lists.

    Without explicit bounds, snapshot i covers [i, i+1) in units where each
    timestamp is already inside its snapshot's interval.
    """
    snaps = []
    for i, edges in enumerate(snapshots):
        hs = [Hyperedge(tuple(sorted(set(nodes))), int(ts)) for nodes, ts in edges]
        if bounds is None:
            lo = min(h.timestamp for h in hs)
            hi = max(h.timestamp for h in hs) + 1
        else:
            lo, hi = bounds[i]
        snaps.append(build_snapshot(hs, SnapshotSpec(i, lo, hi)))
    if node_count is None:
        node_count = 1 + max(int(s.local_nodes[-1]) for s in snaps)
    return DynamicHypergraph(snaps, node_count, list(range(node_count)))
