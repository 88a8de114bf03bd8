"""Undirected binary graphs, node partitions, and their file formats.

Nodes are contiguous integers 0..n-1.  Adjacency is stored as one Python
integer bitmask per node, which gives O(1) edge lookup, cheap common-neighbor
counts via ``&`` + ``bit_count``, and fast copies.  Dyads are canonical with
i < j; every public function normalizes order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Graph",
    "Partition",
    "dyad",
    "new_graph",
    "within_subgraph",
    "between_edge_counts",
    "read_edge_list",
    "write_edge_list",
    "read_partition",
    "write_partition",
]


def dyad(i: int, j: int) -> tuple[int, int]:
    """Canonical dyad (i, j) with i < j.  Rejects self-loops."""
    if i == j:
        raise ValueError(f"self-loop dyad ({i}, {j}) is not allowed")
    if i < 0 or j < 0:
        raise ValueError(f"negative node id in dyad ({i}, {j})")
    return (i, j) if i < j else (j, i)


def _bits(mask: int):
    """Yield the set bit positions of an integer, ascending."""
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


class Graph:
    """Simple undirected graph on n labeled nodes, no self-loops."""

    __slots__ = ("n", "_adj", "_n_edges")

    def __init__(self, n: int):
        if n < 1:
            raise ValueError(f"graph needs at least one node, got n={n}")
        self.n = n
        self._adj = [0] * n
        self._n_edges = 0

    # -- queries ---------------------------------------------------------

    @property
    def n_edges(self) -> int:
        return self._n_edges

    def has_edge(self, i: int, j: int) -> bool:
        return bool((self._adj[i] >> j) & 1)

    def degree(self, i: int) -> int:
        return self._adj[i].bit_count()

    def degrees(self) -> np.ndarray:
        return np.array([m.bit_count() for m in self._adj], dtype=np.int64)

    def neighbors(self, i: int):
        return _bits(self._adj[i])

    def neighbor_mask(self, i: int) -> int:
        return self._adj[i]

    def common_neighbors_count(self, i: int, j: int) -> int:
        return (self._adj[i] & self._adj[j]).bit_count()

    def common_neighbors(self, i: int, j: int):
        return _bits(self._adj[i] & self._adj[j])

    def edges(self):
        """Iterate canonical (i, j) edges, i < j, ascending."""
        for i in range(self.n):
            mask = self._adj[i] >> (i + 1)
            for off in _bits(mask):
                yield (i, i + 1 + off)

    def adjacency_matrix(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=np.uint8)
        for i in range(self.n):
            for j in _bits(self._adj[i]):
                a[i, j] = 1
        return a

    # -- mutation (single-owner; see module docstring) ---------------------

    def _check(self, i: int, j: int):
        if not (0 <= i < self.n and 0 <= j < self.n):
            raise ValueError(f"node id out of range for n={self.n}: ({i}, {j})")

    def add_edge(self, i: int, j: int):
        i, j = dyad(i, j)
        self._check(i, j)
        if not (self._adj[i] >> j) & 1:
            self._adj[i] |= 1 << j
            self._adj[j] |= 1 << i
            self._n_edges += 1

    def remove_edge(self, i: int, j: int):
        i, j = dyad(i, j)
        self._check(i, j)
        if (self._adj[i] >> j) & 1:
            self._adj[i] &= ~(1 << j)
            self._adj[j] &= ~(1 << i)
            self._n_edges -= 1

    def toggle_edge(self, i: int, j: int) -> bool:
        """Flip the dyad; returns True if the edge is present afterwards."""
        i, j = dyad(i, j)
        self._check(i, j)
        present = (self._adj[i] >> j) & 1
        if present:
            self._adj[i] &= ~(1 << j)
            self._adj[j] &= ~(1 << i)
            self._n_edges -= 1
        else:
            self._adj[i] |= 1 << j
            self._adj[j] |= 1 << i
            self._n_edges += 1
        return not present

    # -- misc --------------------------------------------------------------

    def copy(self) -> "Graph":
        g = Graph.__new__(Graph)
        g.n = self.n
        g._adj = list(self._adj)
        g._n_edges = self._n_edges
        return g

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Graph)
            and self.n == other.n
            and self._adj == other._adj
        )

    def __hash__(self):
        return hash((self.n, tuple(self._adj)))

    def __repr__(self):
        return f"Graph(n={self.n}, edges={self._n_edges})"


def new_graph(n: int) -> Graph:
    """Empty graph on n >= 1 nodes."""
    return Graph(n)


@dataclass(frozen=True)
class Partition:
    """Node -> cluster assignment for K clusters, labels 0..K-1."""

    assignments: np.ndarray
    n_clusters: int = field(default=0)

    def __post_init__(self):
        arr = np.asarray(self.assignments, dtype=np.int64)
        object.__setattr__(self, "assignments", arr)
        k = self.n_clusters if self.n_clusters else int(arr.max()) + 1
        object.__setattr__(self, "n_clusters", k)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("assignments must be a non-empty 1-d vector")
        if arr.min() < 0 or arr.max() >= k:
            raise ValueError(
                f"cluster labels must lie in 0..{k - 1}, got range "
                f"[{arr.min()}, {arr.max()}]"
            )

    @property
    def n(self) -> int:
        return int(self.assignments.size)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.n_clusters)

    def members(self, k: int) -> np.ndarray:
        if not 0 <= k < self.n_clusters:
            raise ValueError(f"cluster id {k} out of range for K={self.n_clusters}")
        return np.flatnonzero(self.assignments == k)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Partition)
            and self.n_clusters == other.n_clusters
            and np.array_equal(self.assignments, other.assignments)
        )


def within_subgraph(g: Graph, p: Partition, k: int) -> tuple[Graph, np.ndarray]:
    """Subgraph induced by cluster k, relabeled 0..n_k-1.

    Returns (subgraph, node_map) where node_map[v] is the original id of
    subgraph node v (ascending order).
    """
    if p.n != g.n:
        raise ValueError(f"partition covers {p.n} nodes, graph has {g.n}")
    node_map = p.members(k)
    sub = Graph(len(node_map))
    index = {int(orig): new for new, orig in enumerate(node_map)}
    for new, orig in enumerate(node_map):
        for nb in g.neighbors(int(orig)):
            pos = index.get(nb)
            if pos is not None and pos > new:
                sub.add_edge(new, pos)
    return sub, node_map


def between_edge_counts(g: Graph, p: Partition) -> tuple[int, int]:
    """(y_B, n_B): between-cluster edge count and dyad count."""
    if p.n != g.n:
        raise ValueError(f"partition covers {p.n} nodes, graph has {g.n}")
    sizes = p.sizes()
    n_b = int((int(np.sum(sizes)) ** 2 - int(np.sum(sizes**2))) // 2)
    labels = p.assignments
    y_b = sum(1 for i, j in g.edges() if labels[i] != labels[j])
    return y_b, n_b


# -- file formats ----------------------------------------------------------
#
# Edge list: line 1 "n <count>", then "i j" per edge with i < j; "#" starts
# a comment line.  Partition: CSV with header node,cluster, every node
# exactly once; labels are compacted to 0..K-1 on read.


def write_edge_list(g: Graph, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"n {g.n}\n")
        for i, j in g.edges():
            fh.write(f"{i} {j}\n")


def read_edge_list(path) -> Graph:
    g = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if g is None:
                parts = line.split()
                if len(parts) != 2 or parts[0] != "n":
                    raise ValueError(
                        f"{path}:{lineno}: expected header 'n <count>', got {line!r}"
                    )
                g = Graph(int(parts[1]))
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'i j', got {line!r}")
            i, j = int(parts[0]), int(parts[1])
            d = dyad(i, j)
            if d[0] >= g.n or d[1] >= g.n:
                raise ValueError(f"{path}:{lineno}: node id >= n={g.n} in {line!r}")
            if g.has_edge(*d):
                raise ValueError(f"{path}:{lineno}: duplicate edge {d}")
            g.add_edge(*d)
    if g is None:
        raise ValueError(f"{path}: empty edge-list file")
    return g


def write_partition(p: Partition, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["node", "cluster"])
        for node, label in enumerate(p.assignments):
            writer.writerow([node, int(label)])


def read_partition(path) -> Partition:
    rows: dict[int, int] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["node", "cluster"]:
            raise ValueError(f"{path}: expected header 'node,cluster', got {header}")
        for row in reader:
            if not row:
                continue
            node, label = int(row[0]), int(row[1])
            if node in rows:
                raise ValueError(f"{path}: duplicate row for node {node}")
            rows[node] = label
    n = len(rows)
    if n == 0:
        raise ValueError(f"{path}: no assignment rows")
    missing = set(range(n)) - set(rows)
    if missing:
        raise ValueError(f"{path}: missing nodes {sorted(missing)[:5]} (n={n})")
    raw = np.array([rows[i] for i in range(n)], dtype=np.int64)
    # compact labels to 0..K-1 preserving first-appearance order of sorted labels
    uniq = np.unique(raw)
    remap = {int(old): new for new, old in enumerate(uniq)}
    labels = np.array([remap[int(v)] for v in raw], dtype=np.int64)
    return Partition(labels, len(uniq))
