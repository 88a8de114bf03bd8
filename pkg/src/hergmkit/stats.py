"""Network sufficient statistics and their change statistics.

Supported terms: edges, k-stars, triangles, geometrically weighted
dyadwise/edgewise shared partners (fixed decay), and exact-degree counts.
A ``StatisticSpec`` is an ordered term list; it fixes the coordinate order
of every statistic vector and parameter vector in the package.

The change statistic of a dyad is the difference in the statistic vector
between the graph with that edge present and absent, evaluated without
recomputing global statistics.  ``ChangeStatEngine`` precomputes per-spec
lookup tables (binomials, geometric weights) so samplers can evaluate
millions of dyad updates cheaply.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .graph import Graph, dyad

__all__ = [
    "Term",
    "StatisticSpec",
    "parse_spec",
    "edges",
    "k_stars",
    "triangles",
    "shared_partners",
    "esp_histogram",
    "dsp_histogram",
    "gwesp",
    "gwdsp",
    "degree_count",
    "stat_vector",
    "change_statistics",
    "ChangeStatEngine",
]

_KINDS = ("edges", "kstar", "triangles", "gwdsp", "gwesp", "degree")


@dataclass(frozen=True)
class Term:
    """One model term: a kind plus its parameter (star size, decay, degree)."""

    kind: str
    param: float | int | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown term kind {self.kind!r}")
        if self.kind in ("edges", "triangles"):
            if self.param is not None:
                raise ValueError(f"{self.kind} takes no parameter")
        elif self.kind == "kstar":
            if not isinstance(self.param, int) or self.param < 2:
                raise ValueError(f"kstar needs integer k >= 2, got {self.param!r}")
        elif self.kind == "degree":
            if not isinstance(self.param, int) or self.param < 0:
                raise ValueError(f"degree needs integer k >= 0, got {self.param!r}")
        else:  # gwdsp / gwesp
            p = self.param
            if not isinstance(p, (int, float)) or not math.isfinite(p) or p < 0:
                raise ValueError(f"{self.kind} needs finite decay >= 0, got {p!r}")
            object.__setattr__(self, "param", float(p))

    def label(self) -> str:
        if self.param is None:
            return self.kind
        if isinstance(self.param, int):
            return f"{self.kind}({self.param})"
        return f"{self.kind}({self.param:g})"


@dataclass(frozen=True)
class StatisticSpec:
    """Ordered, validated list of terms."""

    terms: tuple[Term, ...]

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms:
            raise ValueError("a statistic spec needs at least one term")
        object.__setattr__(self, "terms", terms)

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def labels(self) -> list[str]:
        return [t.label() for t in self.terms]

    def to_string(self) -> str:
        return ",".join(t.label() for t in self.terms)

    def has_edges_term(self) -> bool:
        return any(t.kind == "edges" for t in self.terms)

    def edges_index(self) -> int | None:
        for idx, t in enumerate(self.terms):
            if t.kind == "edges":
                return idx
        return None


_TERM_RE = re.compile(r"^([a-z]+)(?:\(([^)]*)\))?$")


def parse_spec(text: str) -> StatisticSpec:
    """Parse the textual form, e.g. ``edges,kstar(2),gwesp(0.5)``."""
    terms = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            raise ValueError(f"empty term in spec string {text!r}")
        m = _TERM_RE.match(chunk)
        if m is None:
            raise ValueError(f"cannot parse term {chunk!r}")
        kind, arg = m.group(1), m.group(2)
        if arg is None:
            terms.append(Term(kind))
        elif kind in ("kstar", "degree"):
            terms.append(Term(kind, int(arg)))
        else:
            terms.append(Term(kind, float(arg)))
    return StatisticSpec(tuple(terms))


# -- whole-graph statistics --------------------------------------------------


def edges(g: Graph) -> int:
    return g.n_edges


def k_stars(g: Graph, k: int) -> int:
    """Number of k-stars, sum over nodes of C(degree, k)."""
    if k < 2:
        raise ValueError(f"k-star size must be >= 2, got {k}")
    return sum(math.comb(g.degree(i), k) for i in range(g.n))


def triangles(g: Graph) -> int:
    # each triangle is counted once per incident edge
    total = sum(g.common_neighbors_count(i, j) for i, j in g.edges())
    return total // 3


def shared_partners(g: Graph, d: tuple[int, int]) -> int:
    i, j = dyad(*d)
    return g.common_neighbors_count(i, j)


def esp_histogram(g: Graph) -> np.ndarray:
    """counts[k] = number of edges whose endpoints share exactly k partners."""
    counts = np.zeros(max(g.n - 1, 0), dtype=np.int64)
    for i, j in g.edges():
        counts[g.common_neighbors_count(i, j)] += 1
    return counts


def dsp_histogram(g: Graph) -> np.ndarray:
    """counts[k] = number of dyads (edge or not) sharing exactly k partners."""
    counts = np.zeros(max(g.n - 1, 0), dtype=np.int64)
    for i in range(g.n):
        for j in range(i + 1, g.n):
            counts[g.common_neighbors_count(i, j)] += 1
    return counts


def _gw_value(hist: np.ndarray, decay: float) -> float:
    if hist.size == 0:
        return 0.0
    ks = np.arange(hist.size)
    weights = math.exp(decay) * (1.0 - (1.0 - math.exp(-decay)) ** ks)
    return float(weights @ hist)


def gwesp(g: Graph, decay: float) -> float:
    """Geometrically weighted edgewise shared partners with fixed decay."""
    if decay < 0:
        raise ValueError(f"decay must be >= 0, got {decay}")
    return _gw_value(esp_histogram(g), decay)


def gwdsp(g: Graph, decay: float) -> float:
    """Geometrically weighted dyadwise shared partners with fixed decay."""
    if decay < 0:
        raise ValueError(f"decay must be >= 0, got {decay}")
    return _gw_value(dsp_histogram(g), decay)


def degree_count(g: Graph, k: int) -> int:
    """Number of nodes with degree exactly k."""
    if not 0 <= k <= g.n - 1:
        raise ValueError(f"degree {k} out of range 0..{g.n - 1}")
    return sum(1 for i in range(g.n) if g.degree(i) == k)


def stat_vector(g: Graph, spec: StatisticSpec) -> np.ndarray:
    """Evaluate all terms of the spec on g, in spec order."""
    out = np.empty(len(spec), dtype=np.float64)
    esp = dsp = None
    for pos, t in enumerate(spec):
        if t.kind == "edges":
            out[pos] = g.n_edges
        elif t.kind == "kstar":
            out[pos] = k_stars(g, t.param)
        elif t.kind == "triangles":
            out[pos] = triangles(g)
        elif t.kind == "gwesp":
            if esp is None:
                esp = esp_histogram(g)
            out[pos] = _gw_value(esp, t.param)
        elif t.kind == "gwdsp":
            if dsp is None:
                dsp = dsp_histogram(g)
            out[pos] = _gw_value(dsp, t.param)
        else:
            out[pos] = degree_count(g, t.param)
    return out


class ChangeStatEngine:
    """Evaluates change statistics for one spec with precomputed tables.

    ``compute(g, i, j)`` returns the statistic difference between the graph
    with edge {i,j} present and absent, as a plain float list.  The present
    state of {i,j} in g is irrelevant: the edge is masked out of the
    adjacency before any neighbor scans.
    """

    def __init__(self, spec: StatisticSpec, n: int):
        self.spec = spec
        self.n = n
        # geometric weight increments: dw[s] = w(s+1) - w(s), w(s) the weight
        # of a dyad/edge with s shared partners
        self._tables = []
        for t in spec:
            if t.kind in ("gwesp", "gwdsp"):
                w = [
                    math.exp(t.param) * (1.0 - (1.0 - math.exp(-t.param)) ** s)
                    for s in range(n + 1)
                ]
                dw = [w[s + 1] - w[s] for s in range(n)]
                self._tables.append((w, dw))
            elif t.kind == "kstar":
                self._tables.append(
                    [math.comb(d, t.param - 1) for d in range(n + 1)]
                )
            else:
                self._tables.append(None)

    def compute(self, g: Graph, i: int, j: int) -> list[float]:
        adj = g._adj
        # adjacency with the focal edge forced absent (the y0 basis)
        mi = adj[i] & ~(1 << j)
        mj = adj[j] & ~(1 << i)
        common = mi & mj
        out = []
        for t, table in zip(self.spec.terms, self._tables):
            kind = t.kind
            if kind == "edges":
                out.append(1.0)
            elif kind == "triangles":
                out.append(float(common.bit_count()))
            elif kind == "kstar":
                out.append(float(table[mi.bit_count()] + table[mj.bit_count()]))
            elif kind == "degree":
                k = t.param
                di, dj = mi.bit_count(), mj.bit_count()
                delta = (di + 1 == k) - (di == k) + (dj + 1 == k) - (dj == k)
                out.append(float(delta))
            elif kind == "gwesp":
                # the new edge enters with esp = |common|; each edge from i or
                # j to a common neighbor gains one shared partner
                w, dw = table
                delta = w[common.bit_count()]
                rest = common
                while rest:
                    low = rest & -rest
                    mv = adj[low.bit_length() - 1]
                    rest ^= low
                    delta += dw[(mi & mv).bit_count()] + dw[(mj & mv).bit_count()]
                out.append(delta)
            else:  # gwdsp
                # dyads {i,v} for v adjacent to j gain partner j, and vice versa
                w, dw = table
                delta = 0.0
                rest = mj
                while rest:
                    low = rest & -rest
                    delta += dw[(mi & adj[low.bit_length() - 1]).bit_count()]
                    rest ^= low
                rest = mi
                while rest:
                    low = rest & -rest
                    delta += dw[(mj & adj[low.bit_length() - 1]).bit_count()]
                    rest ^= low
                out.append(delta)
        return out


def change_statistics(g: Graph, d: tuple[int, int], spec: StatisticSpec) -> np.ndarray:
    """Change statistic vector of dyad d under spec.

    Equals ``stat_vector`` of the graph with d present minus with d absent.
    For repeated evaluation construct a ``ChangeStatEngine`` once instead.
    """
    i, j = dyad(*d)
    if j >= g.n:
        raise ValueError(f"node id out of range for n={g.n}: ({i}, {j})")
    engine = ChangeStatEngine(spec, g.n)
    return np.array(engine.compute(g, i, j), dtype=np.float64)
