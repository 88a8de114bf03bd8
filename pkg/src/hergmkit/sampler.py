"""Sampling from ERGM distributions and block-structured network simulation.

``gibbs_sample`` runs a single-site Gibbs chain over dyads: each update draws
the dyad from its full conditional, a Bernoulli whose logit is the inner
product of the parameter vector with the dyad's change statistics given the
current rest of the graph.  ``simulate_hergm`` composes independent
within-cluster chains with i.i.d. Bernoulli between-cluster ties.
``exact_distribution`` enumerates the full sample space for small n and is
the ground-truth reference for sampler and estimator tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .graph import Graph, Partition
from .rng import child_rng
from .stats import ChangeStatEngine, StatisticSpec, stat_vector

__all__ = [
    "SamplerControls",
    "GibbsResult",
    "ClusterSpec",
    "HergmSpec",
    "ExactDistribution",
    "gibbs_sample",
    "simulate_hergm",
    "exact_distribution",
    "dyad_order",
    "graph_index",
]

# retained-sample density outside this band flags a near-degenerate chain
_DEGENERACY_BAND = (0.01, 0.99)


@dataclass(frozen=True)
class SamplerControls:
    """Chain length controls; one sweep visits every dyad once."""

    burnin_sweeps: int = 2000
    n_samples: int = 1
    thin_sweeps: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.burnin_sweeps < 0:
            raise ValueError("burnin_sweeps must be >= 0")
        if self.n_samples < 1 or self.thin_sweeps < 1:
            raise ValueError("n_samples and thin_sweeps must be >= 1")


@dataclass
class GibbsResult:
    graphs: list[Graph]
    stats: np.ndarray  # n_samples x n_terms, spec order
    density_trace: np.ndarray  # density of each retained sample
    degenerate: bool


def _check_theta(theta, spec: StatisticSpec) -> tuple[float, ...]:
    theta = tuple(float(v) for v in theta)
    if len(theta) != len(spec):
        raise ValueError(
            f"theta has {len(theta)} entries for a {len(spec)}-term spec"
        )
    if not all(math.isfinite(v) for v in theta):
        raise ValueError(f"theta must be finite, got {theta}")
    return theta


def dyad_order(n: int) -> list[tuple[int, int]]:
    """Canonical dyad sweep order: (0,1), (0,2), ..., (n-2,n-1)."""
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def _expit(x: float) -> float:
    # stable logistic; tanh form avoids overflow on both tails
    return 0.5 * (1.0 + math.tanh(0.5 * x))


def _init_density(spec: StatisticSpec, theta) -> float:
    idx = spec.edges_index()
    return _expit(theta[idx]) if idx is not None else 0.5


def _seed_graph(n: int, density: float, rng: np.random.Generator) -> Graph:
    g = Graph(n)
    dyads = dyad_order(n)
    u = rng.random(len(dyads))
    for b, (i, j) in enumerate(dyads):
        if u[b] < density:
            g.add_edge(i, j)
    return g


def _run_sweeps(g, dyads, engine, theta, n_sweeps, rng):
    """Advance the chain n_sweeps systematic sweeps in place."""
    compute = engine.compute
    for _ in range(n_sweeps):
        u = rng.random(len(dyads))
        for b, (i, j) in enumerate(dyads):
            c = compute(g, i, j)
            logit = 0.0
            for t, cv in zip(theta, c):
                logit += t * cv
            present = u[b] < _expit(logit)
            if present != g.has_edge(i, j):
                g.toggle_edge(i, j)


def gibbs_sample(
    n: int,
    spec: StatisticSpec,
    theta,
    controls: SamplerControls,
    rng: np.random.Generator | None = None,
) -> GibbsResult:
    """Sample graphs from the ERGM on n nodes defined by (spec, theta).

    The chain starts from an Erdos-Renyi draw at the edges-term density (0.5
    without an edges term), runs ``burnin_sweeps``, then retains a copy every
    ``thin_sweeps`` sweeps.  Degenerate parameter values do not raise; the
    result carries a degeneracy flag instead.
    """
    theta = _check_theta(theta, spec)
    if rng is None:
        rng = np.random.default_rng(controls.seed)
    engine = ChangeStatEngine(spec, n)
    dyads = dyad_order(n)
    g = _seed_graph(n, _init_density(spec, theta), rng)
    _run_sweeps(g, dyads, engine, theta, controls.burnin_sweeps, rng)

    n_dyads = max(len(dyads), 1)
    graphs: list[Graph] = []
    rows = np.empty((controls.n_samples, len(spec)), dtype=np.float64)
    trace = np.empty(controls.n_samples, dtype=np.float64)
    for s in range(controls.n_samples):
        _run_sweeps(g, dyads, engine, theta, controls.thin_sweeps, rng)
        graphs.append(g.copy())
        rows[s] = stat_vector(g, spec)
        trace[s] = g.n_edges / n_dyads
    degenerate = bool(trace[-1] < _DEGENERACY_BAND[0] or trace[-1] > _DEGENERACY_BAND[1])
    return GibbsResult(graphs, rows, trace, degenerate)


@dataclass(frozen=True)
class ClusterSpec:
    """One cluster's size, model terms, and parameter vector."""

    n: int
    spec: StatisticSpec
    theta: tuple[float, ...]

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("cluster size must be >= 1")
        object.__setattr__(self, "theta", _check_theta(self.theta, self.spec))


@dataclass(frozen=True)
class HergmSpec:
    """Within-cluster ERGMs plus one shared between-cluster tie probability."""

    clusters: tuple[ClusterSpec, ...]
    between_p: float

    def __post_init__(self):
        clusters = tuple(self.clusters)
        if not clusters:
            raise ValueError("need at least one cluster")
        if not 0.0 <= self.between_p <= 1.0:
            raise ValueError(f"between_p must be in [0, 1], got {self.between_p}")
        object.__setattr__(self, "clusters", clusters)

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    @property
    def n(self) -> int:
        return sum(c.n for c in self.clusters)


def simulate_hergm(
    hspec: HergmSpec,
    seed: int,
    controls: SamplerControls | None = None,
) -> tuple[Graph, Partition]:
    """Draw one network and its ground-truth partition.

    Cluster k occupies the consecutive node ids after clusters 0..k-1.
    Within-cluster blocks are independent Gibbs draws (one retained sample
    each, chain controls from ``controls``); between-cluster dyads are
    i.i.d. Bernoulli(between_p).  Each block gets a child RNG stream derived
    from (seed, cluster index), so blocks can be reproduced in isolation.
    """
    if controls is None:
        controls = SamplerControls()
    g = Graph(hspec.n)
    labels = np.empty(hspec.n, dtype=np.int64)
    offsets = []
    pos = 0
    for k, cl in enumerate(hspec.clusters):
        offsets.append(pos)
        labels[pos : pos + cl.n] = k
        rng_k = child_rng(seed, "within", k)
        res = gibbs_sample(
            cl.n,
            cl.spec,
            cl.theta,
            SamplerControls(controls.burnin_sweeps, 1, controls.thin_sweeps, 0),
            rng=rng_k,
        )
        block = res.graphs[-1]
        for i, j in block.edges():
            g.add_edge(pos + i, pos + j)
        pos += cl.n
    rng_b = child_rng(seed, "between")
    for k in range(hspec.n_clusters):
        for l in range(k + 1, hspec.n_clusters):
            nk, nl = hspec.clusters[k].n, hspec.clusters[l].n
            u = rng_b.random((nk, nl))
            for i, j in zip(*np.nonzero(u < hspec.between_p)):
                g.add_edge(offsets[k] + int(i), offsets[l] + int(j))
    return g, Partition(labels, hspec.n_clusters)


@dataclass
class ExactDistribution:
    """Full enumeration of P(Y=y) for every graph on n nodes.

    Graph index convention: bit b of the index is the dyad ``dyads[b]``.
    """

    n: int
    spec: StatisticSpec
    theta: tuple[float, ...]
    probs: np.ndarray  # 2^m
    stats: np.ndarray  # 2^m x n_terms
    log_psi: float
    mu: np.ndarray  # mean-value parameter E[S(Y)]
    dyads: list[tuple[int, int]] = field(repr=False, default_factory=list)


def graph_index(g: Graph, dyads: list[tuple[int, int]]) -> int:
    idx = 0
    for b, (i, j) in enumerate(dyads):
        if g.has_edge(i, j):
            idx |= 1 << b
    return idx


_ENUM_MAX_DYADS = 21


def exact_distribution(n: int, spec: StatisticSpec, theta) -> ExactDistribution:
    """Exact ERGM law by enumerating all 2^C(n,2) graphs (C(n,2) <= 21).

    Enumeration walks the sample space in Gray-code order so each step is a
    single edge toggle; statistics are refreshed from scratch periodically to
    rule out accumulation drift.
    """
    theta = _check_theta(theta, spec)
    dyads = dyad_order(n)
    m = len(dyads)
    if m > _ENUM_MAX_DYADS:
        raise ValueError(
            f"n={n} has {m} dyads; enumeration is capped at {_ENUM_MAX_DYADS}"
        )
    n_states = 1 << m
    stats = np.empty((n_states, len(spec)), dtype=np.float64)
    g = Graph(n)
    engine = ChangeStatEngine(spec, n)
    s = stat_vector(g, spec)
    stats[0] = s
    for t in range(1, n_states):
        b = (t & -t).bit_length() - 1
        i, j = dyads[b]
        c = np.array(engine.compute(g, i, j))
        if g.has_edge(i, j):
            g.remove_edge(i, j)
            s = s - c
        else:
            g.add_edge(i, j)
            s = s + c
        if t % 4096 == 0:
            s = stat_vector(g, spec)
        stats[t ^ (t >> 1)] = s

    logp = stats @ np.asarray(theta)
    log_psi = float(logsumexp(logp))
    probs = np.exp(logp - log_psi)
    mu = probs @ stats
    return ExactDistribution(n, spec, theta, probs, stats, log_psi, mu, dyads)
