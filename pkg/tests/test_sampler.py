"""Gibbs sampler, HERGM simulator, and exact enumeration."""

import math

import numpy as np
import pytest

from hergmkit import (
    ClusterSpec,
    HergmSpec,
    SamplerControls,
    between_edge_counts,
    exact_distribution,
    gibbs_sample,
    parse_spec,
    simulate_hergm,
    stat_vector,
    within_subgraph,
)
from hergmkit.sampler import dyad_order, graph_index

EDGES = parse_spec("edges")
ET = parse_spec("edges,triangles")


class TestControls:
    def test_invalid_controls(self):
        with pytest.raises(ValueError):
            SamplerControls(burnin_sweeps=-1)
        with pytest.raises(ValueError):
            SamplerControls(n_samples=0)
        with pytest.raises(ValueError):
            SamplerControls(thin_sweeps=0)

    def test_theta_validation(self):
        with pytest.raises(ValueError):
            gibbs_sample(4, EDGES, (0.0, 1.0), SamplerControls())
        with pytest.raises(ValueError):
            gibbs_sample(4, EDGES, (math.inf,), SamplerControls())


class TestGibbs:
    def test_theta_zero_density_half(self):
        res = gibbs_sample(
            20, EDGES, (0.0,), SamplerControls(100, 300, 1, seed=1)
        )
        n_dyads = 190
        se = math.sqrt(0.25 / (300 * n_dyads))
        assert abs(res.density_trace.mean() - 0.5) < 4 * se

    def test_baseline_density_low(self):
        theta = math.log(0.05 / 0.95)
        res = gibbs_sample(
            30, EDGES, (theta,), SamplerControls(100, 300, 1, seed=2)
        )
        mc_se = res.density_trace.std(ddof=1) / math.sqrt(300)
        assert abs(res.density_trace.mean() - 0.05) < 4 * mc_se + 1e-3

    def test_determinism(self):
        a = gibbs_sample(8, ET, (-0.5, 0.2), SamplerControls(50, 5, 2, seed=9))
        b = gibbs_sample(8, ET, (-0.5, 0.2), SamplerControls(50, 5, 2, seed=9))
        assert all(x == y for x, y in zip(a.graphs, b.graphs))
        np.testing.assert_array_equal(a.stats, b.stats)

    def test_degeneracy_flag(self):
        res = gibbs_sample(10, EDGES, (-9.0,), SamplerControls(50, 5, 1, seed=3))
        assert res.degenerate
        res2 = gibbs_sample(10, EDGES, (0.0,), SamplerControls(50, 5, 1, seed=3))
        assert not res2.degenerate

    def test_stats_align_with_graphs(self):
        res = gibbs_sample(7, ET, (-1.0, 0.3), SamplerControls(50, 10, 2, seed=4))
        for g, row in zip(res.graphs, res.stats):
            np.testing.assert_array_equal(stat_vector(g, ET), row)


class TestExactDistribution:
    def test_uniform_at_theta_zero(self):
        ex = exact_distribution(3, EDGES, (0.0,))
        np.testing.assert_allclose(ex.probs, np.full(8, 1 / 8), atol=1e-12)

    def test_probabilities_sum_to_one(self):
        ex = exact_distribution(5, ET, (-1.0, 0.3))
        assert abs(ex.probs.sum() - 1.0) < 1e-10

    def test_nonfinite_theta_rejected(self):
        with pytest.raises(ValueError):
            exact_distribution(3, EDGES, (math.inf,))

    def test_enumeration_guard(self):
        with pytest.raises(ValueError, match="capped"):
            exact_distribution(8, EDGES, (0.0,))

    def test_mean_value_against_direct_sum(self):
        ex = exact_distribution(4, ET, (-0.8, 0.4))
        mu_direct = np.zeros(2)
        for idx in range(len(ex.probs)):
            mu_direct += ex.probs[idx] * ex.stats[idx]
        np.testing.assert_allclose(ex.mu, mu_direct, atol=1e-12)

    def test_stats_table_matches_fresh_evaluation(self):
        from hergmkit import Graph

        spec = parse_spec("edges,kstar(2),gwesp(0.5)")
        ex = exact_distribution(4, spec, (0.1, -0.2, 0.3))
        dyads = dyad_order(4)
        rng = np.random.default_rng(0)
        for idx in rng.integers(0, len(ex.probs), size=40):
            g = Graph(4)
            for b, (i, j) in enumerate(dyads):
                if (int(idx) >> b) & 1:
                    g.add_edge(i, j)
            np.testing.assert_allclose(
                ex.stats[int(idx)], stat_vector(g, spec), atol=1e-10
            )

    def test_gibbs_agrees_with_enumeration(self):
        # moderate-length chain; the acceptance suite runs the full version
        ex = exact_distribution(5, ET, (-1.0, 0.3))
        res = gibbs_sample(
            5, ET, (-1.0, 0.3), SamplerControls(500, 20000, 1, seed=5)
        )
        counts = np.zeros(len(ex.probs))
        for g in res.graphs:
            counts[graph_index(g, ex.dyads)] += 1
        tv = 0.5 * np.abs(counts / counts.sum() - ex.probs).sum()
        assert tv < 0.08


class TestHergm:
    def spec3(self):
        spec = parse_spec("edges,gwdsp(0.5),gwesp(0.5)")
        base = math.log(0.05 / 0.95)
        return HergmSpec(
            tuple(ClusterSpec(12, spec, (base, t, t)) for t in (0.2, 0.5, 1.0)),
            0.05,
        )

    def test_partition_layout(self):
        g, truth = simulate_hergm(self.spec3(), 1, SamplerControls(100))
        assert truth.sizes().tolist() == [12, 12, 12]
        assert g.n == 36

    def test_between_p_zero(self):
        hspec = HergmSpec(self.spec3().clusters, 0.0)
        g, truth = simulate_hergm(hspec, 2, SamplerControls(100))
        y_b, _ = between_edge_counts(g, truth)
        assert y_b == 0

    def test_between_p_one(self):
        hspec = HergmSpec(self.spec3().clusters, 1.0)
        g, truth = simulate_hergm(hspec, 3, SamplerControls(100))
        y_b, n_b = between_edge_counts(g, truth)
        assert y_b == n_b

    def test_deterministic_under_seed(self):
        a = simulate_hergm(self.spec3(), 7, SamplerControls(100))
        b = simulate_hergm(self.spec3(), 7, SamplerControls(100))
        assert a[0] == b[0] and a[1] == b[1]

    def test_within_blocks_reproducible_in_isolation(self):
        # the per-cluster stream depends only on (seed, cluster), so the
        # same block reappears if other clusters change
        hspec = self.spec3()
        g1, t1 = simulate_hergm(hspec, 11, SamplerControls(100))
        altered = HergmSpec(hspec.clusters, 0.9)
        g2, t2 = simulate_hergm(altered, 11, SamplerControls(100))
        sub1, _ = within_subgraph(g1, t1, 0)
        sub2, _ = within_subgraph(g2, t2, 0)
        assert sub1 == sub2

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            HergmSpec((), 0.5)
        with pytest.raises(ValueError):
            HergmSpec(self.spec3().clusters, 1.5)

    def test_block_independence_across_replications(self):
        # within-block edge counts of different clusters should be
        # uncorrelated across replications
        spec = parse_spec("edges,gwesp(0.5)")
        hspec = HergmSpec(
            (
                ClusterSpec(10, spec, (-1.5, 0.4)),
                ClusterSpec(10, spec, (-1.5, 0.4)),
            ),
            0.05,
        )
        e0, e1 = [], []
        for rep in range(80):
            g, truth = simulate_hergm(hspec, 1000 + rep, SamplerControls(80))
            e0.append(within_subgraph(g, truth, 0)[0].n_edges)
            e1.append(within_subgraph(g, truth, 1)[0].n_edges)
        r = np.corrcoef(e0, e1)[0, 1]
        assert abs(r) < 0.25
