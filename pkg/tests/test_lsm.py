"""Latent position cluster model: conjugacy, alignment, membership recovery."""

import math

import numpy as np
import pytest

from hergmkit import Graph, Partition
from hergmkit.lsm import (
    LsmControls,
    LsmPriors,
    cluster_spread,
    draw_memberships,
    draw_mixture_params,
    init_positions,
    lsm_mcmc,
    lsm_posterior_from_dict,
    lsm_posterior_to_dict,
    map_membership,
    membership_probabilities,
    posterior_membership,
    procrustes_align,
)
from hergmkit.sampler import dyad_order
from hergmkit.twostage import misclustering_rate

LIGHT = LsmControls(burnin=400, n_samples=150, thin=2)


def two_cliques(size=10, gap_edges=0):
    g = Graph(2 * size)
    for a in range(2):
        for i in range(size):
            for j in range(i + 1, size):
                g.add_edge(a * size + i, a * size + j)
    return g


class TestMembershipProbabilities:
    def test_single_component_is_one(self):
        z = np.random.default_rng(0).normal(size=(5, 2))
        probs = membership_probabilities(
            z, np.array([1.0]), np.zeros((1, 2)), np.array([1.0])
        )
        np.testing.assert_allclose(probs, 1.0)

    def test_symmetric_midpoint(self):
        mu = np.array([[-1.0, 0.0], [1.0, 0.0]])
        probs = membership_probabilities(
            np.zeros((1, 2)), np.array([0.5, 0.5]), mu, np.array([1.0, 1.0])
        )
        np.testing.assert_allclose(probs[0], [0.5, 0.5], atol=1e-12)

    def test_degenerate_weight(self):
        mu = np.array([[-1.0, 0.0], [1.0, 0.0]])
        probs = membership_probabilities(
            np.array([[5.0, 5.0]]), np.array([1.0, 0.0]), mu, np.array([1.0, 1.0])
        )
        np.testing.assert_allclose(probs[0], [1.0, 0.0], atol=1e-12)

    def test_density_ratio_at_component_mean(self):
        # direct density-ratio oracle: z at mu_1, components 4 sigma apart
        sigma = 0.7
        mu = np.array([[0.0, 0.0], [4.0 * sigma, 0.0]])
        sig2 = np.array([sigma**2, sigma**2])
        z = np.array([[0.0, 0.0]])
        phi0 = math.exp(0.0)
        phi4 = math.exp(-0.5 * 16.0)
        expected = phi0 / (phi0 + phi4)
        probs = membership_probabilities(z, np.array([0.5, 0.5]), mu, sig2)
        assert probs[0, 0] == pytest.approx(expected, abs=1e-10)

    def test_rows_are_probability_vectors(self):
        rng = np.random.default_rng(1)
        probs = membership_probabilities(
            rng.normal(size=(40, 3)),
            np.array([0.2, 0.5, 0.3]),
            rng.normal(size=(3, 3)),
            np.array([0.5, 1.0, 2.0]),
        )
        assert (probs >= 0).all()
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)


class TestConjugateDraws:
    def test_dirichlet_posterior_mean(self):
        rng = np.random.default_rng(2)
        z = rng.normal(size=(30, 2))
        m = np.array([0] * 18 + [1] * 12)
        priors = LsmPriors(dirichlet=1.5)
        sig2 = np.array([1.0, 1.0])
        draws = np.array(
            [
                draw_mixture_params(z, m, sig2, 2, priors, rng)[0]
                for _ in range(4000)
            ]
        )
        counts = np.array([18.0, 12.0])
        expected = (1.5 + counts) / (1.5 + counts).sum()
        np.testing.assert_allclose(draws.mean(axis=0), expected, atol=0.01)

    def test_mean_posterior_concentrates(self):
        rng = np.random.default_rng(3)
        true_mu = np.array([2.0, -1.0])
        z = true_mu + 0.1 * rng.normal(size=(200, 2))
        m = np.zeros(200, dtype=np.int64)
        priors = LsmPriors()
        draws = np.array(
            [
                draw_mixture_params(z, m, np.array([0.01]), 1, priors, rng)[1][0]
                for _ in range(500)
            ]
        )
        np.testing.assert_allclose(draws.mean(axis=0), true_mu, atol=0.05)

    def test_memberships_match_probabilities(self):
        rng = np.random.default_rng(4)
        z = np.vstack([rng.normal(-3, 0.3, size=(50, 2)), rng.normal(3, 0.3, size=(50, 2))])
        lam = np.array([0.5, 0.5])
        mu = np.array([[-3.0, -3.0], [3.0, 3.0]])
        sig2 = np.array([0.5, 0.5])
        m = draw_memberships(z, lam, mu, sig2, rng)
        assert (m[:50] == 0).mean() > 0.95
        assert (m[50:] == 1).mean() > 0.95


class TestInitPositions:
    def test_two_cliques_separate(self):
        g = Graph(12)
        for a in range(2):
            for i in range(6):
                for j in range(i + 1, 6):
                    g.add_edge(a * 6 + i, a * 6 + j)
        z = init_positions(g, 2)
        c0, c1 = z[:6].mean(axis=0), z[6:].mean(axis=0)
        spread = max(
            np.linalg.norm(z[:6] - c0, axis=1).max(),
            np.linalg.norm(z[6:] - c1, axis=1).max(),
        )
        assert np.linalg.norm(c0 - c1) > spread

    def test_complete_graph_near_degenerate(self):
        g = Graph(8)
        for i, j in dyad_order(8):
            g.add_edge(i, j)
        z = init_positions(g, 2)
        # all geodesics are 1; MDS spread stays tiny relative to that scale
        assert np.linalg.norm(z, axis=1).std() < 0.3

    def test_single_node(self):
        np.testing.assert_array_equal(init_positions(Graph(1), 2), np.zeros((1, 2)))

    def test_centered(self):
        g = two_cliques(5)
        z = init_positions(g, 2)
        np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-9)


class TestProcrustes:
    def test_identity(self):
        z = np.random.default_rng(5).normal(size=(10, 2))
        aligned = procrustes_align(z, z)
        np.testing.assert_allclose(aligned, z, atol=1e-10)

    def test_rotation_recovered(self):
        rng = np.random.default_rng(6)
        z = rng.normal(size=(10, 2))
        angle = 1.1
        rot = np.array(
            [[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]]
        )
        moved = z @ rot + np.array([3.0, -2.0])
        aligned = procrustes_align(moved, z)
        assert np.linalg.norm(aligned - z) < 1e-9

    def test_reflection_recovered(self):
        rng = np.random.default_rng(7)
        z = rng.normal(size=(8, 2))
        moved = z * np.array([-1.0, 1.0])
        aligned = procrustes_align(moved, z)
        assert np.linalg.norm(aligned - z) < 1e-9

    def test_noisy_rotation_matches_grid_search(self):
        # oracle: best residual over a fine rotation/reflection grid
        rng = np.random.default_rng(8)
        z = rng.normal(size=(12, 2))
        angle = 0.63
        rot = np.array(
            [[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]]
        )
        noise = 0.01 * rng.normal(size=z.shape)
        moved = (z + noise) @ rot + 1.5
        aligned = procrustes_align(moved, z)
        got = np.linalg.norm(aligned - z)

        zc = moved - moved.mean(axis=0)
        ref = z - z.mean(axis=0)
        best = np.inf
        for theta in np.linspace(0, 2 * math.pi, 20000, endpoint=False):
            c, s = math.cos(theta), math.sin(theta)
            for refl in (1.0, -1.0):
                r = np.array([[c, -s * refl], [s, c * refl]])
                best = min(best, np.linalg.norm(zc @ r - ref))
        assert got <= best + 1e-6

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            procrustes_align(np.zeros((3, 2)), np.zeros((4, 2)))


class TestLsmMcmc:
    def test_k1_membership_all_ones(self):
        g = two_cliques(5)
        post = lsm_mcmc(g, 1, controls=LIGHT, seed=1)
        np.testing.assert_allclose(post.membership_probs, 1.0)
        assert map_membership(post).n_clusters == 1

    def test_two_cliques_perfect_split(self):
        g = two_cliques(10)
        truth = Partition(np.repeat([0, 1], 10), 2)
        post = lsm_mcmc(g, 2, controls=LIGHT, seed=2)
        assert misclustering_rate(map_membership(post), truth) == 0.0

    def test_reproducible(self):
        g = two_cliques(6)
        a = lsm_mcmc(g, 2, controls=LIGHT, seed=3)
        b = lsm_mcmc(g, 2, controls=LIGHT, seed=3)
        np.testing.assert_array_equal(a.zs, b.zs)
        np.testing.assert_array_equal(a.ms, b.ms)
        np.testing.assert_allclose(a.membership_probs, b.membership_probs)

    def test_posterior_membership_rows_normalized(self):
        g = two_cliques(6)
        post = lsm_mcmc(g, 2, controls=LIGHT, seed=4)
        probs = posterior_membership(post)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)
        assert (probs >= 0).all()

    def test_posterior_membership_single_state(self):
        z = np.zeros((3, 2))
        probs = posterior_membership(
            (z, np.array([0.5, 0.5]), np.zeros((2, 2)), np.array([1.0, 1.0]))
        )
        np.testing.assert_allclose(probs, 0.5)

    def test_map_tie_break_lowest_index(self):
        g = two_cliques(6)
        post = lsm_mcmc(g, 2, controls=LIGHT, seed=5)
        post.membership_probs[:] = 0.5
        part = map_membership(post)
        assert (part.assignments == 0).all()

    def test_rescaled_positions_unit_rms(self):
        g = two_cliques(8)
        post = lsm_mcmc(g, 2, controls=LIGHT, seed=6)
        for s in range(0, post.zs.shape[0], 37):
            rms = math.sqrt(float((post.zs[s] ** 2).sum() / g.n))
            assert rms == pytest.approx(1.0, abs=1e-9)

    def test_likelihood_invariant_under_rigid_motion(self):
        from hergmkit.lsm import _dyad_loglik_full

        rng = np.random.default_rng(9)
        g = two_cliques(6)
        y = g.adjacency_matrix().astype(float)
        iu = np.triu_indices(12, 1)
        z = rng.normal(size=(12, 2))
        angle = 0.77
        rot = np.array(
            [[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]]
        )
        z2 = z @ rot + np.array([5.0, -1.0])
        d1 = np.sqrt(((z[:, None] - z[None]) ** 2).sum(-1))[iu]
        d2 = np.sqrt(((z2[:, None] - z2[None]) ** 2).sum(-1))[iu]
        assert _dyad_loglik_full(y[iu], d1, 0.3, 1.2) == pytest.approx(
            _dyad_loglik_full(y[iu], d2, 0.3, 1.2), abs=1e-10
        )

    def test_spread_helper(self):
        pos = np.array([[0.0, 0.0], [1.0, 0.0], [10.0, 0.0], [11.0, 0.0]])
        part = Partition(np.array([0, 0, 1, 1]), 2)
        np.testing.assert_allclose(cluster_spread(pos, part), [0.5, 0.5])

    def test_invalid_args(self):
        g = two_cliques(4)
        with pytest.raises(ValueError):
            lsm_mcmc(g, 0, controls=LIGHT)
        with pytest.raises(ValueError):
            lsm_mcmc(g, 2, dim=0, controls=LIGHT)
        with pytest.raises(ValueError):
            LsmControls(burnin=-1)
        with pytest.raises(ValueError):
            LsmPriors(dirichlet=-1.0)


class TestSerialization:
    def test_round_trip(self):
        g = two_cliques(6)
        post = lsm_mcmc(g, 2, controls=LIGHT, seed=10)
        doc = lsm_posterior_to_dict(post)
        back = lsm_posterior_from_dict(doc)
        assert back.n_clusters == 2 and back.dim == 2
        np.testing.assert_allclose(back.positions_mean, post.positions_mean)
        np.testing.assert_allclose(back.membership_probs, post.membership_probs)
        assert back.beta1_mean == pytest.approx(post.beta1_mean)
        assert back.map_partition == map_membership(post)
