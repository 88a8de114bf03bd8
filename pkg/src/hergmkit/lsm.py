"""Bayesian latent position cluster model, used as the stage-1 working model.

Ties are conditionally independent given latent node positions: the log-odds
of a tie is an (optional) intercept minus a non-negative coefficient times
the Euclidean distance between the endpoints' positions.  Positions follow a
K-component isotropic Gaussian mixture, giving soft cluster memberships.

The sampler mixes random-walk Metropolis moves (positions, coefficients)
with conjugate draws (memberships, mixture weights, component means and
variances).  Retained draws are Procrustes-aligned to the starting
configuration and rescaled to unit root-mean-square position norm; the
distance coefficient absorbs the scale, leaving the likelihood untouched.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import orthogonal_procrustes
from scipy.optimize import linear_sum_assignment
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .graph import Graph, Partition
from .rng import child_rng
from .spectral import kmeans

__all__ = [
    "LsmPriors",
    "LsmControls",
    "LsmPosterior",
    "lsm_mcmc",
    "membership_probabilities",
    "posterior_membership",
    "map_membership",
    "init_positions",
    "procrustes_align",
    "cluster_spread",
    "draw_memberships",
    "draw_mixture_params",
    "lsm_posterior_to_dict",
    "lsm_posterior_from_dict",
]


@dataclass(frozen=True)
class LsmPriors:
    """Hyperparameters: coefficient normals, Dirichlet weights, mixture scales."""

    beta_mean: tuple[float, float] = (0.0, 1.0)  # (intercept, distance coef)
    beta_var: tuple[float, float] = (25.0, 25.0)
    dirichlet: float = 1.0
    mean_scale_sq: float = 4.0  # omega^2, prior variance of component means
    var_scale_sq: float = 0.5  # sigma_0^2, scale of the variance prior
    var_df: float = 2.0  # alpha, degrees of freedom of the variance prior

    def __post_init__(self):
        if min(self.beta_var) <= 0 or self.dirichlet <= 0:
            raise ValueError("prior variances and Dirichlet weights must be positive")
        if self.mean_scale_sq <= 0 or self.var_scale_sq <= 0 or self.var_df <= 0:
            raise ValueError("mixture prior scales must be positive")


@dataclass(frozen=True)
class LsmControls:
    burnin: int = 5000
    n_samples: int = 2000
    thin: int = 5
    intercept: bool = True
    tune_interval: int = 50
    target_accept: float = 0.25

    def __post_init__(self):
        if self.burnin < 0 or self.n_samples < 1 or self.thin < 1:
            raise ValueError("burnin >= 0, n_samples >= 1, thin >= 1 required")


@dataclass
class LsmPosterior:
    """Retained draws plus aggregated membership summaries."""

    n_clusters: int
    dim: int
    zs: np.ndarray  # S x n x d, aligned and rescaled
    beta0s: np.ndarray  # S (zeros when no intercept)
    beta1s: np.ndarray  # S
    lams: np.ndarray  # S x K, relabeled
    mus: np.ndarray  # S x K x d, aligned/rescaled/relabeled
    sig2s: np.ndarray  # S x K, relabeled
    ms: np.ndarray  # S x n, relabeled membership draws
    log_posts: np.ndarray  # S
    membership_probs: np.ndarray  # n x K, averaged over relabeled draws
    reference: np.ndarray  # alignment target (n x d)
    acceptance: dict[str, float]
    warnings: list[str] = field(default_factory=list)
    intercept: bool = True
    seed: int | None = None

    @property
    def positions_mean(self) -> np.ndarray:
        return self.zs.mean(axis=0)

    @property
    def beta0_mean(self) -> float:
        return float(self.beta0s.mean())

    @property
    def beta1_mean(self) -> float:
        return float(self.beta1s.mean())


# -- small pieces ------------------------------------------------------------


def membership_probabilities(z, lam, mu, sig2) -> np.ndarray:
    """Posterior component probabilities per node for one mixture state.

    P(M_i = k) proportional to lam_k * N(z_i; mu_k, sig2_k I), normalized
    over components.
    """
    z = np.atleast_2d(z)
    n, d = z.shape
    k = len(lam)
    # log densities, n x K
    diff = z[:, None, :] - mu[None, :, :]
    log_phi = -0.5 * (diff**2).sum(axis=2) / sig2[None, :]
    log_phi -= 0.5 * d * np.log(2.0 * math.pi * sig2)[None, :]
    logw = np.log(np.maximum(lam, 1e-300))[None, :] + log_phi
    logw -= logw.max(axis=1, keepdims=True)
    w = np.exp(logw)
    w /= w.sum(axis=1, keepdims=True)
    return w


def posterior_membership(obj) -> np.ndarray:
    """Per-node membership probability vectors.

    Accepts an ``LsmPosterior`` (aggregated over aligned, relabeled draws)
    or a single state tuple ``(z, lam, mu, sig2)``.
    """
    if isinstance(obj, LsmPosterior):
        return obj.membership_probs
    z, lam, mu, sig2 = obj
    return membership_probabilities(
        np.asarray(z), np.asarray(lam), np.asarray(mu), np.asarray(sig2)
    )


def map_membership(post: LsmPosterior) -> Partition:
    """Highest-probability component per node; ties go to the lowest index."""
    return Partition(post.membership_probs.argmax(axis=1), post.n_clusters)


def init_positions(g: Graph, d: int = 2) -> np.ndarray:
    """Classical MDS of geodesic distances, the chain start and alignment target.

    Disconnected pairs are placed at (diameter + 1); the result is centered.
    """
    n = g.n
    if n == 1:
        return np.zeros((1, d))
    a = csr_matrix(g.adjacency_matrix())
    dist = shortest_path(a, method="D", directed=False, unweighted=True)
    finite = dist[np.isfinite(dist)]
    diam = finite.max() if finite.size else 0.0
    dist[~np.isfinite(dist)] = diam + 1.0
    sq = dist**2
    jc = np.eye(n) - np.ones((n, n)) / n
    b = -0.5 * jc @ sq @ jc
    vals, vecs = np.linalg.eigh(b)
    order = np.argsort(vals)[::-1][:d]
    lam = np.clip(vals[order], 0.0, None)
    z = vecs[:, order] * np.sqrt(lam)[None, :]
    if z.shape[1] < d:
        z = np.hstack([z, np.zeros((n, d - z.shape[1]))])
    return z - z.mean(axis=0)


def _procrustes_transform(z: np.ndarray, reference: np.ndarray):
    zc = z - z.mean(axis=0)
    rc = reference - reference.mean(axis=0)
    rot, _ = orthogonal_procrustes(zc, rc)
    return rot, z.mean(axis=0), reference.mean(axis=0)


def procrustes_align(z: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Best rigid motion (rotation/reflection/translation) of z onto reference."""
    z = np.asarray(z, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if z.shape != reference.shape:
        raise ValueError(f"shape mismatch {z.shape} vs {reference.shape}")
    rot, zm, rm = _procrustes_transform(z, reference)
    return (z - zm) @ rot + rm


def cluster_spread(positions: np.ndarray, p: Partition) -> np.ndarray:
    """Root-mean-square distance to the cluster centroid, per cluster."""
    out = np.empty(p.n_clusters)
    for k in range(p.n_clusters):
        pts = positions[p.members(k)]
        out[k] = math.sqrt(((pts - pts.mean(axis=0)) ** 2).sum(axis=1).mean())
    return out


def _best_permutation(labels: np.ndarray, reference: np.ndarray, k: int):
    """Permutation perm with perm[old] = new maximizing label agreement."""
    cont = np.zeros((k, k), dtype=np.int64)
    np.add.at(cont, (labels, reference), 1)
    if k <= 6:
        best, best_score = None, -1
        for perm in itertools.permutations(range(k)):
            score = sum(cont[a, perm[a]] for a in range(k))
            if score > best_score:
                best_score, best = score, perm
        return np.array(best, dtype=np.int64)
    rows, cols = linear_sum_assignment(-cont)
    perm = np.empty(k, dtype=np.int64)
    perm[rows] = cols
    return perm


# -- the sampler -------------------------------------------------------------


def _dyad_loglik_full(y_u, d_u, b0, b1) -> float:
    eta = b0 - b1 * d_u
    return float(y_u @ eta - np.logaddexp(0.0, eta).sum())


def _log_prior(state, priors: LsmPriors, intercept: bool) -> float:
    z, b0, b1, lam, mu, sig2, m = state
    n, d = z.shape
    lp = 0.0
    if intercept:
        lp += -0.5 * (b0 - priors.beta_mean[0]) ** 2 / priors.beta_var[0]
    lp += -0.5 * (b1 - priors.beta_mean[1]) ** 2 / priors.beta_var[1]
    lp += float((priors.dirichlet - 1.0) * np.log(np.maximum(lam, 1e-300)).sum())
    lp += float(-0.5 * (mu**2).sum() / priors.mean_scale_sq)
    # scaled inverse chi-square density kernel
    a, s0 = priors.var_df, priors.var_scale_sq
    lp += float((-(1.0 + a / 2.0) * np.log(sig2) - a * s0 / (2.0 * sig2)).sum())
    # positions given assignments
    diff = z - mu[m]
    lp += float(
        -0.5 * ((diff**2).sum(axis=1) / sig2[m]).sum()
        - 0.5 * d * np.log(sig2[m]).sum()
    )
    lp += float(np.log(np.maximum(lam[m], 1e-300)).sum())
    return lp


def draw_memberships(z, lam, mu, sig2, rng) -> np.ndarray:
    """One conjugate draw of all node memberships."""
    w = membership_probabilities(z, lam, mu, sig2)
    cum = w.cumsum(axis=1)
    m = (rng.random(len(z))[:, None] > cum).sum(axis=1).astype(np.int64)
    return np.clip(m, 0, len(lam) - 1)


def draw_mixture_params(z, m, sig2_current, n_clusters, priors: LsmPriors, rng):
    """Conjugate draws of (weights, means, variances) given positions and labels.

    Two-block sweep: each component mean is drawn given the current variance,
    then the variance given the new mean.
    """
    d = z.shape[1]
    counts = np.bincount(m, minlength=n_clusters).astype(np.float64)
    lam = rng.dirichlet(priors.dirichlet + counts)
    mu = np.empty((n_clusters, d))
    sig2 = np.empty(n_clusters)
    for c in range(n_clusters):
        nk = counts[c]
        var_c = 1.0 / (nk / sig2_current[c] + 1.0 / priors.mean_scale_sq)
        mean_c = (
            var_c * z[m == c].sum(axis=0) / sig2_current[c]
            if nk
            else np.zeros(d)
        )
        mu[c] = mean_c + math.sqrt(var_c) * rng.normal(size=d)
        ss = float(((z[m == c] - mu[c]) ** 2).sum()) if nk else 0.0
        df = priors.var_df + nk * d
        sig2[c] = (priors.var_df * priors.var_scale_sq + ss) / rng.chisquare(df)
    return lam, mu, sig2


class _Scale:
    """Proposal scale with burn-in tuning toward a target acceptance rate."""

    def __init__(self, value, interval, target):
        self.value = value
        self.interval = interval
        self.target = target
        self.accepted = 0
        self.proposed = 0
        self.total_accepted = 0
        self.total_proposed = 0

    def record(self, accepted: bool, tuning: bool):
        self.proposed += 1
        self.accepted += accepted
        if not tuning:
            self.total_proposed += 1
            self.total_accepted += accepted
        if tuning and self.proposed >= self.interval:
            rate = self.accepted / self.proposed
            self.value *= math.exp(rate - self.target)
            self.value = min(max(self.value, 1e-4), 1e4)
            self.accepted = 0
            self.proposed = 0

    def rate(self) -> float:
        if self.total_proposed == 0:
            return math.nan
        return self.total_accepted / self.total_proposed


def lsm_mcmc(
    g: Graph,
    n_clusters: int,
    dim: int = 2,
    priors: LsmPriors | None = None,
    controls: LsmControls | None = None,
    seed: int = 0,
) -> LsmPosterior:
    """Fit the latent position cluster model by MCMC.

    Deterministic under seed.  Acceptance rates outside [0.1, 0.6] after
    burn-in are reported in ``warnings``, not raised.
    """
    if n_clusters < 1:
        raise ValueError("K must be >= 1")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    priors = priors or LsmPriors()
    controls = controls or LsmControls()
    n, k, d = g.n, n_clusters, dim
    rng = child_rng(seed, "lsm")

    y = g.adjacency_matrix().astype(np.float64)
    iu = np.triu_indices(n, 1)
    y_u = y[iu]

    # initialization: geodesic MDS, k-means memberships, moment-matched mixture
    z = init_positions(g, d)
    reference = z.copy()
    m = (
        kmeans(z, k, restarts=5, seed=int(child_rng(seed, "init").integers(2**31)))
        if k > 1
        else np.zeros(n, dtype=np.int64)
    )
    counts = np.bincount(m, minlength=k).astype(np.float64)
    lam = (counts + priors.dirichlet) / (counts.sum() + k * priors.dirichlet)
    mu = np.zeros((k, d))
    sig2 = np.full(k, 1.0)
    for c in range(k):
        pts = z[m == c]
        if len(pts):
            mu[c] = pts.mean(axis=0)
            sig2[c] = max(((pts - mu[c]) ** 2).sum() / max(len(pts) * d, 1), 1e-3)
    b1 = 1.0
    density = g.n_edges / max(len(y_u), 1)
    density = min(max(density, 1.0 / (len(y_u) + 1)), 1.0 - 1.0 / (len(y_u) + 1))
    dmat = np.sqrt(((z[:, None, :] - z[None, :, :]) ** 2).sum(axis=2))
    b0 = math.log(density / (1 - density)) + b1 * float(dmat[iu].mean())
    if not controls.intercept:
        b0 = 0.0

    scale_z = _Scale(0.5, controls.tune_interval * n, controls.target_accept)
    scale_b0 = _Scale(0.2, controls.tune_interval, controls.target_accept)
    scale_b1 = _Scale(0.2, controls.tune_interval, controls.target_accept)

    n_iters = controls.burnin + controls.n_samples * controls.thin
    s_out = 0
    zs = np.empty((controls.n_samples, n, d))
    beta0s = np.empty(controls.n_samples)
    beta1s = np.empty(controls.n_samples)
    lams = np.empty((controls.n_samples, k))
    mus = np.empty((controls.n_samples, k, d))
    sig2s = np.empty((controls.n_samples, k))
    ms = np.empty((controls.n_samples, n), dtype=np.int64)
    log_posts = np.empty(controls.n_samples)
    probs_sum = np.zeros((n, k))
    draw_probs = np.empty((controls.n_samples, n, k))

    def row_ll(i, drow):
        eta = b0 - b1 * drow
        self_term = np.logaddexp(0.0, eta[i])
        return float(y[i] @ eta - (np.logaddexp(0.0, eta).sum() - self_term))

    for it in range(n_iters):
        tuning = it < controls.burnin

        # (a) positions, one random-walk move per node
        steps = rng.normal(size=(n, d))
        unif = rng.random(n)
        for i in range(n):
            prop = z[i] + scale_z.value * steps[i]
            dnew = np.sqrt(((z - prop) ** 2).sum(axis=1))
            dnew[i] = 0.0
            ll_old = row_ll(i, dmat[i])
            ll_new = row_ll(i, dnew)
            c = m[i]
            pr_old = -0.5 * ((z[i] - mu[c]) ** 2).sum() / sig2[c]
            pr_new = -0.5 * ((prop - mu[c]) ** 2).sum() / sig2[c]
            accept = math.log(unif[i] + 1e-300) < (ll_new + pr_new) - (ll_old + pr_old)
            if accept:
                z[i] = prop
                dmat[i, :] = dnew
                dmat[:, i] = dnew
            scale_z.record(accept, tuning)

        d_u = dmat[iu]

        # (b) coefficients
        if controls.intercept:
            prop0 = b0 + scale_b0.value * rng.normal()
            ll_old = _dyad_loglik_full(y_u, d_u, b0, b1)
            ll_new = _dyad_loglik_full(y_u, d_u, prop0, b1)
            pr = -0.5 * (
                (prop0 - priors.beta_mean[0]) ** 2 - (b0 - priors.beta_mean[0]) ** 2
            ) / priors.beta_var[0]
            accept = math.log(rng.random() + 1e-300) < ll_new - ll_old + pr
            if accept:
                b0 = prop0
            scale_b0.record(accept, tuning)

        prop1 = b1 * math.exp(scale_b1.value * rng.normal())
        ll_old = _dyad_loglik_full(y_u, d_u, b0, b1)
        ll_new = _dyad_loglik_full(y_u, d_u, b0, prop1)
        pr = -0.5 * (
            (prop1 - priors.beta_mean[1]) ** 2 - (b1 - priors.beta_mean[1]) ** 2
        ) / priors.beta_var[1]
        jac = math.log(prop1 / b1)  # log-scale random walk Jacobian
        accept = math.log(rng.random() + 1e-300) < ll_new - ll_old + pr + jac
        if accept:
            b1 = prop1
        scale_b1.record(accept, tuning)

        # (c) conjugate mixture block
        m = draw_memberships(z, lam, mu, sig2, rng)
        lam, mu, sig2 = draw_mixture_params(z, m, sig2, k, priors, rng)

        # (d) retention with alignment, rescaling, and bookkeeping
        if not tuning and (it - controls.burnin + 1) % controls.thin == 0:
            lp = _dyad_loglik_full(y_u, d_u, b0, b1) + _log_prior(
                (z, b0, b1, lam, mu, sig2, m), priors, controls.intercept
            )
            probs = membership_probabilities(z, lam, mu, sig2)
            rot, zm, rm = _procrustes_transform(z, reference)
            z_al = (z - zm) @ rot + rm
            mu_al = (mu - zm) @ rot + rm
            scale = math.sqrt(float((z_al**2).sum() / n))
            if scale > 0:
                z_al = z_al / scale
                mu_al = mu_al / scale
                sig2_al = sig2 / scale**2
                b1_al = b1 * scale
            else:
                sig2_al, b1_al = sig2.copy(), b1
            zs[s_out] = z_al
            beta0s[s_out] = b0
            beta1s[s_out] = b1_al
            lams[s_out] = lam
            mus[s_out] = mu_al
            sig2s[s_out] = sig2_al
            ms[s_out] = m
            log_posts[s_out] = lp
            draw_probs[s_out] = probs
            s_out += 1

    # label alignment against the highest-posterior draw
    ref_labels = ms[int(log_posts.argmax())]
    for s in range(controls.n_samples):
        perm = _best_permutation(ms[s], ref_labels, k)
        ms[s] = perm[ms[s]]
        inv = np.argsort(perm)
        lams[s] = lams[s][inv]
        mus[s] = mus[s][inv]
        sig2s[s] = sig2s[s][inv]
        draw_probs[s] = draw_probs[s][:, inv]
        probs_sum += draw_probs[s]
    membership_probs = probs_sum / controls.n_samples

    acceptance = {
        "positions": scale_z.rate(),
        "beta0": scale_b0.rate() if controls.intercept else math.nan,
        "beta1": scale_b1.rate(),
    }
    warnings = [
        f"{name} acceptance rate {rate:.3f} outside [0.1, 0.6]; "
        "consider retuning proposal scales"
        for name, rate in acceptance.items()
        if math.isfinite(rate) and not 0.1 <= rate <= 0.6
    ]
    return LsmPosterior(
        n_clusters=k,
        dim=d,
        zs=zs,
        beta0s=beta0s,
        beta1s=beta1s,
        lams=lams,
        mus=mus,
        sig2s=sig2s,
        ms=ms,
        log_posts=log_posts,
        membership_probs=membership_probs,
        reference=reference,
        acceptance=acceptance,
        warnings=warnings,
        intercept=controls.intercept,
        seed=seed,
    )


# -- serialization -----------------------------------------------------------


def lsm_posterior_to_dict(post: LsmPosterior) -> dict:
    """Compact JSON summary: enough to simulate from the posterior-mean model."""
    return {
        "kind": "lsm",
        "K": post.n_clusters,
        "dim": post.dim,
        "intercept": post.intercept,
        "beta0_mean": post.beta0_mean,
        "beta1_mean": post.beta1_mean,
        "positions_mean": [[float(v) for v in row] for row in post.positions_mean],
        "membership_probs": [
            [float(v) for v in row] for row in post.membership_probs
        ],
        "map_partition": [int(v) for v in map_membership(post).assignments],
        "acceptance": {key: float(val) for key, val in post.acceptance.items()},
        "warnings": list(post.warnings),
        "seed": post.seed,
    }


@dataclass
class LsmSummary:
    """The deserialized form of an LSM posterior summary (no raw draws)."""

    n_clusters: int
    dim: int
    intercept: bool
    beta0_mean: float
    beta1_mean: float
    positions_mean: np.ndarray
    membership_probs: np.ndarray
    map_partition: Partition
    seed: int | None


def lsm_posterior_from_dict(data: dict) -> LsmSummary:
    probs = np.array(data["membership_probs"], dtype=np.float64)
    return LsmSummary(
        n_clusters=int(data["K"]),
        dim=int(data["dim"]),
        intercept=bool(data.get("intercept", True)),
        beta0_mean=float(data["beta0_mean"]),
        beta1_mean=float(data["beta1_mean"]),
        positions_mean=np.array(data["positions_mean"], dtype=np.float64),
        membership_probs=probs,
        map_partition=Partition(
            np.array(data["map_partition"], dtype=np.int64), int(data["K"])
        ),
        seed=data.get("seed"),
    )
