"""ERGM parameter estimation.

Two estimators share the ``ErgmFit`` result type:

* ``mple``: maximum pseudo-likelihood.  The conditional log-odds of each
  dyad is linear in its change statistics, so the pseudo-likelihood is a
  logistic regression of tie indicators on change-statistic rows, solved
  here by Newton iteration with explicit separation detection.
* ``mcmle``: Monte Carlo maximum likelihood.  Starting from the MPLE (or a
  supplied value), repeatedly samples the model at the current parameter,
  maximizes the importance-sampling approximation of the likelihood ratio,
  and stops when the simulated mean statistics bracket the observed ones.

``between_density_mle`` is the closed-form Binomial estimate for the shared
between-cluster tie probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graph import Graph, Partition, between_edge_counts
from .rng import child_rng
from .sampler import SamplerControls, dyad_order, gibbs_sample
from .stats import ChangeStatEngine, StatisticSpec, stat_vector

__all__ = [
    "ErgmFit",
    "FitDiagnostics",
    "McmleControls",
    "NonFiniteMleError",
    "SamplesDegenerateError",
    "mple",
    "mcmle",
    "between_density_mle",
    "ergm_fit_to_dict",
    "ergm_fit_from_dict",
]


class NonFiniteMleError(RuntimeError):
    """The (pseudo-)likelihood has no finite maximizer.

    Carries the unit direction along which the objective keeps improving,
    e.g. the all-edges direction for an empty graph with an edges term.
    """

    def __init__(self, message: str, direction: np.ndarray):
        super().__init__(message)
        self.direction = direction


class SamplesDegenerateError(RuntimeError):
    """Importance weights carry no information about the observed graph."""


@dataclass
class FitDiagnostics:
    iterations: int = 0
    grad_norm: float = math.nan
    mc_samples: int | None = None
    mu_hat: np.ndarray | None = None
    mc_se: np.ndarray | None = None
    degenerate: bool = False
    converged: bool = True
    step_sizes: list[float] = field(default_factory=list)


@dataclass
class ErgmFit:
    spec: StatisticSpec
    theta_hat: np.ndarray
    std_errors: np.ndarray
    method: str  # "mple" | "mcmle"
    diagnostics: FitDiagnostics
    seed: int | None = None


def _dyad_design(g: Graph, spec: StatisticSpec) -> tuple[np.ndarray, np.ndarray]:
    """Materialize (X, y): one row of change statistics per dyad."""
    engine = ChangeStatEngine(spec, g.n)
    dyads = dyad_order(g.n)
    x = np.empty((len(dyads), len(spec)), dtype=np.float64)
    y = np.empty(len(dyads), dtype=np.float64)
    for r, (i, j) in enumerate(dyads):
        x[r] = engine.compute(g, i, j)
        y[r] = 1.0 if g.has_edge(i, j) else 0.0
    return x, y


_SEPARATION_NORM = 50.0


def mple(
    g: Graph,
    spec: StatisticSpec,
    *,
    max_iter: int = 100,
    grad_tol: float = 1e-8,
) -> ErgmFit:
    """Maximum pseudo-likelihood estimate via Newton iteration.

    Raises ``NonFiniteMleError`` on perfect separation (including the
    empty/complete graph with an edges term), reporting the divergence
    direction.
    """
    if g.n < 2:
        raise ValueError("pseudo-likelihood needs at least one dyad")
    x, y = _dyad_design(g, spec)
    beta = np.zeros(len(spec))
    step_log: list[float] = []
    grad = np.full(len(spec), np.inf)
    for it in range(1, max_iter + 1):
        eta = x @ beta
        p = 0.5 * (1.0 + np.tanh(0.5 * eta))
        grad = x.T @ (y - p)
        gnorm = float(np.linalg.norm(grad))
        if gnorm < grad_tol:
            break
        w = p * (1.0 - p)
        hess = x.T @ (x * w[:, None])
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.pinv(hess) @ grad
        beta = beta + step
        step_log.append(float(np.linalg.norm(step)))
        p_new = 0.5 * (1.0 + np.tanh(0.5 * (x @ beta)))
        perfect_fit = float(np.max(np.abs(y - p_new))) < 1e-3
        if np.linalg.norm(beta) > _SEPARATION_NORM or (
            perfect_fit and np.linalg.norm(beta) > 10.0
        ):
            # fitted probabilities can reach the data only as beta diverges
            direction = beta / np.linalg.norm(beta)
            raise NonFiniteMleError(
                "pseudo-likelihood is monotone along a direction (perfect "
                "separation); no finite MPLE exists",
                direction,
            )
    else:
        raise RuntimeError(
            f"MPLE Newton did not reach gradient norm {grad_tol} in {max_iter} "
            f"iterations (last norm {float(np.linalg.norm(grad)):.3g})"
        )
    eta = x @ beta
    p = 0.5 * (1.0 + np.tanh(0.5 * eta))
    w = p * (1.0 - p)
    hess = x.T @ (x * w[:, None])
    try:
        cov = np.linalg.inv(hess)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(hess)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    diag = FitDiagnostics(
        iterations=it,
        grad_norm=float(np.linalg.norm(grad)),
        step_sizes=step_log,
    )
    return ErgmFit(spec, beta, se, "mple", diag)


@dataclass(frozen=True)
class McmleControls:
    """Monte Carlo MLE controls.

    ``n_samples`` doubles (up to ``max_samples``) whenever the effective
    sample size of the importance weights drops below a tenth of the draw
    count.  Convergence requires every component of the simulated mean
    statistic to sit within ``moment_band`` Monte Carlo standard errors of
    the observed statistic.
    """

    n_samples: int = 1024
    max_samples: int = 8192
    burnin_sweeps: int = 200
    thin_sweeps: int = 5
    max_outer: int = 50
    trust_radius: float = 0.5
    moment_band: float = 3.0
    seed: int = 0


def _batch_se(s: np.ndarray) -> np.ndarray:
    """Batch-means Monte Carlo standard error of the column means.

    Accounts for chain autocorrelation that a plain sd/sqrt(m) misses.
    """
    m = s.shape[0]
    b = max(int(math.sqrt(m)), 2)
    n_batches = m // b
    trimmed = s[: n_batches * b]
    batch_means = trimmed.reshape(n_batches, b, -1).mean(axis=1)
    return batch_means.std(axis=0, ddof=1) / math.sqrt(n_batches)


def _weighted_newton(s_centered, s_obs_c, trust_radius, m):
    """Maximize delta' s_obs - log mean exp(delta' s) over the trust region.

    Works on statistics centered at the sample mean for conditioning.
    Returns (delta, ess_collapsed).
    """
    t = s_centered.shape[1]
    delta = np.zeros(t)
    collapsed = False
    for _ in range(40):
        logw = s_centered @ delta
        logw -= logw.max()
        w = np.exp(logw)
        w /= w.sum()
        ess = 1.0 / float(w @ w)
        if ess < m / 10.0:
            collapsed = True
            break
        wmean = w @ s_centered
        grad = s_obs_c - wmean
        centered = s_centered - wmean
        covw = centered.T @ (centered * w[:, None])
        try:
            step = np.linalg.solve(covw + 1e-10 * np.eye(t), grad)
        except np.linalg.LinAlgError:
            step = np.linalg.pinv(covw) @ grad
        new = delta + step
        nn = np.linalg.norm(new)
        if nn > trust_radius:
            new = new * (trust_radius / nn)
        moved = np.linalg.norm(new - delta)
        delta = new
        if moved < 1e-10:
            break
    return delta, collapsed


def mcmle(
    g: Graph,
    spec: StatisticSpec,
    theta0=None,
    controls: McmleControls = McmleControls(),
) -> ErgmFit:
    """Monte Carlo maximum likelihood with trust-region parameter moves.

    Each outer iteration samples ``m`` graphs at the current parameter,
    checks the mean-value moment condition, and otherwise takes a damped
    Newton step on the importance-sampling likelihood-ratio surrogate.
    Raises ``SamplesDegenerateError`` when the sampled statistics carry no
    variation to compare against the observed graph.
    """
    s_obs = stat_vector(g, spec)
    if theta0 is None:
        # the MPLE can be wild or non-finite on small graphs; the start only
        # changes the path, not the fixed point
        try:
            theta = np.clip(mple(g, spec).theta_hat, -10.0, 10.0)
        except NonFiniteMleError:
            theta = np.zeros(len(spec))
    else:
        theta = np.asarray(theta0, dtype=np.float64).copy()
        if theta.shape != (len(spec),) or not np.all(np.isfinite(theta)):
            raise ValueError(f"theta0 must be {len(spec)} finite values")
    m = controls.n_samples
    step_log: list[float] = []
    degenerate = False
    contractions = 0
    for outer in range(1, controls.max_outer + 1):
        res = gibbs_sample(
            g.n,
            spec,
            theta,
            SamplerControls(controls.burnin_sweeps, m, controls.thin_sweeps, 0),
            rng=child_rng(controls.seed, "mcmle", outer),
        )
        degenerate = degenerate or res.degenerate
        s = res.stats
        mean = s.mean(axis=0)
        sd = s.std(axis=0, ddof=1)
        mc_se = _batch_se(s)
        gap = np.abs(mean - s_obs)
        if np.all(gap <= controls.moment_band * mc_se + 1e-12) and np.any(sd > 0):
            # polish: solve the sample moment equation exactly so the
            # estimate is the sample MLE, not wherever the band was entered
            delta, _ = _weighted_newton(
                s - mean, s_obs - mean, controls.trust_radius, m
            )
            theta = theta + delta
            if np.linalg.norm(delta) > 0:
                step_log.append(float(np.linalg.norm(delta)))
            logw = (s - mean) @ delta
            logw -= logw.max()
            w = np.exp(logw)
            w /= w.sum()
            mu_w = w @ s
            centered = s - mu_w
            cov_w = centered.T @ (centered * w[:, None])
            try:
                inv = np.linalg.inv(cov_w)
            except np.linalg.LinAlgError:
                inv = np.linalg.pinv(cov_w)
            se = np.sqrt(np.clip(np.diag(inv), 0.0, None))
            diag = FitDiagnostics(
                iterations=outer,
                grad_norm=float(np.linalg.norm(mu_w - s_obs)),
                mc_samples=m,
                mu_hat=mu_w,
                mc_se=mc_se,
                degenerate=degenerate,
                converged=True,
                step_sizes=step_log,
            )
            return ErgmFit(spec, theta, se, "mcmle", diag, seed=controls.seed)
        if np.all(sd == 0.0) and np.all(gap <= 1e-12):
            # chain and observation agree on a boundary graph; report as-is
            diag = FitDiagnostics(
                iterations=outer,
                grad_norm=0.0,
                mc_samples=m,
                mu_hat=mean,
                mc_se=mc_se,
                degenerate=True,
                converged=True,
                step_sizes=step_log,
            )
            return ErgmFit(spec, theta, np.zeros(len(spec)), "mcmle", diag,
                           seed=controls.seed)
        if np.all(sd == 0.0):
            # frozen chain: importance weights carry nothing, but damping the
            # parameter toward the uniform model restores variation
            contractions += 1
            degenerate = True
            if contractions > 8:
                raise SamplesDegenerateError(
                    "sampled statistics stay constant even after damping the "
                    "parameter; the observed graph does not overlap the model "
                    "samples. Increase sample size/burn-in or supply a start "
                    "closer to the solution (stepping)."
                )
            theta = theta * 0.5
            step_log.append(float(np.linalg.norm(theta)))
            continue
        delta, collapsed = _weighted_newton(
            s - mean, s_obs - mean, controls.trust_radius, m
        )
        theta = theta + delta
        step_log.append(float(np.linalg.norm(delta)))
        if collapsed and m < controls.max_samples:
            m = min(2 * m, controls.max_samples)
    # moment condition never met; report the last state honestly
    diag = FitDiagnostics(
        iterations=controls.max_outer,
        grad_norm=float(np.linalg.norm(mean - s_obs)),
        mc_samples=m,
        mu_hat=mean,
        mc_se=mc_se,
        degenerate=degenerate,
        converged=False,
        step_sizes=step_log,
    )
    cov = np.atleast_2d(np.cov(s.T, ddof=1))
    se = np.sqrt(np.clip(np.diag(np.linalg.pinv(cov)), 0.0, None))
    return ErgmFit(spec, theta, se, "mcmle", diag, seed=controls.seed)


def between_density_mle(g: Graph, p: Partition) -> tuple[float, float]:
    """Closed-form MLE (p_hat, std_error) of the between-cluster density."""
    if p.n_clusters < 2:
        raise ValueError("between-cluster density needs K >= 2")
    y_b, n_b = between_edge_counts(g, p)
    if n_b == 0:
        raise ValueError("partition has no between-cluster dyads")
    p_hat = y_b / n_b
    se = math.sqrt(p_hat * (1.0 - p_hat) / n_b)
    return p_hat, se


# -- JSON-friendly serialization --------------------------------------------


def ergm_fit_to_dict(fit: ErgmFit) -> dict:
    d = fit.diagnostics
    return {
        "kind": "ergm",
        "spec": fit.spec.to_string(),
        "theta_hat": [float(v) for v in fit.theta_hat],
        "std_errors": [float(v) for v in fit.std_errors],
        "method": fit.method,
        "seed": fit.seed,
        "diagnostics": {
            "iterations": d.iterations,
            "grad_norm": d.grad_norm,
            "mc_samples": d.mc_samples,
            "mu_hat": None if d.mu_hat is None else [float(v) for v in d.mu_hat],
            "mc_se": None if d.mc_se is None else [float(v) for v in d.mc_se],
            "degenerate": d.degenerate,
            "converged": d.converged,
            "step_sizes": [float(v) for v in d.step_sizes],
        },
    }


def ergm_fit_from_dict(data: dict) -> ErgmFit:
    from .stats import parse_spec

    d = data.get("diagnostics", {})
    diag = FitDiagnostics(
        iterations=d.get("iterations", 0),
        grad_norm=d.get("grad_norm", math.nan),
        mc_samples=d.get("mc_samples"),
        mu_hat=None if d.get("mu_hat") is None else np.array(d["mu_hat"]),
        mc_se=None if d.get("mc_se") is None else np.array(d["mc_se"]),
        degenerate=d.get("degenerate", False),
        converged=d.get("converged", True),
        step_sizes=list(d.get("step_sizes", [])),
    )
    return ErgmFit(
        spec=parse_spec(data["spec"]),
        theta_hat=np.array(data["theta_hat"], dtype=np.float64),
        std_errors=np.array(data["std_errors"], dtype=np.float64),
        method=data["method"],
        diagnostics=diag,
        seed=data.get("seed"),
    )
