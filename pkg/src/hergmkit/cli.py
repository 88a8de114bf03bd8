"""Command-line front end.

Subcommands: ``simulate`` (hergm | ergm), ``cluster`` (lsm | score), ``fit``
(twostage | ergm), ``gof``, and ``experiment`` (misrate | sensitivity |
score).  Configs and fit results are JSON, tables are CSV, plots are SVG.
Every command embeds a master seed and writes byte-identical outputs when
rerun with the same arguments, regardless of ``--threads``.

Exit codes: 0 success, 2 validation/usage error, 3 numerical failure.
Diagnostics go to standard error; data only to files.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from importlib import resources

import numpy as np

from .experiments import misrate_experiment, score_experiment, sensitivity_experiment
from .fit import (
    McmleControls,
    NonFiniteMleError,
    SamplesDegenerateError,
    between_density_mle,
    ergm_fit_to_dict,
    ergm_fit_from_dict,
    mcmle,
    mple,
)
from .graph import (
    read_edge_list,
    read_partition,
    within_subgraph,
    write_edge_list,
    write_partition,
)
from .lsm import (
    LsmControls,
    lsm_mcmc,
    lsm_posterior_from_dict,
    lsm_posterior_to_dict,
    map_membership,
)
from .sampler import ClusterSpec, HergmSpec, SamplerControls, gibbs_sample, simulate_hergm
from .spectral import ScoreControls, score_cluster
from .stats import parse_spec, stat_vector
from .svgplot import render_panels
from .twostage import (
    TwoStageControls,
    gof,
    two_stage_fit,
    two_stage_fit_from_dict,
    two_stage_fit_to_dict,
)


class ConfigError(ValueError):
    pass


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path, header: list[str], rows: list[dict]):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(row.get(col, "")) for col in header])


def _write_json(path, doc: dict):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _load_config(path) -> dict:
    """Load a JSON config from disk, falling back to the bundled ones."""
    if os.path.exists(path):
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    if os.sep not in str(path):
        bundled = resources.files("hergmkit").joinpath("configs", str(path))
        if bundled.is_file():
            return json.loads(bundled.read_text(encoding="utf-8"))
    raise ConfigError(f"config file not found: {path}")


def _require(cfg: dict, key: str, kind, where: str):
    if key not in cfg:
        raise ConfigError(f"{where}: missing required field {key!r}")
    val = cfg[key]
    if kind is float and isinstance(val, int):
        val = float(val)
    if not isinstance(val, kind):
        raise ConfigError(
            f"{where}.{key}: expected {getattr(kind, '__name__', kind)}, "
            f"got {type(val).__name__}"
        )
    return val


def _parse_hergm_config(cfg: dict) -> tuple[HergmSpec, SamplerControls]:
    clusters_cfg = _require(cfg, "clusters", list, "config")
    clusters = []
    for idx, c in enumerate(clusters_cfg):
        where = f"config.clusters[{idx}]"
        if not isinstance(c, dict):
            raise ConfigError(f"{where}: expected an object")
        n = _require(c, "n", int, where)
        spec = parse_spec(_require(c, "stats", str, where))
        theta = _require(c, "theta", list, where)
        if len(theta) != len(spec):
            raise ConfigError(
                f"{where}.theta: {len(theta)} values for a {len(spec)}-term spec"
            )
        clusters.append(ClusterSpec(n, spec, tuple(float(v) for v in theta)))
    between_p = _require(cfg, "between_p", float, "config")
    try:
        hspec = HergmSpec(tuple(clusters), between_p)
    except ValueError as exc:
        raise ConfigError(f"config: {exc}") from exc
    controls = SamplerControls(
        burnin_sweeps=cfg.get("burnin_sweeps", 2000),
        thin_sweeps=cfg.get("thin_sweeps", 10),
    )
    return hspec, controls


def _stderr(msg: str):
    print(msg, file=sys.stderr)


# -- simulate ----------------------------------------------------------------


def _cmd_simulate_hergm(args) -> int:
    cfg = _load_config(args.config)
    hspec, controls = _parse_hergm_config(cfg)
    g, truth = simulate_hergm(hspec, args.seed, controls)
    write_edge_list(g, args.out)
    write_partition(truth, args.truth)
    if args.stats_out:
        rows = []
        for k, cl in enumerate(hspec.clusters):
            sub, _ = within_subgraph(g, truth, k)
            values = stat_vector(sub, cl.spec)
            for label, value in zip(cl.spec.labels(), values):
                rows.append({"cluster": k, "stat": label, "value": float(value)})
        if hspec.n_clusters >= 2:
            p_hat, p_se = between_density_mle(g, truth)
            from .graph import between_edge_counts

            y_b, n_b = between_edge_counts(g, truth)
            rows.append({"cluster": "between", "stat": "y_B", "value": y_b})
            rows.append({"cluster": "between", "stat": "n_B", "value": n_b})
            rows.append({"cluster": "between", "stat": "p_hat", "value": p_hat})
        _write_csv(args.stats_out, ["cluster", "stat", "value"], rows)
    _stderr(f"simulated {g.n} nodes, {g.n_edges} edges -> {args.out}")
    return 0


def _cmd_simulate_ergm(args) -> int:
    spec = parse_spec(args.stats)
    theta = tuple(float(v) for v in args.theta.split(","))
    controls = SamplerControls(
        burnin_sweeps=args.burnin,
        n_samples=args.samples,
        thin_sweeps=args.thin,
        seed=args.seed,
    )
    res = gibbs_sample(args.n, spec, theta, controls)
    write_edge_list(res.graphs[-1], args.out)
    if args.stats_out:
        rows = []
        for s in range(res.stats.shape[0]):
            row = {"sample": s}
            for pos, label in enumerate(spec.labels()):
                row[label] = float(res.stats[s, pos])
            rows.append(row)
        _write_csv(args.stats_out, ["sample"] + spec.labels(), rows)
    if res.degenerate:
        _stderr("warning: chain ended near a degenerate (empty/complete) graph")
    _stderr(f"retained {len(res.graphs)} samples; wrote final graph -> {args.out}")
    return 0


# -- cluster -----------------------------------------------------------------


def _cmd_cluster_lsm(args) -> int:
    g = read_edge_list(args.graph)
    controls = LsmControls(
        burnin=args.burnin, n_samples=args.samples, thin=args.thin
    )
    post = lsm_mcmc(g, args.K, dim=args.dim, controls=controls, seed=args.seed)
    part = map_membership(post)
    write_partition(part, args.out)
    if args.posterior:
        _write_json(args.posterior, lsm_posterior_to_dict(post))
    if args.positions:
        rows = []
        mean_pos = post.positions_mean
        for node in range(g.n):
            row = {"node": node}
            for axis in range(post.dim):
                row[f"x{axis + 1}"] = float(mean_pos[node, axis])
            row["cluster"] = int(part.assignments[node])
            rows.append(row)
        header = ["node"] + [f"x{a + 1}" for a in range(post.dim)] + ["cluster"]
        _write_csv(args.positions, header, rows)
    for w in post.warnings:
        _stderr(f"warning: {w}")
    _stderr(f"clustered {g.n} nodes into K={args.K} -> {args.out}")
    return 0


def _cmd_cluster_score(args) -> int:
    g = read_edge_list(args.graph)
    part = score_cluster(
        g, ScoreControls(n_clusters=args.K, restarts=args.restarts, seed=args.seed)
    )
    write_partition(part, args.out)
    _stderr(f"clustered {g.n} nodes into K={args.K} -> {args.out}")
    return 0


# -- fit ---------------------------------------------------------------------


def _cmd_fit_twostage(args) -> int:
    g = read_edge_list(args.graph)
    spec = parse_spec(args.stats)
    given = read_partition(args.partition) if args.partition else None
    if args.stage1 == "given" and given is None:
        raise ConfigError("--stage1 given requires --partition")
    controls = TwoStageControls(
        method=args.method,
        dim=args.dim,
        lsm=LsmControls(
            burnin=args.lsm_burnin, n_samples=args.lsm_samples, thin=args.lsm_thin
        ),
        mcmle=McmleControls(
            n_samples=args.mc_samples, burnin_sweeps=args.mc_burnin
        ),
    )
    ts = two_stage_fit(
        g,
        args.K,
        spec,
        stage1=args.stage1,
        controls=controls,
        given_partition=given,
        seed=args.seed,
    )
    _write_json(args.out, two_stage_fit_to_dict(ts))
    for k, reason in enumerate(ts.fit_errors):
        if reason is not None:
            _stderr(f"warning: cluster {k} fit unavailable: {reason}")
    _stderr(f"two-stage fit ({args.stage1} + {args.method}) -> {args.out}")
    return 0


def _cmd_fit_ergm(args) -> int:
    g = read_edge_list(args.graph)
    spec = parse_spec(args.stats)
    if args.method == "mple":
        fit = mple(g, spec)
        fit.seed = args.seed
    else:
        theta0 = (
            tuple(float(v) for v in args.theta0.split(",")) if args.theta0 else None
        )
        fit = mcmle(
            g,
            spec,
            theta0=theta0,
            controls=McmleControls(
                n_samples=args.mc_samples,
                burnin_sweeps=args.mc_burnin,
                seed=args.seed,
            ),
        )
        if not fit.diagnostics.converged:
            _stderr("warning: moment condition not met within iteration budget")
    _write_json(args.out, ergm_fit_to_dict(fit))
    _stderr(f"{args.method} fit of {spec.to_string()} -> {args.out}")
    return 0


# -- gof ---------------------------------------------------------------------


def _load_fit(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    kind = doc.get("kind")
    if kind == "twostage":
        return two_stage_fit_from_dict(doc)
    if kind == "ergm":
        return ergm_fit_from_dict(doc)
    if kind == "lsm":
        return lsm_posterior_from_dict(doc)
    raise ConfigError(f"{path}: unknown fit kind {kind!r}")


def _cmd_gof(args) -> int:
    if args.nsim < 1:
        raise ConfigError("--nsim must be >= 1")
    g = read_edge_list(args.graph)
    fit = _load_fit(args.fit)
    report = gof(
        g,
        fit,
        args.nsim,
        seed=args.seed,
        sim_controls=SamplerControls(burnin_sweeps=args.burnin),
    )
    rows = []
    for name, diag in report.diagnostics.items():
        for b in range(len(diag.observed)):
            rows.append(
                {
                    "diagnostic": name,
                    "bin": b,
                    "observed": float(diag.observed[b]),
                    "lower": float(diag.lower[b]),
                    "upper": float(diag.upper[b]),
                    "inside": int(
                        diag.lower[b] <= diag.observed[b] <= diag.upper[b]
                    ),
                }
            )
        rows.append(
            {
                "diagnostic": name,
                "bin": "coverage",
                "observed": diag.coverage,
                "lower": "",
                "upper": "",
                "inside": "",
            }
        )
    _write_csv(
        args.out, ["diagnostic", "bin", "observed", "lower", "upper", "inside"], rows
    )
    if args.svg:
        panels = []
        for name, diag in report.diagnostics.items():
            xs = list(range(len(diag.observed)))
            panels.append(
                {
                    "title": f"{name} (coverage {diag.coverage:.2f})",
                    "x": xs,
                    "series": [
                        {
                            "label": "envelope",
                            "lower": diag.lower.tolist(),
                            "upper": diag.upper.tolist(),
                        },
                        {"label": "observed", "values": diag.observed.tolist()},
                    ],
                }
            )
        render_panels(panels, args.svg)
    if report.flagged_clusters:
        _stderr(
            "warning: clusters simulated as Bernoulli fallback: "
            f"{report.flagged_clusters}"
        )
    cov = ", ".join(
        f"{name}={diag.coverage:.3f}" for name, diag in report.diagnostics.items()
    )
    _stderr(f"gof coverage: {cov} -> {args.out}")
    return 0


# -- experiment ----------------------------------------------------------------


def _experiment_header(kind: str, cfg: dict) -> list[str]:
    if kind == "misrate":
        return ["n_per_cluster", "transitivity", "replication", "rate"]
    if kind == "score":
        return ["replication", "rate"]
    spec = parse_spec(cfg["stats"])
    cols = ["rho", "replication", "cluster"]
    for label in spec.labels():
        cols.append(f"theta[{label}]")
    for label in spec.labels():
        cols.append(f"bias[{label}]")
    return cols + ["esp_coverage", "degree_coverage"]


def _experiment_svg(kind: str, cfg: dict, rows: list[dict], path):
    means = [r for r in rows if r["replication"] == "mean"]
    if kind == "misrate":
        ns = sorted({r["n_per_cluster"] for r in means})
        panels = [
            {
                "title": "mean mis-clustering rate vs cluster size",
                "x": ns,
                "series": [
                    {
                        "label": f"t={t:g}",
                        "values": [
                            next(
                                r["rate"]
                                for r in means
                                if r["n_per_cluster"] == n and r["transitivity"] == t
                            )
                            for n in ns
                        ],
                    }
                    for t in sorted({r["transitivity"] for r in means})
                ],
            }
        ]
    elif kind == "score":
        reps = [r for r in rows if r["replication"] != "mean"]
        panels = [
            {
                "title": "SCORE mis-clustering rate per replication",
                "x": [r["replication"] for r in reps],
                "series": [{"label": "rate", "values": [r["rate"] for r in reps]}],
            }
        ]
    else:
        rhos = sorted({r["rho"] for r in means})
        spec = parse_spec(cfg["stats"])
        bias_series = []
        for label in spec.labels():
            key = f"bias[{label}]"
            bias_series.append(
                {
                    "label": label,
                    "values": [
                        float(np.mean([r[key] for r in means if r["rho"] == rho]))
                        for rho in rhos
                    ],
                }
            )
        cov_series = [
            {
                "label": name,
                "values": [
                    float(
                        np.mean([r[f"{name}_coverage"] for r in means if r["rho"] == rho])
                    )
                    for rho in rhos
                ],
            }
            for name in ("esp", "degree")
        ]
        panels = [
            {"title": "mean |bias| vs flip fraction", "x": rhos, "series": bias_series},
            {"title": "envelope coverage vs flip fraction", "x": rhos, "series": cov_series},
        ]
    render_panels(panels, path)


def _cmd_experiment(args) -> int:
    cfg = _load_config(args.config)
    threads = _resolve_threads(args.threads)
    runners = {
        "misrate": misrate_experiment,
        "sensitivity": sensitivity_experiment,
        "score": score_experiment,
    }
    try:
        rows = runners[args.kind](cfg, threads=threads)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    _write_csv(args.out, _experiment_header(args.kind, cfg), rows)
    if args.svg:
        _experiment_svg(args.kind, cfg, rows, args.svg)
    _stderr(f"experiment {args.kind}: {len(rows)} rows -> {args.out}")
    return 0


# -- parser ------------------------------------------------------------------


def _resolve_threads(value) -> int:
    if value is not None:
        return max(int(value), 1)
    env = os.environ.get("HERGMKIT_THREADS")
    if env:
        return max(int(env), 1)
    return os.cpu_count() or 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed")
    common.add_argument(
        "--threads",
        type=int,
        default=None,
        help="worker processes (default: HERGMKIT_THREADS or all cores)",
    )

    parser = argparse.ArgumentParser(
        prog="hergm-kit",
        description="Simulate, cluster, fit, and check hierarchical ERGMs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="draw networks from a model")
    sim_sub = p_sim.add_subparsers(dest="mode", required=True)
    p_sh = sim_sub.add_parser("hergm", parents=[common], help="block-structured network")
    p_sh.add_argument("--config", required=True, help="JSON config (bundled name ok)")
    p_sh.add_argument("--out", required=True, help="edge-list output")
    p_sh.add_argument("--truth", required=True, help="ground-truth partition CSV")
    p_sh.add_argument("--stats-out", help="per-cluster statistics CSV")
    p_sh.set_defaults(func=_cmd_simulate_hergm)
    p_se = sim_sub.add_parser("ergm", parents=[common], help="single-block ERGM")
    p_se.add_argument("--n", type=int, required=True)
    p_se.add_argument("--stats", required=True, help="e.g. edges,gwesp(0.5)")
    p_se.add_argument("--theta", required=True, help="comma-separated values")
    p_se.add_argument("--burnin", type=int, default=2000, help="burn-in sweeps")
    p_se.add_argument("--samples", type=int, default=1)
    p_se.add_argument("--thin", type=int, default=10, help="sweeps between samples")
    p_se.add_argument("--out", required=True, help="edge list of the final sample")
    p_se.add_argument("--stats-out", help="CSV of retained statistic vectors")
    p_se.set_defaults(func=_cmd_simulate_ergm)

    p_cl = sub.add_parser("cluster", help="recover a partition (stage 1)")
    cl_sub = p_cl.add_subparsers(dest="mode", required=True)
    p_cl_lsm = cl_sub.add_parser("lsm", parents=[common], help="latent position model")
    p_cl_lsm.add_argument("--graph", required=True)
    p_cl_lsm.add_argument("--K", type=int, required=True)
    p_cl_lsm.add_argument("--dim", type=int, default=2)
    p_cl_lsm.add_argument("--burnin", type=int, default=5000)
    p_cl_lsm.add_argument("--samples", type=int, default=2000)
    p_cl_lsm.add_argument("--thin", type=int, default=5)
    p_cl_lsm.add_argument("--out", required=True, help="partition CSV")
    p_cl_lsm.add_argument("--posterior", help="posterior summary JSON")
    p_cl_lsm.add_argument("--positions", help="posterior-mean positions CSV")
    p_cl_lsm.set_defaults(func=_cmd_cluster_lsm)
    p_cl_sc = cl_sub.add_parser("score", parents=[common], help="SCORE spectral")
    p_cl_sc.add_argument("--graph", required=True)
    p_cl_sc.add_argument("--K", type=int, required=True)
    p_cl_sc.add_argument("--restarts", type=int, default=10)
    p_cl_sc.add_argument("--out", required=True, help="partition CSV")
    p_cl_sc.set_defaults(func=_cmd_cluster_score)

    p_fit = sub.add_parser("fit", help="estimate model parameters")
    fit_sub = p_fit.add_subparsers(dest="mode", required=True)
    p_ft = fit_sub.add_parser("twostage", parents=[common], help="full pipeline")
    p_ft.add_argument("--graph", required=True)
    p_ft.add_argument("--K", type=int, required=True)
    p_ft.add_argument("--stats", required=True)
    p_ft.add_argument("--stage1", choices=("lsm", "score", "given"), default="lsm")
    p_ft.add_argument("--partition", help="partition CSV for --stage1 given")
    p_ft.add_argument("--method", choices=("mcmle", "mple"), default="mcmle")
    p_ft.add_argument("--dim", type=int, default=2)
    p_ft.add_argument("--lsm-burnin", type=int, default=5000)
    p_ft.add_argument("--lsm-samples", type=int, default=2000)
    p_ft.add_argument("--lsm-thin", type=int, default=5)
    p_ft.add_argument("--mc-samples", type=int, default=1024)
    p_ft.add_argument("--mc-burnin", type=int, default=200)
    p_ft.add_argument("--out", required=True, help="fit JSON")
    p_ft.set_defaults(func=_cmd_fit_twostage)
    p_fe = fit_sub.add_parser("ergm", parents=[common], help="single-block fit")
    p_fe.add_argument("--graph", required=True)
    p_fe.add_argument("--stats", required=True)
    p_fe.add_argument("--method", choices=("mcmle", "mple"), default="mcmle")
    p_fe.add_argument("--theta0", help="comma-separated MCMLE start")
    p_fe.add_argument("--mc-samples", type=int, default=1024)
    p_fe.add_argument("--mc-burnin", type=int, default=200)
    p_fe.add_argument("--out", required=True, help="fit JSON")
    p_fe.set_defaults(func=_cmd_fit_ergm)

    p_gof = sub.add_parser("gof", parents=[common], help="simulation-envelope fit check")
    p_gof.add_argument("--graph", required=True)
    p_gof.add_argument("--fit", required=True, help="fit JSON from fit/cluster")
    p_gof.add_argument("--nsim", type=int, required=True)
    p_gof.add_argument("--burnin", type=int, default=500, help="sim burn-in sweeps")
    p_gof.add_argument("--out", required=True, help="envelope CSV")
    p_gof.add_argument("--svg", help="envelope plot")
    p_gof.set_defaults(func=_cmd_gof)

    p_exp = sub.add_parser("experiment", parents=[common], help="batch experiments")
    p_exp.add_argument("kind", choices=("misrate", "sensitivity", "score"))
    p_exp.add_argument("--config", required=True, help="JSON config (bundled name ok)")
    p_exp.add_argument("--out", required=True, help="result CSV")
    p_exp.add_argument("--svg", help="summary plot")
    p_exp.set_defaults(func=_cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _stderr(f"error: {exc}")
        return 2
    except (ValueError, OSError) as exc:
        _stderr(f"error: {exc}")
        return 2
    except (NonFiniteMleError, SamplesDegenerateError, np.linalg.LinAlgError) as exc:
        _stderr(f"numerical failure: {exc}")
        return 3
    except RuntimeError as exc:
        _stderr(f"numerical failure: {exc}")
        return 3


if __name__ == "__main__":
    sys.exit(main())
