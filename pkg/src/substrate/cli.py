"""Command line front end.

Commands build their module's artifacts under --out and write a
manifest_<command>.json recording versions, the effective config and
its hash, derived seed substreams, and wall-clock time. Every stochastic
step draws from a named substream of the root seed, so reruns with the
same inputs and config reproduce every artifact byte for byte (the
manifest's wall clock being the one exception).
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import asdict

import numpy as np

from .core import GraphConfig, Snapshot, build_graph, graph_to_csv, load_snapshot, write_snapshot
from .curvature import (
    bridge_mass,
    curvature_profile,
    derive_basins,
    node_report_rows,
    verify_contractivity,
)
from .drift import drift_report
from .dynamics import (
    ExternalOperator,
    halfspace_projection_op,
    identity_op,
    iterate,
    label_trajectory,
    nearest_node,
    noisy_drift_op,
    perturbation_persistence,
    pull_to_centroid_op,
    snap_to_nearest_op,
    switch_rate,
    translation_op,
)
from .errors import ConfigError, InputError, SubstrateError
from .harness import (
    HarnessConfig,
    SURFACE_ENDPOINTS,
    p1_harness,
    p2_harness,
    p3_harness,
    p4_harness,
    p5_harness,
    run_surface,
    surface_to_csv,
)
from .reports import (
    RunConfig,
    build_manifest,
    config_hash,
    fmt_float,
    json_report,
    parse_config_file,
    read_covariate_tsv,
    report_preamble,
    write_text,
)
from .seeding import STREAM_ENSEMBLE, STREAM_SYNTH, STREAM_TRIALS, stream_rng, substream_seed
from .synthetic import (
    EvolutionSpec,
    SynthConfig,
    evolve,
    generate,
    labels_with_centroids,
    parse_labels_csv,
)
from .transport import (
    CostMatrix,
    DiscreteMeasure,
    w1_exact_plan,
    w1_sinkhorn,
)

OPERATOR_CHOICES = (
    "identity",
    "translate",
    "pull_to_centroid",
    "noisy_drift",
    "halfspace_projection",
    "snap_to_nearest",
    "external",
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="substrate",
        description="Embedding-substrate drift, curvature, and harness toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def _common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="root seed")
        p.add_argument("--k", type=int, default=None)
        p.add_argument("--mode", choices=("knn", "mutual_knn"), default=None)
        p.add_argument("--metric", choices=("euclidean", "cosine_distance"), default=None)
        p.add_argument("--weighting", choices=("binary", "inverse_distance", "heat"), default=None)
        p.add_argument("--alpha", type=float, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument(
            "--deterministic",
            action="store_true",
            help="force serial reduction order (equivalent to --threads 1)",
        )

    p = sub.add_parser("graph", help="build the neighborhood graph for one window")
    _common(p)
    p.add_argument("--t0", required=True, help="snapshot TSV")

    p = sub.add_parser("curvature", help="pair curvature, bridge mass, basins")
    _common(p)
    p.add_argument("--t0", required=True)
    p.add_argument("--pairs-mode", choices=("edges", "all_pairs"), default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument(
        "--verify-contractivity",
        action="store_true",
        help="empirical contraction check (needs --pairs-mode all_pairs)",
    )

    p = sub.add_parser("drift", help="four-channel drift between two windows")
    _common(p)
    p.add_argument("--t0", required=True)
    p.add_argument("--t1", required=True)

    p = sub.add_parser("dynamics", help="operator ensemble over the substrate")
    _common(p)
    p.add_argument("--t0", required=True)
    p.add_argument("--op", choices=OPERATOR_CHOICES, default="noisy_drift")
    p.add_argument("--op-command", help="command line for --op external")

    p = sub.add_parser("harness", help="run a pre-registered protocol")
    _common(p)
    p.add_argument("protocol", choices=("p1", "p2", "p3", "p4", "p5"))
    p.add_argument("--t0", required=True)
    p.add_argument("--t1")
    p.add_argument("--labels", help="planted labels CSV (p3)")
    p.add_argument("--covariates", help="id<TAB>value frequency covariate (p1)")
    p.add_argument("--committed", action="store_true", help="confirmatory gate (p3/p4/p5)")
    p.add_argument("--placebo", action="store_true", help="shuffle outcome labels (p1)")

    p = sub.add_parser("sweep", help="robustness surface over graph settings")
    _common(p)
    p.add_argument("--t0", required=True)
    p.add_argument("--t1", required=True)
    p.add_argument("--ks", default="5,10,15", help="comma-separated k values")
    p.add_argument("--alphas", default="0.0,0.5", help="comma-separated alpha values")
    p.add_argument("--weightings", default="binary", help="comma-separated weightings")
    p.add_argument(
        "--endpoints",
        default="kappa_mean,drw_q90",
        help=f"comma-separated endpoints from {', '.join(SURFACE_ENDPOINTS)}",
    )

    p = sub.add_parser("synth", help="generate a planted substrate pair")
    _common(p)

    p = sub.add_parser("ot", help="transport utilities")
    _common(p)
    p.add_argument("action", choices=("solve",))
    p.add_argument("--mu", required=True, help="measure TSV: atom<TAB>mass")
    p.add_argument("--nu", required=True)
    p.add_argument("--cost", required=True, help="cost CSV: header atom,<col...>")
    p.add_argument("--method", choices=("exact", "sinkhorn"), default="exact")
    return parser


_OVERRIDE_KEYS = ("seed", "k", "mode", "metric", "weighting", "alpha", "threads")


def _effective_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig()
    if getattr(args, "config", None):
        config = config.merged(parse_config_file(args.config))
    overrides = {key: getattr(args, key, None) for key in _OVERRIDE_KEYS}
    if getattr(args, "pairs_mode", None) is not None:
        overrides["pairs_mode"] = args.pairs_mode
    if getattr(args, "tau", None) is not None:
        overrides["tau"] = args.tau
    if getattr(args, "committed", False):
        overrides["committed"] = True
    if getattr(args, "placebo", False):
        overrides["placebo"] = True
    if getattr(args, "deterministic", False):
        overrides["deterministic"] = True
        overrides["threads"] = 1
    return config.merged(overrides)


def _graph_config(config: RunConfig) -> GraphConfig:
    return GraphConfig(
        k=config.k,
        mode=config.mode,
        metric=config.metric,
        weighting=config.weighting,
        alpha=config.alpha,
        heat_sigma=config.heat_sigma,
    )


def _harness_config(config: RunConfig) -> HarnessConfig:
    return HarnessConfig(
        q=config.q,
        n_bins=config.n_bins,
        n_perm=config.n_perm,
        n_boot=config.n_boot,
        seed=config.seed,
        level=config.level,
        committed=config.committed,
        placebo=config.placebo,
    )


def _out_path(args: argparse.Namespace, name: str) -> str:
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _cmd_graph(args: argparse.Namespace, config: RunConfig) -> dict:
    snapshot = load_snapshot(args.t0, window_id="t0")
    graph = build_graph(snapshot, _graph_config(config))
    edges, nodes = graph_to_csv(graph, report_preamble(config))
    write_text(_out_path(args, "edges.csv"), edges)
    write_text(_out_path(args, "nodes.csv"), nodes)
    n_edges = sum(v.size for v in graph.neighbor_idx)
    return {
        "inputs": {"t0": args.t0},
        "n_nodes": len(graph),
        "n_directed_edges": int(n_edges),
        "n_isolated": len(graph.isolated),
        "heat_sigma_used": graph.heat_sigma_used,
    }


def _cmd_curvature(args: argparse.Namespace, config: RunConfig) -> dict:
    snapshot = load_snapshot(args.t0, window_id="t0")
    graph = build_graph(snapshot, _graph_config(config))
    profile = curvature_profile(graph, config.pairs_mode, threads=config.threads)
    basins = derive_basins(graph, profile, tau=config.tau)
    pre = report_preamble(config)
    head = "".join(f"# {p}\n" for p in pre)
    lines = [head + "src,dst,distance,w1,kappa"]
    for pair in profile.pairs:
        lines.append(
            f"{pair.src},{pair.dst},{fmt_float(pair.distance)},"
            f"{fmt_float(pair.w1)},{fmt_float(pair.kappa)}"
        )
    write_text(_out_path(args, "curvature.csv"), "\n".join(lines) + "\n")
    node_lines = [head + "id,bridge_mass,basin_id,min_incident_kappa"]
    for node_id, bmass, basin_id, min_kappa in node_report_rows(graph, profile, basins):
        min_txt = "" if min_kappa is None else fmt_float(min_kappa)
        node_lines.append(f"{node_id},{fmt_float(bmass)},{basin_id},{min_txt}")
    write_text(_out_path(args, "curvature_nodes.csv"), "\n".join(node_lines) + "\n")
    extra: dict = {
        "inputs": {"t0": args.t0},
        "pairs_mode": config.pairs_mode,
        "n_pairs": len(profile.pairs),
        "n_skipped_zero_distance": len(profile.skipped),
        "kappa0_edge": profile.kappa0_edge,
        "kappa0_all": profile.kappa0_all,
        "tau": config.tau,
        "n_basins": basins.n_basins,
        "n_bridge_edges": len(basins.bridge_edges),
    }
    if args.verify_contractivity:
        if config.pairs_mode != "all_pairs":
            raise ConfigError("--verify-contractivity needs --pairs-mode all_pairs")
        report = verify_contractivity(
            graph,
            profile,
            trials=config.trials,
            seed=substream_seed(config.seed, STREAM_TRIALS),
        )
        payload = {
            "config_hash": config_hash(config),
            "seed": config.seed,
            "kappa0": report.kappa0,
            "vacuous": report.vacuous,
            "trials": report.trials,
            "tolerance": report.tolerance,
            "max_slack_by_step": {str(k): v for k, v in report.max_slack.items()},
            "violations": report.violations,
            "passed": report.passed,
        }
        write_text(_out_path(args, "contractivity.json"), json_report(payload))
        extra["contractivity_passed"] = report.passed
    return extra


def _cmd_drift(args: argparse.Namespace, config: RunConfig) -> dict:
    s0 = load_snapshot(args.t0, window_id="t0")
    s1 = load_snapshot(args.t1, window_id="t1")
    gcfg = _graph_config(config)
    g0 = build_graph(s0, gcfg)
    g1 = build_graph(s1, gcfg)
    report = drift_report(g0, g1, variant=config.drift_variant)
    write_text(_out_path(args, "drift.csv"), report.to_csv(report_preamble(config)))
    write_text(
        _out_path(args, "drift_summary.json"),
        report.summary_json(config_hash=config_hash(config), seed=config.seed),
    )
    return {
        "inputs": {"t0": args.t0, "t1": args.t1},
        "n_shared": len(report.shared_records()),
        "alignment_residual": report.alignment.residual,
    }


def _build_cli_operator(args: argparse.Namespace, config: RunConfig, graph):
    if args.op == "identity":
        return identity_op()
    if args.op == "translate":
        shift = np.zeros(graph.snapshot.dim)
        shift[0] = config.synth_sigma
        return translation_op(shift)
    if args.op == "pull_to_centroid":
        centroid = graph.snapshot.vectors.mean(axis=0)
        return pull_to_centroid_op(centroid, config.pull_rate)
    if args.op == "noisy_drift":
        return noisy_drift_op(
            config.noise_sigma, seed=substream_seed(config.seed, STREAM_ENSEMBLE)
        )
    if args.op == "halfspace_projection":
        normal = np.zeros(graph.snapshot.dim)
        normal[0] = 1.0
        offset = float(np.median(graph.snapshot.vectors[:, 0]))
        return halfspace_projection_op(normal, offset)
    if args.op == "snap_to_nearest":
        return snap_to_nearest_op(graph)
    if args.op == "external":
        if not args.op_command:
            raise ConfigError("--op external needs --op-command")
        return ExternalOperator(args.op_command.split(), dim=graph.snapshot.dim)
    raise ConfigError(f"unknown operator {args.op!r}")


def _cmd_dynamics(args: argparse.Namespace, config: RunConfig) -> dict:
    snapshot = load_snapshot(args.t0, window_id="t0")
    graph = build_graph(snapshot, _graph_config(config))
    profile = curvature_profile(graph, "edges", threads=config.threads)
    basins = derive_basins(graph, profile, tau=config.tau)
    op = _build_cli_operator(args, config, graph)
    rng = stream_rng(config.seed, STREAM_ENSEMBLE)
    n = len(graph)
    starts = rng.choice(n, size=config.n_traj, replace=config.n_traj > n)
    pre = report_preamble(config)
    head = "".join(f"# {p}\n" for p in pre)
    dim = snapshot.dim
    coord_cols = ",".join(f"c{d}" for d in range(dim))
    traj_lines = [head + f"traj,step,basin,{coord_cols}"]
    rows = []
    try:
        for t, start in enumerate(starts):
            x0 = graph.snapshot.vectors[int(start)]
            traj = label_trajectory(graph, basins, iterate(op, x0, config.horizon))
            for step, (point, basin) in enumerate(zip(traj.points, traj.basin_labels)):
                coords = ",".join(fmt_float(v) for v in point)
                traj_lines.append(f"{t},{step},{basin},{coords}")
            persistence = perturbation_persistence(
                op,
                x0,
                config.noise_sigma * np.ones(dim),
                config.horizon,
                config.noise_sigma,
            )
            rows.append(
                {
                    "traj": t,
                    "start_id": graph.ids[int(start)],
                    "switch_rate": switch_rate(traj),
                    "persistence_steps": persistence,
                    "route_bridge_mass": float(
                        np.mean(
                            [
                                bridge_mass(graph, profile, graph.ids[nearest_node(graph, p)])
                                for p in traj.points
                            ]
                        )
                    ),
                }
            )
    finally:
        if isinstance(op, ExternalOperator):
            op.close()
    write_text(_out_path(args, "trajectories.csv"), "\n".join(traj_lines) + "\n")
    payload = {
        "config_hash": config_hash(config),
        "seed": config.seed,
        "operator": op.name,
        "horizon": config.horizon,
        "trajectories": rows,
        "mean_switch_rate": float(np.mean([r["switch_rate"] for r in rows])),
    }
    write_text(_out_path(args, "dynamics.json"), json_report(payload))
    return {"inputs": {"t0": args.t0}, "operator": op.name, "n_traj": config.n_traj}


def _harness_csv(rows: list[tuple], config: RunConfig) -> str:
    chash = config_hash(config)
    head = "".join(f"# {p}\n" for p in report_preamble(config))
    lines = [head + "endpoint,estimate,ci_lo,ci_hi,p_value,n,config_hash"]
    for endpoint, estimate, ci, p_value, n in rows:
        ci_lo = "" if ci is None else fmt_float(ci[0])
        ci_hi = "" if ci is None else fmt_float(ci[1])
        p_txt = "" if p_value is None else fmt_float(p_value)
        lines.append(
            f"{endpoint},{fmt_float(estimate)},{ci_lo},{ci_hi},{p_txt},{n},{chash}"
        )
    return "\n".join(lines) + "\n"


def _evolution_from_config(config: RunConfig, dim: int) -> EvolutionSpec:
    shift = tuple([config.synth_sigma] + [0.0] * (dim - 1))
    displacement = {"basin1": shift} if config.synth_basins > 1 else {}
    return EvolutionSpec(
        displacement=displacement,
        rewire_prob={"bridge": config.rewire_bridge, "all": config.rewire_basin},
    )


def _cmd_harness(args: argparse.Namespace, config: RunConfig) -> dict:
    hcfg = _harness_config(config)
    gcfg = _graph_config(config)
    s0 = load_snapshot(args.t0, window_id="t0")
    g0 = build_graph(s0, gcfg)
    profile0 = curvature_profile(g0, "edges", threads=config.threads)

    if args.protocol in ("p1", "p2"):
        if not args.t1:
            raise ConfigError(f"{args.protocol} needs --t1")
        s1 = load_snapshot(args.t1, window_id="t1")
        g1 = build_graph(s1, gcfg)

    if args.protocol == "p1":
        covariate = read_covariate_tsv(args.covariates) if args.covariates else None
        report = p1_harness(g0, g1, profile0, hcfg, covariate=covariate)
        payload = {
            "config_hash": config_hash(config),
            "seed": config.seed,
            **_asdict_report(report),
        }
        rows = [
            ("p1_auc", report.auc, report.ci, report.p_value, report.n_eval),
            ("p1_delta_auc", report.delta_auc, report.delta_ci, None, report.n_eval),
        ]
    elif args.protocol == "p2":
        profile1 = curvature_profile(g1, "edges", threads=config.threads)
        report = p2_harness(g0, g1, profile0, profile1, hcfg)
        payload = {
            "config_hash": config_hash(config),
            "seed": config.seed,
            **_asdict_report(report),
        }
        rows = [("p2_auc", report.auc, None, report.p_value, report.n)]
    elif args.protocol == "p3":
        if not args.labels:
            raise ConfigError("p3 needs --labels from the synth command")
        with _open_text(args.labels) as fh:
            labels = parse_labels_csv(fh.read())
        labels = labels_with_centroids(labels, s0)
        evolution = _evolution_from_config(config, s0.dim)
        report = p3_harness(s0, labels, gcfg, evolution, hcfg)
        payload = {
            "config_hash": config_hash(config),
            "seed": config.seed,
            **_asdict_report(report),
        }
        rows = [
            (
                "p3_delta_kappa_stabilized",
                report.delta_kappa_stabilized,
                report.delta_kappa_stabilized_ci,
                None,
                report.arms["stabilized"].n_edges,
            ),
            (
                "p3_delta_kappa_destabilized",
                report.delta_kappa_destabilized,
                report.delta_kappa_destabilized_ci,
                None,
                report.arms["destabilized"].n_edges,
            ),
            (
                "p3_delta_drw_stabilized",
                report.delta_drw_stabilized,
                report.delta_drw_stabilized_ci,
                None,
                report.arms["stabilized"].n_nodes,
            ),
            (
                "p3_delta_drw_destabilized",
                report.delta_drw_destabilized,
                report.delta_drw_destabilized_ci,
                None,
                report.arms["destabilized"].n_nodes,
            ),
        ]
    elif args.protocol == "p4":
        basins = derive_basins(g0, profile0, tau=config.tau)
        report = p4_harness(
            g0, profile0, basins, hcfg, n_traj=config.n_traj, horizon=config.horizon
        )
        payload = {
            "config_hash": config_hash(config),
            "seed": config.seed,
            **_asdict_report(report),
        }
        rows = [
            ("p4_corr_switch", report.corr_switch, None, report.p_switch, report.n_traj),
            (
                "p4_corr_persistence",
                report.corr_persistence,
                None,
                report.p_persistence,
                report.n_traj,
            ),
        ]
    else:
        basins = derive_basins(g0, profile0, tau=config.tau)
        shift = np.zeros(s0.dim)
        shift[0] = config.synth_sigma
        op_f = translation_op(shift)
        centroid = s0.vectors.mean(axis=0)
        op_g1 = pull_to_centroid_op(centroid, config.pull_rate)
        normal = np.zeros(s0.dim)
        normal[0] = 1.0
        op_g2 = halfspace_projection_op(normal, float(np.median(s0.vectors[:, 0])))
        reports = [
            p5_harness(g0, profile0, op_f, op_g1, hcfg, basins=basins, label="pull|translate"),
            p5_harness(g0, profile0, op_f, op_g2, hcfg, basins=basins, label="project|translate"),
        ]
        payload = {
            "config_hash": config_hash(config),
            "seed": config.seed,
            "reports": [_asdict_report(r) for r in reports],
        }
        rows = []
        for rep in reports:
            tag = rep.operator_label.replace("|", "_")
            rows.extend(
                [
                    (f"p5_{tag}_drw_gap", rep.drw_gap_mean, rep.drw_gap_ci, None, rep.n),
                    (
                        f"p5_{tag}_switch_gap",
                        rep.switch_gap_mean,
                        rep.switch_gap_ci,
                        None,
                        rep.n,
                    ),
                    (f"p5_{tag}_ece_gap", rep.ece_gap, None, None, rep.n),
                    (f"p5_{tag}_assoc_rho", rep.assoc_rho, None, rep.assoc_p, rep.n),
                ]
            )
        report = None

    name = args.protocol
    write_text(_out_path(args, f"{name}.json"), json_report(payload))
    write_text(_out_path(args, f"{name}.csv"), _harness_csv(rows, config))
    return {"inputs": {"t0": args.t0, "t1": args.t1}, "protocol": name}


def _asdict_report(report) -> dict:
    out = asdict(report)
    for key, value in list(out.items()):
        if isinstance(value, tuple):
            out[key] = list(value)
    return out


def _cmd_sweep(args: argparse.Namespace, config: RunConfig) -> dict:
    s0 = load_snapshot(args.t0, window_id="t0")
    s1 = load_snapshot(args.t1, window_id="t1")
    try:
        ks = [int(v) for v in args.ks.split(",") if v]
        alphas = [float(v) for v in args.alphas.split(",") if v]
    except ValueError as exc:
        raise ConfigError(f"bad sweep grid: {exc}")
    weightings = [w.strip() for w in args.weightings.split(",") if w.strip()]
    endpoints = [e.strip() for e in args.endpoints.split(",") if e.strip()]
    cells = run_surface(
        s0,
        s1,
        ks,
        alphas,
        weightings,
        endpoints,
        _harness_config(config),
        metric=config.metric,
        mode=config.mode,
    )
    write_text(
        _out_path(args, "surface.csv"), surface_to_csv(cells, report_preamble(config))
    )
    n_errors = sum(1 for c in cells if c.error is not None)
    return {
        "inputs": {"t0": args.t0, "t1": args.t1},
        "n_cells": len(cells),
        "n_failed_cells": n_errors,
    }


def _cmd_synth(args: argparse.Namespace, config: RunConfig) -> dict:
    synth_cfg = SynthConfig(
        seed=substream_seed(config.seed, STREAM_SYNTH),
        dim=config.synth_dim,
        n_basins=config.synth_basins,
        basin_size=config.synth_size,
        basin_sigma=config.synth_sigma,
        separation=config.synth_separation,
        n_bridge=config.synth_bridge,
    )
    s0, labels = generate(synth_cfg, window_id="t0")
    evolution = _evolution_from_config(config, s0.dim)
    s1, labels = evolve(
        s0, labels, evolution, substream_seed(config.seed, "evolve"), window_id="t1"
    )
    write_snapshot(s0, _out_path(args, "t0.tsv"))
    write_snapshot(s1, _out_path(args, "t1.tsv"))
    write_text(_out_path(args, "labels.csv"), labels.to_csv(report_preamble(config)))
    return {
        "n_nodes": len(s0),
        "n_bridge": len(labels.bridge_nodes),
        "n_rewired": len(labels.rewired_nodes),
    }


def _open_text(path: str):
    try:
        return open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path!r}: {exc}")


def _read_measure_tsv(path: str) -> DiscreteMeasure:
    atoms: list[str] = []
    masses: list[float] = []
    with _open_text(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise InputError(f"{path}:{lineno}: expected atom<TAB>mass")
            atoms.append(parts[0])
            try:
                masses.append(float(parts[1]))
            except ValueError:
                raise InputError(f"{path}:{lineno}: bad mass {parts[1]!r}")
    if not atoms:
        raise InputError(f"{path}: empty measure")
    return DiscreteMeasure(tuple(atoms), np.array(masses))


def _read_cost_csv(path: str, mu: DiscreteMeasure, nu: DiscreteMeasure) -> CostMatrix:
    with _open_text(path) as fh:
        lines = [
            line.strip()
            for line in fh
            if line.strip() and not line.lstrip().startswith("#")
        ]
    if not lines:
        raise InputError(f"{path}: empty cost table")
    header = lines[0].split(",")
    if header[0] != "atom":
        raise InputError(f"{path}: first header cell must be 'atom'")
    cols = header[1:]
    table: dict[str, dict[str, float]] = {}
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != len(cols) + 1:
            raise InputError(f"{path}: ragged row {line!r}")
        try:
            table[parts[0]] = {c: float(v) for c, v in zip(cols, parts[1:])}
        except ValueError as exc:
            raise InputError(f"{path}: bad cost value: {exc}")
    try:
        values = np.array([[table[r][c] for c in nu.atoms] for r in mu.atoms])
    except KeyError as exc:
        raise InputError(f"{path}: cost table missing atom {exc}")
    return CostMatrix(mu.atoms, nu.atoms, values, metric_safe=False)


def _cmd_ot(args: argparse.Namespace, config: RunConfig) -> dict:
    mu = _read_measure_tsv(args.mu)
    nu = _read_measure_tsv(args.nu)
    cost = _read_cost_csv(args.cost, mu, nu)
    extra: dict = {"inputs": {"mu": args.mu, "nu": args.nu, "cost": args.cost}}
    if args.method == "exact":
        value, plan = w1_exact_plan(mu, nu, cost)
        print(f"value {fmt_float(value)}")
        for (a, b), mass in sorted(plan.items()):
            print(f"move {a} -> {b} : {fmt_float(mass)}")
        extra["value"] = value
        extra["method"] = "exact"
    else:
        result = w1_sinkhorn(
            mu,
            nu,
            cost,
            epsilon=config.sinkhorn_epsilon,
            max_iter=config.sinkhorn_max_iter,
            tol=config.sinkhorn_tol,
        )
        print(f"value {fmt_float(result.value)}")
        print(
            f"epsilon {fmt_float(result.epsilon)} iterations {result.iterations} "
            f"converged {str(result.converged).lower()}"
        )
        extra.update(
            {
                "method": "sinkhorn",
                "value": result.value,
                "sinkhorn": {
                    "epsilon": result.epsilon,
                    "max_iter": config.sinkhorn_max_iter,
                    "tol": result.tol,
                    "iterations": result.iterations,
                    "converged": result.converged,
                },
            }
        )
    return extra


_HANDLERS = {
    "graph": _cmd_graph,
    "curvature": _cmd_curvature,
    "drift": _cmd_drift,
    "dynamics": _cmd_dynamics,
    "harness": _cmd_harness,
    "sweep": _cmd_sweep,
    "synth": _cmd_synth,
    "ot": _cmd_ot,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = _effective_config(args)
        started = time.perf_counter()
        extra = _HANDLERS[args.command](args, config)
        wall = time.perf_counter() - started
        label = args.command if args.command != "harness" else f"harness_{args.protocol}"
        manifest = build_manifest(label, config, wall, extra)
        write_text(_out_path(args, f"manifest_{label}.json"), manifest)
        return 0
    except SubstrateError as exc:
        kind = type(exc).__name__
        msg = str(exc).replace('"', "'")
        print(f'error kind={kind} code={exc.exit_code} msg="{msg}"', file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # no traceback on the CLI surface
        msg = str(exc).replace('"', "'")
        print(f'error kind={type(exc).__name__} code=4 msg="{msg}"', file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
