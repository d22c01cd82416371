"""Pre-registered evaluation protocols over substrate pairs.

Five falsifiable checks, each with its confound controls attached:

P1  bridge mass forecasts next-window rewiring beyond frequency strata
    and a degree baseline, scored out-of-sample on a hash split.
P2  curvature drops concentrate on the nodes that rewire hardest.
P3  stabilizing vs destabilizing interventions move the curvature
    distribution and subsequent rewiring in opposite directions.
P4  trajectories that traverse high bridge-mass territory switch basins
    more and shake off perturbations more slowly.
P5  operator order: commutativity gaps against order-sensitive outcome
    differences, with a strict order-neutrality null.

P3, P4 and P5 are confirmatory and refuse to run unless the config says
committed, mirroring a commit-before-looking workflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import GraphConfig, Snapshot, SubstrateGraph, build_graph
from .curvature import (
    BasinPartition,
    CurvatureProfile,
    bridge_mass,
    curvature_profile,
    derive_basins,
)
from .drift import DriftReport, drift_report
from .dynamics import (
    Operator,
    commutativity_gap,
    compose,
    iterate,
    label_trajectory,
    nearest_node,
    noisy_drift_op,
    perturbation_persistence,
    snap_to_nearest_op,
    switch_rate,
)
from .errors import (
    InputError,
    InsufficientNodesError,
    NoPositivesError,
    NotCommittedError,
    NumericalError,
    SingleClassError,
)
from .seeding import (
    STREAM_BOOT,
    STREAM_ENSEMBLE,
    STREAM_PERM,
    STREAM_PLACEBO,
    stream_rng,
    substream_seed,
)
from .stats import (
    apply_edges,
    bootstrap_ci,
    calibration_error,
    fit_logistic,
    frequency_match,
    label_permutation_pvalue,
    quantile_edges,
    rank_auc,
    spearman,
    split_half,
    stratified_auc,
)
from .synthetic import EvolutionSpec, InterventionSpec, PlantedLabels, evolve, intervene

ALPHA_LEVEL = 0.05
DEGENERATE_SPREAD = 1e-12


@dataclass(frozen=True)
class HarnessConfig:
    """Shared knobs for the protocol harnesses.

    q is the drift quantile defining 'high rewiring'. n_bins counts the
    frequency strata. committed gates the confirmatory harnesses.
    placebo shuffles outcome labels, for null-calibration checks.
    """

    q: float = 0.9
    n_bins: int = 5
    n_perm: int = 999
    n_boot: int = 1000
    seed: int = 0
    level: float = 0.95
    min_nodes_fail: int = 10
    min_nodes_warn: int = 50
    committed: bool = False
    placebo: bool = False

    def __post_init__(self):
        if not 0.0 < self.q <= 1.0:
            raise InputError(f"q must lie in (0, 1], got {self.q!r}")
        if self.n_bins < 1:
            raise InputError("n_bins must be positive")
        if not 0.0 < self.level < 1.0:
            raise InputError("level must lie in (0, 1)")
        if self.min_nodes_fail < 2:
            raise InputError("min_nodes_fail must be at least 2")


def _log_degree(value: int | None) -> float:
    return math.log1p(value if value else 0)


def _bridge_scores(
    graph: SubstrateGraph, profile: CurvatureProfile, ids: list[str]
) -> np.ndarray:
    return np.array([bridge_mass(graph, profile, i) for i in ids])


@dataclass(frozen=True)
class P1Report:
    endpoint: str
    n_total: int
    n_fit: int
    n_eval: int
    n_pos_eval: int
    threshold: float
    auc: float
    p_value: float
    ci: tuple[float, float]
    baseline_aucs: dict[str, float]
    delta_auc: float
    delta_ci: tuple[float, float]
    n_strata_dropped: int
    placebo: bool
    warnings: tuple[str, ...]

    @property
    def passed(self) -> bool:
        return self.auc > 0.5 and self.p_value < ALPHA_LEVEL


def p1_harness(
    g0: SubstrateGraph,
    g1: SubstrateGraph,
    profile: CurvatureProfile,
    config: HarnessConfig,
    drift: DriftReport | None = None,
    covariate: dict[str, float] | None = None,
    past_drift: dict[str, float] | None = None,
) -> P1Report:
    """Does bridge mass at t forecast rewiring over the next window?

    The drift quantile threshold and the frequency-stratum edges are
    fitted on one hash-half of the shared nodes and applied to the
    other, so the reported AUC is out-of-sample. The permutation test
    shuffles labels within strata; the claim is directional (AUC above
    one half), so the test is one-sided.
    """
    warnings: list[str] = []
    if drift is None:
        drift = drift_report(g0, g1)
    shared = drift.shared_records()
    ids = [r.node_id for r in shared]
    n = len(ids)
    if n < config.min_nodes_fail:
        raise InsufficientNodesError(
            f"{n} shared nodes, need at least {config.min_nodes_fail}"
        )
    if n < config.min_nodes_warn:
        warnings.append(f"small sample: {n} shared nodes")
    d_rw = np.array([r.d_rw for r in shared])
    scores = _bridge_scores(g0, profile, ids)
    if covariate is not None:
        missing = [i for i in ids if i not in covariate]
        if missing:
            raise InputError(
                f"covariate table missing {len(missing)} ids, first {missing[0]!r}"
            )
        cov = np.array([covariate[i] for i in ids], dtype=float)
    else:
        cov = np.array([_log_degree(r.deg_t0) for r in shared])

    fit_idx, eval_idx = split_half(ids)
    if len(fit_idx) < 2 or len(eval_idx) < 2:
        raise InsufficientNodesError("hash split left a half with under 2 nodes")
    threshold = float(np.quantile(d_rw[fit_idx], config.q))
    labels_eval = d_rw[eval_idx] > threshold
    if config.placebo:
        rng = stream_rng(config.seed, STREAM_PLACEBO)
        labels_eval = labels_eval[rng.permutation(labels_eval.size)]
    if not labels_eval.any():
        raise NoPositivesError(
            f"no held-out node exceeds the q={config.q} drift threshold"
        )
    if labels_eval.all():
        raise SingleClassError("every held-out node exceeds the drift threshold")

    edges = quantile_edges(cov[fit_idx], config.n_bins)
    strata_eval = apply_edges(cov[eval_idx], edges)
    scores_eval = scores[eval_idx]

    result = stratified_auc(scores_eval, labels_eval, strata_eval)
    p_value, _ = label_permutation_pvalue(
        lambda sc, lb: stratified_auc(sc, lb, strata_eval).auc,
        scores_eval,
        labels_eval,
        config.n_perm,
        substream_seed(config.seed, STREAM_PERM),
        strata=strata_eval,
    )
    ci = bootstrap_ci(
        lambda sc, lb, st: stratified_auc(sc, lb, st).auc,
        [scores_eval, labels_eval, strata_eval],
        config.n_boot,
        substream_seed(config.seed, STREAM_BOOT),
        level=config.level,
    )

    baselines: dict[str, float] = {}
    baseline_vectors: dict[str, np.ndarray] = {"degree": cov[eval_idx]}
    if past_drift is not None:
        held = [i for i in np.array(ids)[eval_idx]]
        if all(i in past_drift for i in held):
            baseline_vectors["past_drift"] = np.array([past_drift[i] for i in held])
        else:
            warnings.append("past_drift covariate incomplete; baseline skipped")
    for name, vec in baseline_vectors.items():
        baselines[name] = stratified_auc(vec, labels_eval, strata_eval).auc
    best = max(baselines.values())
    delta = result.auc - best

    def _delta_stat(sc, lb, st, *bases):
        main = stratified_auc(sc, lb, st).auc
        rival = max(stratified_auc(b, lb, st).auc for b in bases)
        return main - rival

    delta_ci = bootstrap_ci(
        _delta_stat,
        [scores_eval, labels_eval, strata_eval, *baseline_vectors.values()],
        config.n_boot,
        substream_seed(config.seed, STREAM_BOOT),
        level=config.level,
    )
    return P1Report(
        endpoint="p1_rewiring_forecast",
        n_total=n,
        n_fit=len(fit_idx),
        n_eval=len(eval_idx),
        n_pos_eval=int(labels_eval.sum()),
        threshold=threshold,
        auc=result.auc,
        p_value=p_value,
        ci=ci,
        baseline_aucs=baselines,
        delta_auc=delta,
        delta_ci=delta_ci,
        n_strata_dropped=result.n_strata_dropped,
        placebo=config.placebo,
        warnings=tuple(warnings),
    )


@dataclass(frozen=True)
class P2Report:
    endpoint: str
    n: int
    n_pos: int
    auc: float
    p_value: float
    mean_delta_pos: float
    mean_delta_rest: float
    vacuous: bool
    reason: str | None
    placebo: bool = False

    @property
    def passed(self) -> bool:
        return not self.vacuous and self.auc > 0.5 and self.p_value < ALPHA_LEVEL


def p2_harness(
    g0: SubstrateGraph,
    g1: SubstrateGraph,
    profile0: CurvatureProfile,
    profile1: CurvatureProfile,
    config: HarnessConfig,
    drift: DriftReport | None = None,
) -> P2Report:
    """Do curvature drops land on the heaviest rewirers?

    Scores each shared node by the decrease in its minimum incident
    curvature; positives are nodes above the q drift quantile. Reported
    AUC is in-sample (this is a concentration diagnostic, not a
    forecast), with a within-sample label permutation p.
    """
    if drift is None:
        drift = drift_report(g0, g1)
    deltas: list[float] = []
    d_rw: list[float] = []
    for r in drift.shared_records():
        k0 = profile0.min_incident_kappa(r.node_id)
        k1 = profile1.min_incident_kappa(r.node_id)
        if k0 is None or k1 is None:
            continue
        deltas.append(k1 - k0)
        d_rw.append(r.d_rw)
    n = len(deltas)
    if n < config.min_nodes_fail:
        raise InsufficientNodesError(f"only {n} nodes carry curvature in both windows")
    deltas_arr = np.array(deltas)
    d_rw_arr = np.array(d_rw)
    threshold = float(np.quantile(d_rw_arr, config.q))
    labels = d_rw_arr > threshold
    if config.placebo:
        rng = stream_rng(config.seed, STREAM_PLACEBO)
        labels = labels[rng.permutation(labels.size)]
    if not labels.any() or labels.all():
        return P2Report(
            endpoint="p2_boundary_concentration",
            n=n,
            n_pos=int(labels.sum()),
            auc=float("nan"),
            p_value=float("nan"),
            mean_delta_pos=float("nan"),
            mean_delta_rest=float("nan"),
            vacuous=True,
            reason="drift threshold produced a single class",
            placebo=config.placebo,
        )
    scores = -deltas_arr
    auc = rank_auc(scores, labels)
    p_value, _ = label_permutation_pvalue(
        rank_auc,
        scores,
        labels,
        config.n_perm,
        substream_seed(config.seed, STREAM_PERM),
    )
    return P2Report(
        endpoint="p2_boundary_concentration",
        n=n,
        n_pos=int(labels.sum()),
        auc=auc,
        p_value=p_value,
        mean_delta_pos=float(deltas_arr[labels].mean()),
        mean_delta_rest=float(deltas_arr[~labels].mean()),
        vacuous=False,
        reason=None,
        placebo=config.placebo,
    )


@dataclass(frozen=True)
class ArmSummary:
    mean_kappa: float
    n_edges: int
    mean_drw: float
    n_nodes: int


@dataclass(frozen=True)
class P3Report:
    endpoint: str
    arms: dict[str, ArmSummary]
    delta_kappa_stabilized: float
    delta_kappa_stabilized_ci: tuple[float, float]
    delta_kappa_destabilized: float
    delta_kappa_destabilized_ci: tuple[float, float]
    delta_drw_stabilized: float
    delta_drw_stabilized_ci: tuple[float, float]
    delta_drw_destabilized: float
    delta_drw_destabilized_ci: tuple[float, float]

    @property
    def directions_hold(self) -> bool:
        return (
            self.delta_kappa_stabilized > 0.0
            and self.delta_kappa_destabilized < 0.0
            and self.delta_drw_stabilized < 0.0
            and self.delta_drw_destabilized > 0.0
        )


def p3_harness(
    snapshot: Snapshot,
    labels: PlantedLabels,
    graph_config: GraphConfig,
    evolution: EvolutionSpec,
    config: HarnessConfig,
    stabilize: InterventionSpec | None = None,
    destabilize: InterventionSpec | None = None,
) -> P3Report:
    """Intervention contrast: pull-to-centroid vs noise injection.

    All three arms (base, stabilized, destabilized) evolve under the
    same spec and seed, so the only difference is the intervention
    itself. Curvature deltas are unpaired means over edges; rewiring
    deltas are paired per node.
    """
    if not config.committed:
        raise NotCommittedError("p3 is confirmatory; set committed in the config")
    iv_seed = substream_seed(config.seed, "intervene")
    if stabilize is None:
        stabilize = InterventionSpec(kind="pull_to_centroid", rate=0.5)
    if destabilize is None:
        destabilize = InterventionSpec(kind="noise", sigma=0.5, seed=iv_seed)
    elif destabilize.kind == "noise" and destabilize.seed == 0:
        destabilize = replace(destabilize, seed=iv_seed)
    ev_seed = substream_seed(config.seed, "evolve")

    arm_snaps = {
        "base": snapshot,
        "stabilized": intervene(snapshot, labels, stabilize, window_id="t0_stab"),
        "destabilized": intervene(snapshot, labels, destabilize, window_id="t0_destab"),
    }
    kappas: dict[str, np.ndarray] = {}
    drw: dict[str, dict[str, float]] = {}
    arms: dict[str, ArmSummary] = {}
    for name, snap in arm_snaps.items():
        g = build_graph(snap, graph_config)
        prof = curvature_profile(g, "edges")
        t1, _ = evolve(snap, labels, evolution, ev_seed, window_id=f"{name}_t1")
        g1 = build_graph(t1, graph_config)
        rep = drift_report(g, g1)
        kappas[name] = np.array([p.kappa for p in prof.pairs])
        drw[name] = rep.channel("d_rw")
        arms[name] = ArmSummary(
            mean_kappa=float(kappas[name].mean()) if kappas[name].size else float("nan"),
            n_edges=int(kappas[name].size),
            mean_drw=float(np.mean(list(drw[name].values()))),
            n_nodes=len(drw[name]),
        )

    rng = stream_rng(config.seed, STREAM_BOOT)

    def _unpaired_delta_ci(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
        # CI for mean(a) - mean(b) from independent resamples
        diffs = [
            float(
                a[rng.integers(0, a.size, a.size)].mean()
                - b[rng.integers(0, b.size, b.size)].mean()
            )
            for _ in range(config.n_boot)
        ]
        est = float(a.mean() - b.mean())
        lo = float(np.quantile(diffs, (1 - config.level) / 2))
        hi = float(np.quantile(diffs, 1 - (1 - config.level) / 2))
        return min(lo, est), max(hi, est)

    def _paired_delta(name: str) -> tuple[float, tuple[float, float]]:
        common = sorted(set(drw[name]) & set(drw["base"]))
        diff = np.array([drw[name][i] - drw["base"][i] for i in common])
        est = float(diff.mean())
        ci = bootstrap_ci(
            lambda d: float(d.mean()),
            [diff],
            config.n_boot,
            substream_seed(config.seed, f"{STREAM_BOOT}:{name}"),
            level=config.level,
        )
        return est, ci

    dk_stab = float(kappas["stabilized"].mean() - kappas["base"].mean())
    dk_stab_ci = _unpaired_delta_ci(kappas["stabilized"], kappas["base"])
    dk_dest = float(kappas["destabilized"].mean() - kappas["base"].mean())
    dk_dest_ci = _unpaired_delta_ci(kappas["destabilized"], kappas["base"])
    dd_stab, dd_stab_ci = _paired_delta("stabilized")
    dd_dest, dd_dest_ci = _paired_delta("destabilized")
    return P3Report(
        endpoint="p3_intervention_contrast",
        arms=arms,
        delta_kappa_stabilized=dk_stab,
        delta_kappa_stabilized_ci=dk_stab_ci,
        delta_kappa_destabilized=dk_dest,
        delta_kappa_destabilized_ci=dk_dest_ci,
        delta_drw_stabilized=dd_stab,
        delta_drw_stabilized_ci=dd_stab_ci,
        delta_drw_destabilized=dd_dest,
        delta_drw_destabilized_ci=dd_dest_ci,
    )


@dataclass(frozen=True)
class P4Report:
    endpoint: str
    n_traj: int
    horizon: int
    sigma: float
    mean_switch_rate: float
    corr_switch: float
    p_switch: float
    corr_persistence: float
    p_persistence: float
    degenerate: bool

    @property
    def passed(self) -> bool:
        return (
            not self.degenerate
            and self.corr_switch > 0.0
            and self.p_switch < ALPHA_LEVEL
        )


def p4_harness(
    graph: SubstrateGraph,
    profile: CurvatureProfile,
    basins: BasinPartition,
    config: HarnessConfig,
    n_traj: int = 40,
    horizon: int = 30,
    sigma: float | None = None,
    kick: float | None = None,
    epsilon: float | None = None,
) -> P4Report:
    """Route exposure to bridge mass vs basin switching and persistence.

    Each trajectory is a seeded random walk on the substrate itself: a
    Gaussian kick followed by a snap to the nearest node, so the walk
    contracts inside dense regions and can fall either way off a bridge.
    A trajectory is scored by the mean bridge mass of the nodes it
    visits. Positive rank correlation with the basin switch rate (and
    with perturbation persistence) supports the transit claim.
    """
    if not config.committed:
        raise NotCommittedError("p4 is confirmatory; set committed in the config")
    if n_traj < 3:
        raise InputError("need at least 3 trajectories")
    pooled = np.concatenate(
        [
            graph.distances[i, nbrs]
            for i, nbrs in enumerate(graph.neighbor_idx)
            if nbrs.size
        ]
        or [np.array([1.0])]
    )
    scale = float(np.median(pooled))
    if scale <= 0.0:
        scale = 1.0
    if sigma is None:
        sigma = 2.0 * scale
    if kick is None:
        kick = 6.0 * scale
    if epsilon is None:
        epsilon = 2.0 * scale

    bmass = {i: bridge_mass(graph, profile, i) for i in graph.ids}
    rng = stream_rng(config.seed, STREAM_ENSEMBLE)
    n = len(graph)
    starts = rng.choice(n, size=n_traj, replace=n_traj > n)

    snap = snap_to_nearest_op(graph)
    route_scores: list[float] = []
    switch_rates: list[float] = []
    persistences: list[float] = []
    for t, start in enumerate(starts):
        kick_op = noisy_drift_op(sigma, seed=substream_seed(config.seed, f"traj{t}"))
        op = compose(snap, kick_op)
        x0 = graph.snapshot.vectors[int(start)]
        traj = iterate(op, x0, horizon)
        labeled = label_trajectory(graph, basins, traj)
        visited = [graph.ids[nearest_node(graph, p)] for p in traj.points]
        route_scores.append(float(np.mean([bmass[v] for v in visited])))
        switch_rates.append(switch_rate(labeled))
        kick_rng = np.random.default_rng(substream_seed(config.seed, f"kick{t}"))
        direction = kick_rng.standard_normal(graph.snapshot.dim)
        direction = direction / np.linalg.norm(direction)
        steps = perturbation_persistence(op, x0, kick * direction, horizon, epsilon)
        persistences.append(steps / (horizon + 1))

    route = np.array(route_scores)
    switches = np.array(switch_rates)
    persist = np.array(persistences)
    corr_switch = spearman(route, switches)
    corr_persist = spearman(route, persist)
    degenerate = math.isnan(corr_switch)

    def _perm_p(target: np.ndarray, corr_obs: float, tag: str) -> float:
        if math.isnan(corr_obs):
            return float("nan")
        rng_p = stream_rng(config.seed, f"{STREAM_PERM}:{tag}")
        hits = 0
        for _ in range(config.n_perm):
            rho = spearman(route[rng_p.permutation(route.size)], target)
            if not math.isnan(rho) and rho >= corr_obs:
                hits += 1
        return (1 + hits) / (config.n_perm + 1)

    return P4Report(
        endpoint="p4_transit_exposure",
        n_traj=n_traj,
        horizon=horizon,
        sigma=float(sigma),
        mean_switch_rate=float(switches.mean()),
        corr_switch=corr_switch,
        p_switch=_perm_p(switches, corr_switch, "switch"),
        corr_persistence=corr_persist,
        p_persistence=_perm_p(persist, corr_persist, "persist"),
        degenerate=degenerate,
    )


@dataclass(frozen=True)
class P5Report:
    endpoint: str
    operator_label: str
    n: int
    mean_delta_comm: float
    max_delta_comm: float
    drw_gap_mean: float
    drw_gap_ci: tuple[float, float]
    switch_gap_mean: float
    switch_gap_ci: tuple[float, float]
    ece_forward: float
    ece_reversed: float
    ece_gap: float
    assoc_rho: float
    assoc_p: float
    degenerate_gap: bool
    null_retained: bool
    warnings: tuple[str, ...]


def p5_harness(
    g0: SubstrateGraph,
    profile0: CurvatureProfile,
    op_f: Operator,
    op_g: Operator,
    config: HarnessConfig,
    basins: BasinPartition | None = None,
    horizon: int = 5,
    label: str | None = None,
) -> P5Report:
    """Order sensitivity of an intervention against the evolution map.

    Compares applying g-after-f with f-after-g to every node: next-window
    rewiring gaps, recursive basin-switch gaps, and held-out calibration
    of a rewiring-risk forecast under each order. The strict null says
    the per-node commutativity gap carries no information about those
    differences once frequency strata are controlled; it is retained
    when the gap is constant (nothing to correlate) or the stratified
    rank association clears the 0.05 bar.
    """
    if not config.committed:
        raise NotCommittedError("p5 is confirmatory; set committed in the config")
    warnings: list[str] = []
    snap = g0.snapshot
    ids = list(snap.ids)
    n = len(ids)
    if n < config.min_nodes_fail:
        raise InsufficientNodesError(f"{n} nodes, need {config.min_nodes_fail}")
    if basins is None:
        basins = derive_basins(g0, profile0, tau=0.0)

    gf = compose(op_g, op_f)
    fg = compose(op_f, op_g)
    pts_gf = np.stack([gf.apply(v, 0) for v in snap.vectors])
    pts_fg = np.stack([fg.apply(v, 0) for v in snap.vectors])
    snap_gf = Snapshot(f"{snap.window_id}_gf", snap.ids, pts_gf)
    snap_fg = Snapshot(f"{snap.window_id}_fg", snap.ids, pts_fg)
    g_gf = build_graph(snap_gf, g0.config)
    g_fg = build_graph(snap_fg, g0.config)
    drift_gf = drift_report(g0, g_gf).channel("d_rw")
    drift_fg = drift_report(g0, g_fg).channel("d_rw")
    drw_gf = np.array([drift_gf[i] for i in ids])
    drw_fg = np.array([drift_fg[i] for i in ids])
    drw_gap = np.abs(drw_gf - drw_fg)
    drw_gap_ci = bootstrap_ci(
        lambda d: float(d.mean()),
        [drw_gap],
        config.n_boot,
        substream_seed(config.seed, f"{STREAM_BOOT}:drw"),
        level=config.level,
    )

    switch_gap = np.empty(n)
    for i, v in enumerate(snap.vectors):
        t_gf = label_trajectory(g0, basins, iterate(gf, v, horizon))
        t_fg = label_trajectory(g0, basins, iterate(fg, v, horizon))
        switch_gap[i] = abs(switch_rate(t_gf) - switch_rate(t_fg))
    switch_gap_ci = bootstrap_ci(
        lambda d: float(d.mean()),
        [switch_gap],
        config.n_boot,
        substream_seed(config.seed, f"{STREAM_BOOT}:switch"),
        level=config.level,
    )

    log_deg = np.array([_log_degree(g0.degree(i)) for i in ids])
    bscores = _bridge_scores(g0, profile0, ids)
    features = np.column_stack([log_deg, bscores])
    fit_idx, eval_idx = split_half(ids)

    def _ece(drw_vec: np.ndarray) -> float:
        thr = float(np.quantile(drw_vec[fit_idx], config.q))
        y_fit = drw_vec[fit_idx] > thr
        y_eval = drw_vec[eval_idx] > thr
        if y_fit.all() or not y_fit.any() or y_eval.all() or not y_eval.any():
            raise SingleClassError("degenerate calibration split")
        model = fit_logistic(features[fit_idx], y_fit)
        return calibration_error(model.predict_proba(features[eval_idx]), y_eval, config.n_bins)

    try:
        ece_gf = _ece(drw_gf)
        ece_fg = _ece(drw_fg)
        ece_gap = abs(ece_gf - ece_fg)
    except (SingleClassError, NumericalError) as exc:
        warnings.append(f"calibration endpoint skipped: {exc}")
        ece_gf = ece_fg = ece_gap = float("nan")

    delta_comm = np.array([commutativity_gap(op_g, op_f, v) for v in snap.vectors])
    degenerate_gap = float(np.ptp(delta_comm)) < DEGENERATE_SPREAD
    if degenerate_gap:
        assoc_rho = float("nan")
        assoc_p = float("nan")
        null_retained = True
    else:
        strata = frequency_match(log_deg, config.n_bins)

        def _weighted_rho(gaps: np.ndarray, outcome: np.ndarray) -> float:
            total = 0.0
            weight = 0
            for s in np.unique(strata):
                mask = strata == s
                if mask.sum() < 3:
                    continue
                rho = spearman(gaps[mask], outcome[mask])
                if math.isnan(rho):
                    continue
                total += rho * int(mask.sum())
                weight += int(mask.sum())
            if weight == 0:
                raise NumericalError("no stratum supports a rank correlation")
            return total / weight

        try:
            assoc_rho = _weighted_rho(delta_comm, drw_gap)
            rng_p = stream_rng(config.seed, f"{STREAM_PERM}:order")
            hits = 0
            for _ in range(config.n_perm):
                shuffled = delta_comm.copy()
                for s in np.unique(strata):
                    mask = np.flatnonzero(strata == s)
                    shuffled[mask] = delta_comm[mask][rng_p.permutation(mask.size)]
                try:
                    rho = _weighted_rho(shuffled, drw_gap)
                except NumericalError:
                    continue
                if rho >= assoc_rho:
                    hits += 1
            assoc_p = (1 + hits) / (config.n_perm + 1)
            null_retained = assoc_p >= ALPHA_LEVEL
        except NumericalError as exc:
            warnings.append(f"association skipped: {exc}")
            assoc_rho = float("nan")
            assoc_p = float("nan")
            null_retained = True

    return P5Report(
        endpoint="p5_order_sensitivity",
        operator_label=label or f"{op_g.name}|{op_f.name}",
        n=n,
        mean_delta_comm=float(delta_comm.mean()),
        max_delta_comm=float(delta_comm.max()),
        drw_gap_mean=float(drw_gap.mean()),
        drw_gap_ci=drw_gap_ci,
        switch_gap_mean=float(switch_gap.mean()),
        switch_gap_ci=switch_gap_ci,
        ece_forward=ece_gf,
        ece_reversed=ece_fg,
        ece_gap=ece_gap,
        assoc_rho=assoc_rho,
        assoc_p=assoc_p,
        degenerate_gap=degenerate_gap,
        null_retained=null_retained,
        warnings=tuple(warnings),
    )


SURFACE_ENDPOINTS = (
    "kappa0_edge",
    "kappa_mean",
    "bridge_mass_mean",
    "drw_mean",
    "drw_q90",
    "p1_auc",
    "p1_p",
)


@dataclass(frozen=True)
class SurfaceCell:
    k: int
    alpha: float
    weighting: str
    values: dict[str, float]
    error: str | None = None


def run_surface(
    s0: Snapshot,
    s1: Snapshot,
    ks: list[int],
    alphas: list[float],
    weightings: list[str],
    endpoints: list[str],
    config: HarnessConfig,
    metric: str = "euclidean",
    mode: str = "knn",
) -> list[SurfaceCell]:
    """Endpoint values over the (k, alpha, weighting) grid.

    Cells are visited in deterministic grid order; a cell whose
    construction or harness fails is recorded with the error message
    instead of aborting the sweep.
    """
    for e in endpoints:
        if e not in SURFACE_ENDPOINTS:
            raise InputError(f"unknown endpoint {e!r}; expected one of {SURFACE_ENDPOINTS}")
    cells: list[SurfaceCell] = []
    for k in ks:
        for alpha in alphas:
            for weighting in weightings:
                try:
                    cells.append(
                        _surface_cell(
                            s0, s1, k, alpha, weighting, endpoints, config, metric, mode
                        )
                    )
                except Exception as exc:  # cell-level fault isolation
                    cells.append(
                        SurfaceCell(
                            k=k,
                            alpha=alpha,
                            weighting=weighting,
                            values={},
                            error=f"{type(exc).__name__}: {exc}",
                        )
                    )
    return cells


def _surface_cell(
    s0: Snapshot,
    s1: Snapshot,
    k: int,
    alpha: float,
    weighting: str,
    endpoints: list[str],
    config: HarnessConfig,
    metric: str,
    mode: str,
) -> SurfaceCell:
    gcfg = GraphConfig(k=k, mode=mode, metric=metric, weighting=weighting, alpha=alpha)
    g0 = build_graph(s0, gcfg)
    g1 = build_graph(s1, gcfg)
    profile = curvature_profile(g0, "edges")
    drift = drift_report(g0, g1)
    values: dict[str, float] = {}
    drw = np.array(sorted(drift.channel("d_rw").values()))
    for e in endpoints:
        if e == "kappa0_edge":
            values[e] = profile.kappa0_edge if profile.kappa0_edge is not None else float("nan")
        elif e == "kappa_mean":
            ks_ = [p.kappa for p in profile.pairs if p.is_edge]
            values[e] = float(np.mean(ks_)) if ks_ else float("nan")
        elif e == "bridge_mass_mean":
            values[e] = float(
                np.mean([bridge_mass(g0, profile, i) for i in g0.ids])
            )
        elif e == "drw_mean":
            values[e] = float(drw.mean()) if drw.size else float("nan")
        elif e == "drw_q90":
            values[e] = float(np.quantile(drw, 0.9)) if drw.size else float("nan")
        elif e in ("p1_auc", "p1_p"):
            rep = p1_harness(g0, g1, profile, config, drift=drift)
            values["p1_auc"] = rep.auc
            values["p1_p"] = rep.p_value
    return SurfaceCell(k=k, alpha=alpha, weighting=weighting, values=values)


def surface_to_csv(cells: list[SurfaceCell], preamble: list[str] | None = None) -> str:
    head = "".join(f"# {p}\n" for p in (preamble or []))
    lines = [head + "k,alpha,weighting,endpoint,value"]
    for c in cells:
        if c.error is not None:
            msg = c.error.replace(",", ";").replace("\n", " ")
            lines.append(f"{c.k},{repr(float(c.alpha))},{c.weighting},error,{msg}")
            continue
        for name in sorted(c.values):
            lines.append(
                f"{c.k},{repr(float(c.alpha))},{c.weighting},{name},{repr(float(c.values[name]))}"
            )
    return "\n".join(lines) + "\n"
