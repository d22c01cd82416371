"""Drift, curvature, and transport analysis for embedding substrates.

A substrate is a windowed snapshot of points with ids, a metric, and
per-point local probability measures induced by a neighborhood graph.
The package measures how substrates deform across windows (four drift
channels), where they are about to tear (edge curvature, bridge mass,
basins), how operators move points through them (recursive dynamics,
order sensitivity), and whether those readings survive pre-registered
falsification protocols (the p1..p5 harnesses).
"""

from __future__ import annotations

from .core import (
    GraphConfig,
    Snapshot,
    SubstrateGraph,
    build_graph,
    diffuse,
    graph_to_csv,
    load_snapshot,
    pairwise_distances,
    parse_snapshot_text,
    write_snapshot,
)
from .curvature import (
    BasinPartition,
    ContractivityReport,
    CurvatureProfile,
    PairCurvature,
    basin_centroids,
    bridge_mass,
    curvature_profile,
    derive_basins,
    edge_curvature,
    node_report_rows,
    verify_contractivity,
)
from .drift import (
    Alignment,
    DriftRecord,
    DriftReport,
    align,
    drift_report,
    entropy_change,
    rewiring_drift,
    translational_drift,
    transport_shift,
)
from .dynamics import (
    ComposedOperator,
    ExternalOperator,
    Operator,
    Trajectory,
    affine_op,
    commutativity_gap,
    compose,
    halfspace_projection_op,
    identity_op,
    iterate,
    label_trajectory,
    nearest_node,
    noisy_drift_op,
    operator_from_spec,
    perturbation_persistence,
    pull_to_centroid_op,
    scale_op,
    snap_to_nearest_op,
    switch_rate,
    translation_op,
)
from .errors import (
    ConfigError,
    InputError,
    NumericalError,
    SubstrateError,
)
from .harness import (
    HarnessConfig,
    P1Report,
    P2Report,
    P3Report,
    P4Report,
    P5Report,
    SurfaceCell,
    p1_harness,
    p2_harness,
    p3_harness,
    p4_harness,
    p5_harness,
    run_surface,
    surface_to_csv,
)
from .reports import RunConfig, build_manifest, config_hash, parse_config_file
from .seeding import stream_rng, substream_seed
from .stats import (
    bootstrap_ci,
    calibration_error,
    fit_logistic,
    label_permutation_pvalue,
    permutation_pvalue,
    rank_auc,
    spearman,
    split_half,
    stratified_auc,
)
from .synthetic import (
    EvolutionSpec,
    InterventionSpec,
    PlantedLabels,
    SynthConfig,
    evolve,
    generate,
    intervene,
    labels_with_centroids,
    parse_labels_csv,
)
from .transport import (
    CostMatrix,
    DiscreteMeasure,
    SinkhornResult,
    js_divergence,
    shannon_entropy,
    w1_exact,
    w1_exact_plan,
    w1_sinkhorn,
)

__version__ = "0.1.0"

__all__ = [
    "Alignment",
    "BasinPartition",
    "ComposedOperator",
    "ConfigError",
    "ContractivityReport",
    "CostMatrix",
    "CurvatureProfile",
    "DiscreteMeasure",
    "DriftRecord",
    "DriftReport",
    "EvolutionSpec",
    "ExternalOperator",
    "GraphConfig",
    "HarnessConfig",
    "InputError",
    "InterventionSpec",
    "NumericalError",
    "Operator",
    "P1Report",
    "P2Report",
    "P3Report",
    "P4Report",
    "P5Report",
    "PairCurvature",
    "PlantedLabels",
    "RunConfig",
    "SinkhornResult",
    "Snapshot",
    "SubstrateError",
    "SubstrateGraph",
    "SurfaceCell",
    "SynthConfig",
    "Trajectory",
    "affine_op",
    "align",
    "basin_centroids",
    "bootstrap_ci",
    "bridge_mass",
    "build_graph",
    "build_manifest",
    "calibration_error",
    "commutativity_gap",
    "compose",
    "config_hash",
    "curvature_profile",
    "derive_basins",
    "diffuse",
    "drift_report",
    "edge_curvature",
    "entropy_change",
    "evolve",
    "fit_logistic",
    "generate",
    "graph_to_csv",
    "halfspace_projection_op",
    "identity_op",
    "intervene",
    "iterate",
    "js_divergence",
    "label_permutation_pvalue",
    "label_trajectory",
    "labels_with_centroids",
    "load_snapshot",
    "nearest_node",
    "node_report_rows",
    "noisy_drift_op",
    "operator_from_spec",
    "p1_harness",
    "p2_harness",
    "p3_harness",
    "p4_harness",
    "p5_harness",
    "pairwise_distances",
    "parse_config_file",
    "parse_labels_csv",
    "parse_snapshot_text",
    "permutation_pvalue",
    "perturbation_persistence",
    "pull_to_centroid_op",
    "rank_auc",
    "rewiring_drift",
    "run_surface",
    "scale_op",
    "shannon_entropy",
    "snap_to_nearest_op",
    "spearman",
    "split_half",
    "stratified_auc",
    "stream_rng",
    "substream_seed",
    "surface_to_csv",
    "switch_rate",
    "translation_op",
    "translational_drift",
    "transport_shift",
    "verify_contractivity",
    "w1_exact",
    "w1_exact_plan",
    "w1_sinkhorn",
    "write_snapshot",
]
