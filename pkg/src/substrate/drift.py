"""Window-to-window drift, split into four decoupled channels.

d_tr   residual displacement after rigid alignment of the two windows
d_rw   Jensen-Shannon divergence between the node's local measures
delta_h  absolute change in local-measure entropy
delta_w  Wasserstein-1 between the local measures over aligned coordinates

Alignment is an orthogonal Procrustes fit on shared anchor nodes, so a
pure rotation or translation of the whole window is invisible to d_tr
while genuine neighborhood churn still registers on the other channels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from math import isnan

import numpy as np
from scipy.spatial.distance import cdist

from .core import Snapshot, SubstrateGraph
from .errors import DisjointSnapshotsError, InputError, UnknownNodeError
from .transport import CostMatrix, js_divergence, shannon_entropy, w1_exact

TRANSLATION_VARIANTS = ("euclidean", "cosine")
QUANTS = (0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0)


@dataclass(frozen=True)
class Alignment:
    """Orthogonal map taking target-window coordinates into the source frame."""

    anchor_ids: tuple[str, ...]
    rotation: np.ndarray
    center_source: np.ndarray | None
    center_target: np.ndarray | None
    residual: float

    def apply(self, vectors: np.ndarray) -> np.ndarray:
        v = np.atleast_2d(np.asarray(vectors, dtype=float))
        if self.center_target is not None:
            v = v - self.center_target
        mapped = v @ self.rotation
        if self.center_source is not None:
            mapped = mapped + self.center_source
        if np.asarray(vectors).ndim == 1:
            return mapped[0]
        return mapped


def align(
    source: Snapshot,
    target: Snapshot,
    anchors: tuple[str, ...] | None = None,
    center: bool = True,
) -> Alignment:
    """Fit the orthogonal Procrustes map from target into source.

    Anchors default to all shared ids. At least dim anchors are
    required. residual is the root-mean-square per-anchor misfit after
    mapping; identical windows give the identity map at residual zero.
    """
    if anchors is None:
        anchors = tuple(sorted(set(source.ids) & set(target.ids)))
    if not anchors:
        raise DisjointSnapshotsError("no shared anchor ids between windows")
    for a in anchors:
        if a not in source or a not in target:
            raise UnknownNodeError(f"anchor {a!r} missing from a window")
    dim = source.dim
    if target.dim != dim:
        raise InputError(f"window dims differ: {dim} vs {target.dim}")
    if len(anchors) < dim:
        raise InputError(
            f"need at least {dim} anchors for a {dim}-d alignment, got {len(anchors)}"
        )
    src = np.stack([source.vector(a) for a in anchors])
    tgt = np.stack([target.vector(a) for a in anchors])
    if center:
        c_src = src.mean(axis=0)
        c_tgt = tgt.mean(axis=0)
        src_c = src - c_src
        tgt_c = tgt - c_tgt
    else:
        c_src = c_tgt = None
        src_c, tgt_c = src, tgt
    u, _, vt = np.linalg.svd(tgt_c.T @ src_c)
    rotation = u @ vt
    mapped = tgt_c @ rotation
    residual = float(np.sqrt(((mapped - src_c) ** 2).sum(axis=1).mean()))
    return Alignment(
        anchor_ids=tuple(anchors),
        rotation=rotation,
        center_source=c_src,
        center_target=c_tgt,
        residual=residual,
    )


def translational_drift(
    source: Snapshot,
    target: Snapshot,
    alignment: Alignment,
    node_id: str,
    variant: str = "euclidean",
) -> float:
    """Displacement of one node after mapping target into the source frame."""
    if variant not in TRANSLATION_VARIANTS:
        raise InputError(f"variant must be one of {TRANSLATION_VARIANTS}")
    a = source.vector(node_id)
    b = alignment.apply(target.vector(node_id))
    if variant == "euclidean":
        return float(np.linalg.norm(b - a))
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise InputError(f"zero vector at {node_id!r} under cosine drift")
    return float(min(max(1.0 - float(a @ b) / (na * nb), 0.0), 2.0))


def rewiring_drift(g0: SubstrateGraph, g1: SubstrateGraph, node_id: str) -> float:
    """JS divergence, in bits, between the node's local measures."""
    return js_divergence(g0.local_measure(node_id), g1.local_measure(node_id))


def entropy_change(g0: SubstrateGraph, g1: SubstrateGraph, node_id: str) -> float:
    h0 = shannon_entropy(g0.local_measure(node_id))
    h1 = shannon_entropy(g1.local_measure(node_id))
    return abs(h1 - h0)


def transport_shift(
    g0: SubstrateGraph,
    g1: SubstrateGraph,
    alignment: Alignment,
    node_id: str,
) -> float:
    """W1 between the two local measures on aligned ground coordinates.

    Every atom is placed in the source frame: source coordinates where
    available, aligned target coordinates otherwise. Ground cost follows
    the source graph's metric.
    """
    mu = g0.local_measure(node_id).canonical()
    nu = g1.local_measure(node_id).canonical()
    atoms = list(mu.atoms)
    seen = set(atoms)
    atoms.extend(a for a in nu.atoms if a not in seen)
    coords = np.stack([_frame_coordinate(g0.snapshot, g1.snapshot, alignment, a) for a in atoms])
    pos = {a: i for i, a in enumerate(atoms)}
    metric = g0.config.metric
    if metric == "euclidean":
        table = cdist(coords, coords, metric="euclidean")
        metric_safe = True
    else:
        norms = np.linalg.norm(coords, axis=1)
        if np.any(norms == 0.0):
            raise InputError("zero vector in transport-shift support under cosine")
        unit = coords / norms[:, None]
        table = np.clip(1.0 - unit @ unit.T, 0.0, None)
        np.fill_diagonal(table, 0.0)
        table = 0.5 * (table + table.T)
        metric_safe = False
    rows = [pos[a] for a in mu.atoms]
    cols = [pos[a] for a in nu.atoms]
    cost = CostMatrix(
        row_atoms=mu.atoms,
        col_atoms=nu.atoms,
        values=table[np.ix_(rows, cols)],
        metric_safe=metric_safe,
    )
    return w1_exact(mu, nu, cost)


def _frame_coordinate(
    s0: Snapshot, s1: Snapshot, alignment: Alignment, atom: str
) -> np.ndarray:
    if atom in s0:
        return s0.vector(atom)
    return alignment.apply(s1.vector(atom))


@dataclass(frozen=True)
class DriftRecord:
    node_id: str
    d_tr: float
    d_rw: float
    delta_h: float
    delta_w: float
    deg_t0: int | None
    deg_t1: int | None
    flags: tuple[str, ...]


@dataclass(frozen=True)
class DriftReport:
    window_source: str
    window_target: str
    alignment: Alignment
    records: tuple[DriftRecord, ...]

    def shared_records(self) -> list[DriftRecord]:
        return [r for r in self.records if "new" not in r.flags and "vanished" not in r.flags]

    def channel(self, name: str) -> dict[str, float]:
        return {
            r.node_id: getattr(r, name)
            for r in self.shared_records()
            if not isnan(getattr(r, name))
        }

    def to_csv(self, preamble: list[str] | None = None) -> str:
        lines = ["".join(f"# {p}\n" for p in (preamble or [])) + (
            "id,d_tr,d_rw,delta_h,delta_w,deg_t0,deg_t1,flags"
        )]
        for r in self.records:
            lines.append(
                ",".join(
                    [
                        r.node_id,
                        _fmt(r.d_tr),
                        _fmt(r.d_rw),
                        _fmt(r.delta_h),
                        _fmt(r.delta_w),
                        "" if r.deg_t0 is None else str(r.deg_t0),
                        "" if r.deg_t1 is None else str(r.deg_t1),
                        "|".join(r.flags),
                    ]
                )
            )
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        out: dict = {
            "window_source": self.window_source,
            "window_target": self.window_target,
            "n_shared": len(self.shared_records()),
            "n_new": sum(1 for r in self.records if "new" in r.flags),
            "n_vanished": sum(1 for r in self.records if "vanished" in r.flags),
            "alignment_residual": self.alignment.residual,
            "channels": {},
        }
        for name in ("d_tr", "d_rw", "delta_h", "delta_w"):
            values = np.array(sorted(self.channel(name).values()))
            if values.size == 0:
                out["channels"][name] = None
                continue
            out["channels"][name] = {
                f"q{int(q * 100):02d}": float(np.quantile(values, q)) for q in QUANTS
            }
        return out

    def summary_json(self, **meta) -> str:
        body = dict(meta)
        body.update(self.summary())
        return json.dumps(body, indent=2, sort_keys=True) + "\n"


def _fmt(x: float) -> str:
    return "" if isnan(x) else repr(float(x))


def drift_report(
    g0: SubstrateGraph,
    g1: SubstrateGraph,
    alignment: Alignment | None = None,
    variant: str = "euclidean",
) -> DriftReport:
    """All four channels for every node in either window.

    Nodes present in both windows get full records. Nodes only in the
    target are flagged new, only in the source flagged vanished; their
    channels are NaN and render as empty CSV fields.
    """
    s0, s1 = g0.snapshot, g1.snapshot
    shared = sorted(set(s0.ids) & set(s1.ids))
    if not shared:
        raise DisjointSnapshotsError("windows share no node ids")
    if alignment is None:
        alignment = align(s0, s1)
    records: list[DriftRecord] = []
    all_ids = sorted(set(s0.ids) | set(s1.ids))
    nan = float("nan")
    for node_id in all_ids:
        in0 = node_id in s0
        in1 = node_id in s1
        if in0 and in1:
            flags: list[str] = []
            if g0.degree(node_id) == 0:
                flags.append("isolated_t0")
            if g1.degree(node_id) == 0:
                flags.append("isolated_t1")
            records.append(
                DriftRecord(
                    node_id=node_id,
                    d_tr=translational_drift(s0, s1, alignment, node_id, variant),
                    d_rw=rewiring_drift(g0, g1, node_id),
                    delta_h=entropy_change(g0, g1, node_id),
                    delta_w=transport_shift(g0, g1, alignment, node_id),
                    deg_t0=g0.degree(node_id),
                    deg_t1=g1.degree(node_id),
                    flags=tuple(flags),
                )
            )
        elif in1:
            records.append(
                DriftRecord(node_id, nan, nan, nan, nan, None, g1.degree(node_id), ("new",))
            )
        else:
            records.append(
                DriftRecord(node_id, nan, nan, nan, nan, g0.degree(node_id), None, ("vanished",))
            )
    return DriftReport(
        window_source=s0.window_id,
        window_target=s1.window_id,
        alignment=alignment,
        records=tuple(records),
    )
