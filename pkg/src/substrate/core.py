"""Snapshot ingestion and neighborhood-graph construction.

A snapshot is a window of string-labelled embedding vectors. A graph
built from it carries the full pairwise distance table, per-node
neighbor lists (deterministic under distance ties), edge weights, and
the lazy local measure at each node:

    m_x(x) = alpha
    m_x(z) = (1 - alpha) * w(x, z) / sum_w   for z in N(x)

A node with no neighbors keeps the point mass at itself.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.spatial.distance import cdist

from .errors import (
    DimensionMismatchError,
    DuplicateIdError,
    InputError,
    InvalidAlphaError,
    InvalidKError,
    NonFiniteValueError,
    SnapshotFormatError,
    UnknownNodeError,
    ZeroVectorError,
)
from .transport import DiscreteMeasure

METRICS = ("euclidean", "cosine_distance")
MODES = ("knn", "mutual_knn")
WEIGHTINGS = ("binary", "inverse_distance", "heat")

INVERSE_DISTANCE_EPS = 1e-9
WEIGHT_FLOOR = 1e-300


@dataclass(frozen=True)
class Snapshot:
    """Ordered collection of unique node ids with embedding vectors."""

    window_id: str
    ids: tuple[str, ...]
    vectors: np.ndarray

    def __post_init__(self):
        ids = tuple(str(i) for i in self.ids)
        vectors = np.array(self.vectors, dtype=float)
        if vectors.ndim != 2:
            raise InputError("snapshot vectors must form a 2-d array")
        if vectors.shape[0] != len(ids):
            raise InputError("snapshot ids and vectors must align 1:1")
        if len(ids) == 0:
            raise InputError("snapshot holds no nodes")
        if len(set(ids)) != len(ids):
            raise DuplicateIdError("snapshot ids must be unique")
        if not np.all(np.isfinite(vectors)):
            raise NonFiniteValueError("snapshot vectors must be finite")
        vectors.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "_index", {v: i for i, v in enumerate(ids)})

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def __contains__(self, node_id: str) -> bool:
        return node_id in self._index

    def index(self, node_id: str) -> int:
        try:
            return self._index[node_id]
        except KeyError:
            raise UnknownNodeError(f"unknown node id {node_id!r}") from None

    def vector(self, node_id: str) -> np.ndarray:
        return self.vectors[self.index(node_id)]


def load_snapshot(path: str, window_id: str | None = None) -> Snapshot:
    """Parse a tab-separated snapshot file.

    One node per line: id, then the embedding coordinates. Lines starting
    with '#' and blank lines are skipped. All rows must agree on
    dimension; ids must be unique; values must be finite.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return _parse_snapshot(fh, window_id or path)
    except OSError as exc:
        raise InputError(f"cannot read snapshot {path!r}: {exc}")


def parse_snapshot_text(text: str, window_id: str) -> Snapshot:
    return _parse_snapshot(io.StringIO(text), window_id)


def _parse_snapshot(fh, window_id: str) -> Snapshot:
    ids: list[str] = []
    rows: list[list[float]] = []
    seen: dict[str, int] = {}
    dim: int | None = None
    for lineno, raw in enumerate(fh, start=1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) < 2:
            raise SnapshotFormatError("expected id and at least one coordinate", lineno)
        node_id = fields[0].strip()
        if not node_id:
            raise SnapshotFormatError("empty node id", lineno)
        if node_id in seen:
            raise DuplicateIdError(
                f"duplicate id {node_id!r} (first seen on line {seen[node_id]})", lineno
            )
        seen[node_id] = lineno
        try:
            values = [float(f) for f in fields[1:]]
        except ValueError as exc:
            raise SnapshotFormatError(f"bad coordinate: {exc}", lineno) from None
        if dim is None:
            dim = len(values)
        elif len(values) != dim:
            raise DimensionMismatchError(
                f"row has {len(values)} coordinates, expected {dim}", lineno
            )
        if not all(np.isfinite(values)):
            raise NonFiniteValueError("non-finite coordinate", lineno)
        ids.append(node_id)
        rows.append(values)
    if not ids:
        raise SnapshotFormatError("snapshot file holds no data rows")
    return Snapshot(window_id, tuple(ids), np.array(rows, dtype=float))


def write_snapshot(snapshot: Snapshot, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# window={snapshot.window_id} n={len(snapshot)} dim={snapshot.dim}\n")
        for node_id, vec in zip(snapshot.ids, snapshot.vectors):
            coords = "\t".join(repr(float(v)) for v in vec)
            fh.write(f"{node_id}\t{coords}\n")


@dataclass(frozen=True)
class GraphConfig:
    k: int
    mode: str = "knn"
    metric: str = "euclidean"
    weighting: str = "binary"
    alpha: float = 0.5
    heat_sigma: float | None = None

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise InvalidKError(f"k must be a positive integer, got {self.k!r}")
        object.__setattr__(self, "k", int(self.k))
        if self.mode not in MODES:
            raise InputError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.metric not in METRICS:
            raise InputError(f"metric must be one of {METRICS}, got {self.metric!r}")
        if self.weighting not in WEIGHTINGS:
            raise InputError(
                f"weighting must be one of {WEIGHTINGS}, got {self.weighting!r}"
            )
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidAlphaError(f"alpha must lie in [0, 1], got {self.alpha!r}")
        if self.heat_sigma is not None and not self.heat_sigma > 0.0:
            raise InputError(f"heat_sigma must be positive, got {self.heat_sigma!r}")


def pairwise_distances(snapshot: Snapshot, metric: str) -> np.ndarray:
    """Full distance table under the chosen ground metric.

    cosine_distance is 1 - cosine similarity; it is bounded by [0, 2]
    and is not a true metric (no triangle inequality).
    """
    if metric == "euclidean":
        return cdist(snapshot.vectors, snapshot.vectors, metric="euclidean")
    if metric == "cosine_distance":
        norms = np.linalg.norm(snapshot.vectors, axis=1)
        zero = np.flatnonzero(norms == 0.0)
        if zero.size:
            raise ZeroVectorError(
                f"zero vector at id {snapshot.ids[zero[0]]!r} under cosine_distance"
            )
        unit = snapshot.vectors / norms[:, None]
        dist = 1.0 - unit @ unit.T
        dist = 0.5 * (dist + dist.T)
        np.clip(dist, 0.0, None, out=dist)
        np.fill_diagonal(dist, 0.0)
        return dist
    raise InputError(f"unknown metric {metric!r}")


@dataclass(frozen=True)
class SubstrateGraph:
    """Neighborhood graph plus the diffusion kernel derived from it."""

    snapshot: Snapshot
    config: GraphConfig
    distances: np.ndarray
    neighbor_idx: tuple[np.ndarray, ...]
    neighbor_weight: tuple[np.ndarray, ...]
    heat_sigma_used: float | None
    kernel: csr_matrix

    @property
    def ids(self) -> tuple[str, ...]:
        return self.snapshot.ids

    def __len__(self) -> int:
        return len(self.snapshot)

    def index(self, node_id: str) -> int:
        return self.snapshot.index(node_id)

    def degree(self, node_id: str) -> int:
        return int(self.neighbor_idx[self.index(node_id)].shape[0])

    def neighbors(self, node_id: str) -> tuple[str, ...]:
        i = self.index(node_id)
        return tuple(self.ids[j] for j in self.neighbor_idx[i])

    @property
    def isolated(self) -> tuple[str, ...]:
        return tuple(
            self.ids[i] for i in range(len(self)) if self.neighbor_idx[i].size == 0
        )

    def edge_pairs(self) -> list[tuple[int, int]]:
        """Undirected edge set; each edge once, ordered by node id."""
        pairs: set[tuple[int, int]] = set()
        for i, nbrs in enumerate(self.neighbor_idx):
            for j in nbrs:
                a, b = (i, int(j)) if self.ids[i] <= self.ids[j] else (int(j), i)
                pairs.add((a, b))
        return sorted(pairs, key=lambda p: (self.ids[p[0]], self.ids[p[1]]))

    def measure_arrays(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Support indices and masses of m_x for node index i."""
        nbrs = self.neighbor_idx[i]
        alpha = self.config.alpha
        if nbrs.size == 0:
            return np.array([i]), np.array([1.0])
        w = self.neighbor_weight[i]
        spread = (1.0 - alpha) * w / w.sum()
        if alpha > 0.0:
            idx = np.concatenate(([i], nbrs))
            mass = np.concatenate(([alpha], spread))
        else:
            idx, mass = nbrs, spread
        return idx, mass

    def local_measure(self, node_id: str) -> DiscreteMeasure:
        i = self.index(node_id)
        idx, mass = self.measure_arrays(i)
        return DiscreteMeasure(tuple(self.ids[j] for j in idx), mass)


def build_graph(snapshot: Snapshot, config: GraphConfig) -> SubstrateGraph:
    """Construct the k-nearest-neighbor graph for one snapshot.

    Neighbor candidates are ordered by (distance, node id) so ties
    resolve identically regardless of input row order. mutual_knn keeps
    only reciprocated edges, which may isolate nodes.
    """
    n = len(snapshot)
    if config.k >= n:
        raise InvalidKError(f"k={config.k} requires at least {config.k + 1} nodes, have {n}")
    dist = pairwise_distances(snapshot, config.metric)

    # rank of each node in id order, for deterministic tie-breaking
    id_order = sorted(range(n), key=lambda i: snapshot.ids[i])
    id_rank = np.empty(n, dtype=np.int64)
    for r, i in enumerate(id_order):
        id_rank[i] = r

    knn: list[np.ndarray] = []
    for i in range(n):
        order = np.lexsort((id_rank, dist[i]))
        order = order[order != i]
        knn.append(order[: config.k].astype(np.int64))

    if config.mode == "mutual_knn":
        knn_sets = [set(row.tolist()) for row in knn]
        neighbor_idx = tuple(
            np.array([j for j in row if i in knn_sets[j]], dtype=np.int64)
            for i, row in enumerate(knn)
        )
    else:
        neighbor_idx = tuple(knn)

    heat_sigma_used: float | None = None
    if config.weighting == "heat":
        if config.heat_sigma is not None:
            heat_sigma_used = float(config.heat_sigma)
        else:
            pooled = np.concatenate(
                [dist[i, nbrs] for i, nbrs in enumerate(neighbor_idx) if nbrs.size]
                or [np.array([1.0])]
            )
            heat_sigma_used = float(np.median(pooled))
            if heat_sigma_used <= 0.0:
                heat_sigma_used = 1.0

    weights: list[np.ndarray] = []
    for i, nbrs in enumerate(neighbor_idx):
        d = dist[i, nbrs]
        if config.weighting == "binary":
            w = np.ones(nbrs.shape[0])
        elif config.weighting == "inverse_distance":
            w = 1.0 / (d + INVERSE_DISTANCE_EPS)
        else:
            w = np.exp(-(d**2) / heat_sigma_used**2)
            w = np.maximum(w, WEIGHT_FLOOR)
        weights.append(w)

    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    alpha = config.alpha
    for i, nbrs in enumerate(neighbor_idx):
        if nbrs.size == 0:
            rows.append(i)
            cols.append(i)
            vals.append(1.0)
            continue
        if alpha > 0.0:
            rows.append(i)
            cols.append(i)
            vals.append(alpha)
        spread = (1.0 - alpha) * weights[i] / weights[i].sum()
        for j, v in zip(nbrs, spread):
            rows.append(i)
            cols.append(int(j))
            vals.append(float(v))
    kernel = csr_matrix((vals, (rows, cols)), shape=(n, n))

    return SubstrateGraph(
        snapshot=snapshot,
        config=config,
        distances=dist,
        neighbor_idx=neighbor_idx,
        neighbor_weight=tuple(weights),
        heat_sigma_used=heat_sigma_used,
        kernel=kernel,
    )


def diffuse(graph: SubstrateGraph, mu: DiscreteMeasure) -> DiscreteMeasure:
    """One step of the substrate kernel: mu P, renormalized exactly."""
    vec = measure_to_vector(graph, mu)
    out = graph.kernel.T @ vec
    total = out.sum()
    if total <= 0.0:
        raise InputError("diffusion lost all mass")
    out = out / total
    keep = np.flatnonzero(out > 0.0)
    return DiscreteMeasure(tuple(graph.ids[int(j)] for j in keep), out[keep])


def measure_to_vector(graph: SubstrateGraph, mu: DiscreteMeasure) -> np.ndarray:
    """Dense mass vector over the graph's node indexing."""
    vec = np.zeros(len(graph))
    for atom, mass in zip(mu.atoms, mu.masses):
        vec[graph.index(atom)] += mass
    return vec


def graph_to_csv(graph: SubstrateGraph, preamble: list[str] | None = None) -> tuple[str, str]:
    """Render the edge table and node table as CSV text.

    Edge rows are directed (one per stored neighbor relation), sorted by
    (src id, dst id). Floats use repr so rereads round-trip exactly.
    """
    head = "".join(f"# {line}\n" for line in (preamble or []))
    edge_lines = [head + "src,dst,distance,weight"]
    order = sorted(range(len(graph)), key=lambda i: graph.ids[i])
    for i in order:
        pairs = sorted(
            zip(graph.neighbor_idx[i], graph.neighbor_weight[i]),
            key=lambda p: graph.ids[int(p[0])],
        )
        for j, w in pairs:
            edge_lines.append(
                f"{graph.ids[i]},{graph.ids[int(j)]},"
                f"{repr(float(graph.distances[i, int(j)]))},{repr(float(w))}"
            )
    node_lines = [head + "id,degree,isolated"]
    for i in order:
        deg = graph.neighbor_idx[i].shape[0]
        node_lines.append(f"{graph.ids[i]},{deg},{str(deg == 0).lower()}")
    return "\n".join(edge_lines) + "\n", "\n".join(node_lines) + "\n"
