"""Planted-structure substrate generator.

Builds windows with Gaussian basins joined by sparse bridge chains, plus
an evolution step that displaces groups and rewires chosen nodes across
the gap. The planted labels travel with the data so harnesses can score
against ground truth: positives for rewiring detection are the nodes the
evolution actually moved, never the bridge set itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .core import Snapshot
from .errors import BasinsOverlapError, InputError, UnknownNodeError

SEPARATION_GUARD = 4.0


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    dim: int = 2
    n_basins: int = 2
    basin_size: int = 50
    basin_sigma: float = 1.0
    separation: float = 10.0
    n_bridge: int = 6
    bridge_jitter: float = 0.25

    def __post_init__(self):
        if self.n_basins < 1:
            raise InputError("need at least one basin")
        if self.basin_size < 1:
            raise InputError("basin_size must be positive")
        if self.dim < 1:
            raise InputError("dim must be positive")
        if self.basin_sigma <= 0.0:
            raise InputError("basin_sigma must be positive")
        if self.n_bridge < 0:
            raise InputError("n_bridge must be nonnegative")
        if self.n_basins > 1 and self.separation < SEPARATION_GUARD * self.basin_sigma:
            raise BasinsOverlapError(
                f"separation {self.separation} under the guard "
                f"{SEPARATION_GUARD} * sigma = {SEPARATION_GUARD * self.basin_sigma}"
            )


@dataclass(frozen=True)
class PlantedLabels:
    """Ground truth that rides along with a generated window."""

    basin: dict[str, int]
    bridge_nodes: frozenset[str]
    rewired_nodes: frozenset[str]
    centroids: np.ndarray

    def group_of(self, node_id: str) -> str:
        if node_id in self.bridge_nodes:
            return "bridge"
        try:
            return f"basin{self.basin[node_id]}"
        except KeyError:
            raise UnknownNodeError(f"no planted label for {node_id!r}") from None

    def to_csv(self, preamble: list[str] | None = None) -> str:
        head = "".join(f"# {p}\n" for p in (preamble or []))
        lines = [head + "id,basin,is_bridge,was_rewired"]
        for node_id in sorted(self.basin):
            lines.append(
                f"{node_id},{self.basin[node_id]},"
                f"{str(node_id in self.bridge_nodes).lower()},"
                f"{str(node_id in self.rewired_nodes).lower()}"
            )
        return "\n".join(lines) + "\n"


def _centroid_layout(config: SynthConfig) -> np.ndarray:
    """Basin centers on a line, spaced by the separation."""
    centers = np.zeros((config.n_basins, config.dim))
    for b in range(config.n_basins):
        centers[b, 0] = b * config.separation
    return centers


def generate(config: SynthConfig, window_id: str = "t0") -> tuple[Snapshot, PlantedLabels]:
    """Sample one window with planted basins and bridge chains.

    Basin nodes are Gaussian around their centroid. Bridge nodes sit on
    the segments between consecutive centroids, jittered by
    bridge_jitter * basin_sigma, split as evenly as the count allows.
    """
    rng = np.random.default_rng(config.seed)
    centers = _centroid_layout(config)
    ids: list[str] = []
    rows: list[np.ndarray] = []
    basin: dict[str, int] = {}
    bridge: set[str] = set()

    for b in range(config.n_basins):
        for i in range(config.basin_size):
            node_id = f"basin{b}_{i:03d}"
            ids.append(node_id)
            rows.append(centers[b] + config.basin_sigma * rng.standard_normal(config.dim))
            basin[node_id] = b

    n_segments = max(config.n_basins - 1, 0)
    if config.n_bridge and n_segments:
        per = np.full(n_segments, config.n_bridge // n_segments)
        per[: config.n_bridge % n_segments] += 1
        counter = 0
        for seg in range(n_segments):
            a, c = centers[seg], centers[seg + 1]
            m = int(per[seg])
            for j in range(m):
                frac = (j + 1) / (m + 1)
                node_id = f"bridge_{counter:02d}"
                counter += 1
                point = a + frac * (c - a)
                point = point + config.bridge_jitter * config.basin_sigma * rng.standard_normal(
                    config.dim
                )
                ids.append(node_id)
                rows.append(point)
                # a bridge node's basin label is its nearer endpoint
                basin[node_id] = seg if frac <= 0.5 else seg + 1
                bridge.add(node_id)

    snapshot = Snapshot(window_id, tuple(ids), np.stack(rows))
    labels = PlantedLabels(
        basin=basin,
        bridge_nodes=frozenset(bridge),
        rewired_nodes=frozenset(),
        centroids=centers,
    )
    return snapshot, labels


@dataclass(frozen=True)
class EvolutionSpec:
    """One evolution step between windows.

    displacement maps a group name (all, bridge, basin0, basin1, ...) to
    a vector added to every member. rewire_prob maps the same names to
    the probability that a member is torn out and resampled near the far
    side of its gap; the bridge key takes precedence for bridge nodes.
    Rewired nodes land between boundary_frac[0] and boundary_frac[1] of
    the way toward the target centroid, jittered by rewire_jitter.
    """

    displacement: dict[str, tuple[float, ...]] = field(default_factory=dict)
    rewire_prob: dict[str, float] = field(default_factory=dict)
    boundary_frac: tuple[float, float] = (0.45, 0.75)
    rewire_jitter: float = 0.25

    def __post_init__(self):
        for name, p in self.rewire_prob.items():
            if not 0.0 <= p <= 1.0:
                raise InputError(f"rewire probability for {name!r} must lie in [0, 1]")
        lo, hi = self.boundary_frac
        if not 0.0 <= lo <= hi <= 1.0:
            raise InputError("boundary_frac must satisfy 0 <= lo <= hi <= 1")


def _group_value(table: dict, labels: PlantedLabels, node_id: str, default):
    if node_id in labels.bridge_nodes and "bridge" in table:
        return table["bridge"]
    key = f"basin{labels.basin[node_id]}"
    if key in table:
        return table[key]
    return table.get("all", default)


def evolve(
    snapshot: Snapshot,
    labels: PlantedLabels,
    spec: EvolutionSpec,
    seed: int,
    window_id: str = "t1",
) -> tuple[Snapshot, PlantedLabels]:
    """Produce the next window plus labels holding the rewired set."""
    rng = np.random.default_rng(seed)
    dim = snapshot.dim
    centers = labels.centroids
    vectors = np.array(snapshot.vectors)
    rewired: set[str] = set()
    for i, node_id in enumerate(snapshot.ids):
        shift = _group_value(spec.displacement, labels, node_id, None)
        if shift is not None:
            vectors[i] = vectors[i] + np.asarray(shift, dtype=float)
        p = float(_group_value(spec.rewire_prob, labels, node_id, 0.0))
        if p > 0.0 and rng.random() < p:
            rewired.add(node_id)
            source = labels.basin[node_id]
            target = (source + 1) % centers.shape[0]
            frac = rng.uniform(*spec.boundary_frac)
            point = centers[source] + frac * (centers[target] - centers[source])
            vectors[i] = point + spec.rewire_jitter * rng.standard_normal(dim)
    out = Snapshot(window_id, snapshot.ids, vectors)
    return out, replace(labels, rewired_nodes=frozenset(rewired))


@dataclass(frozen=True)
class InterventionSpec:
    """Pointwise intervention applied to a whole window.

    kind 'pull_to_centroid' moves every node rate of the way to its
    basin centroid (stabilizing). kind 'noise' adds isotropic Gaussian
    noise of scale sigma (destabilizing).
    """

    kind: str
    rate: float = 0.5
    sigma: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("pull_to_centroid", "noise"):
            raise InputError(f"unknown intervention kind {self.kind!r}")
        if self.kind == "pull_to_centroid" and not 0.0 <= self.rate <= 1.0:
            raise InputError("pull rate must lie in [0, 1]")
        if self.kind == "noise" and self.sigma < 0.0:
            raise InputError("noise sigma must be nonnegative")


def intervene(
    snapshot: Snapshot,
    labels: PlantedLabels,
    spec: InterventionSpec,
    window_id: str | None = None,
) -> Snapshot:
    vectors = np.array(snapshot.vectors)
    if spec.kind == "pull_to_centroid":
        for i, node_id in enumerate(snapshot.ids):
            c = labels.centroids[labels.basin[node_id]]
            vectors[i] = vectors[i] + spec.rate * (c - vectors[i])
        suffix = f"+pull{spec.rate}"
    else:
        rng = np.random.default_rng(spec.seed)
        vectors = vectors + rng.normal(0.0, spec.sigma, size=vectors.shape)
        suffix = f"+noise{spec.sigma}"
    return Snapshot(window_id or snapshot.window_id + suffix, snapshot.ids, vectors)


def parse_labels_csv(text: str) -> PlantedLabels:
    """Rebuild labels from the CSV written by to_csv. Centroids are
    recomputed as basin means when needed, so they are not stored."""
    basin: dict[str, int] = {}
    bridge: set[str] = set()
    rewired: set[str] = set()
    header_seen = False
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if not header_seen:
            if line != "id,basin,is_bridge,was_rewired":
                raise InputError(f"unexpected labels header: {line!r}")
            header_seen = True
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise InputError(f"bad labels row: {line!r}")
        node_id, b, is_bridge, was_rewired = parts
        basin[node_id] = int(b)
        if is_bridge == "true":
            bridge.add(node_id)
        if was_rewired == "true":
            rewired.add(node_id)
    if not header_seen:
        raise InputError("labels file has no header")
    n_basins = max(basin.values()) + 1 if basin else 0
    return PlantedLabels(
        basin=basin,
        bridge_nodes=frozenset(bridge),
        rewired_nodes=frozenset(rewired),
        centroids=np.zeros((n_basins, 0)),
    )


def labels_with_centroids(labels: PlantedLabels, snapshot: Snapshot) -> PlantedLabels:
    """Fill centroids from the snapshot's basin means."""
    n_basins = max(labels.basin.values()) + 1
    sums = np.zeros((n_basins, snapshot.dim))
    counts = np.zeros(n_basins)
    for node_id, b in labels.basin.items():
        if node_id in snapshot:
            sums[b] += snapshot.vector(node_id)
            counts[b] += 1
    if np.any(counts == 0):
        raise InputError("a basin has no members in this snapshot")
    return replace(labels, centroids=sums / counts[:, None])
