"""Coarse curvature of the neighborhood graph and what it buys us.

kappa(x, y) = 1 - W1(m_x, m_y) / d(x, y) for pairs at positive ground
distance. Negative values flag transport bottlenecks; the bridge mass of
a node aggregates the negative part of its incident curvatures. A
positive global curvature floor certifies one-step contraction of the
diffusion kernel in Wasserstein distance, which is checked empirically
rather than assumed.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import SubstrateGraph
from .errors import (
    InputError,
    MissingCurvatureError,
    NumericalError,
    ZeroDistanceError,
)
from .transport import transport_cost_core

CONTRACTIVITY_TOL = 1e-9
CONTRACTIVITY_STEPS = (1, 2, 3)


@dataclass(frozen=True)
class PairCurvature:
    src: str
    dst: str
    distance: float
    w1: float
    kappa: float
    is_edge: bool


@dataclass(frozen=True)
class CurvatureProfile:
    """Curvature over the requested pair set.

    pairs are keyed with src < dst in id order. kappa0_edge is the
    infimum over graph edges; kappa0_all is populated only when the
    profile was computed over all pairs. skipped lists zero-distance
    pairs, which carry no curvature.
    """

    mode: str
    pairs: tuple[PairCurvature, ...]
    skipped: tuple[tuple[str, str], ...]
    kappa0_edge: float | None
    kappa0_all: float | None

    def __post_init__(self):
        table = {(p.src, p.dst): p for p in self.pairs}
        incident: dict[str, list[PairCurvature]] = {}
        for p in self.pairs:
            if p.is_edge:
                incident.setdefault(p.src, []).append(p)
                incident.setdefault(p.dst, []).append(p)
        object.__setattr__(self, "_table", table)
        object.__setattr__(self, "_incident", incident)
        object.__setattr__(self, "_skipped_set", frozenset(self.skipped))

    def kappa_of(self, x: str, y: str) -> float:
        key = (x, y) if x <= y else (y, x)
        hit = self._table.get(key)
        if hit is None:
            if key in self._skipped_set:
                raise ZeroDistanceError(f"pair {key} sits at distance zero")
            raise MissingCurvatureError(f"pair {key} absent from profile")
        return hit.kappa

    def has_pair(self, x: str, y: str) -> bool:
        key = (x, y) if x <= y else (y, x)
        return key in self._table

    def was_skipped(self, x: str, y: str) -> bool:
        key = (x, y) if x <= y else (y, x)
        return key in self._skipped_set

    def min_incident_kappa(self, x: str) -> float | None:
        hits = self._incident.get(x)
        if not hits:
            return None
        return min(p.kappa for p in hits)


def _pair_w1(graph: SubstrateGraph, i: int, j: int) -> float:
    idx_i, mass_i = graph.measure_arrays(i)
    idx_j, mass_j = graph.measure_arrays(j)
    union = np.unique(np.concatenate([idx_i, idx_j]))
    supply = np.zeros(union.shape[0])
    demand = np.zeros(union.shape[0])
    supply[np.searchsorted(union, idx_i)] = mass_i
    demand[np.searchsorted(union, idx_j)] = mass_j
    costs = graph.distances[np.ix_(union, union)]
    metric_safe = graph.config.metric == "euclidean"
    return transport_cost_core(supply, demand, costs, reduce_shared=metric_safe)


def edge_curvature(graph: SubstrateGraph, x: str, y: str) -> float:
    """Curvature of one pair. Direction never matters: the pair is
    canonicalized by id before solving, so kappa(x, y) == kappa(y, x)
    bit for bit."""
    if x == y:
        raise InputError("curvature needs two distinct nodes")
    if x > y:
        x, y = y, x
    i, j = graph.index(x), graph.index(y)
    d = float(graph.distances[i, j])
    if d <= 0.0:
        raise ZeroDistanceError(f"pair ({x!r}, {y!r}) sits at distance zero")
    return 1.0 - _pair_w1(graph, i, j) / d


def curvature_profile(
    graph: SubstrateGraph, pairs_mode: str = "edges", threads: int = 1
) -> CurvatureProfile:
    """Curvature over graph edges or over all node pairs.

    Zero-distance pairs are recorded under skipped instead of raising.
    Work may fan out over threads; results are assembled in pair order,
    so the profile is identical for any thread count.
    """
    if pairs_mode not in ("edges", "all_pairs"):
        raise InputError(f"pairs_mode must be 'edges' or 'all_pairs', got {pairs_mode!r}")
    ids = graph.ids
    edge_set = set(graph.edge_pairs())
    if pairs_mode == "edges":
        pair_list = sorted(edge_set, key=lambda p: (ids[p[0]], ids[p[1]]))
    else:
        by_id = sorted(range(len(graph)), key=lambda i: ids[i])
        pair_list = []
        for a in range(len(by_id)):
            for b in range(a + 1, len(by_id)):
                i, j = by_id[a], by_id[b]
                pair_list.append((i, j) if ids[i] <= ids[j] else (j, i))

    def _solve(pair: tuple[int, int]) -> tuple[float, float] | None:
        i, j = pair
        d = float(graph.distances[i, j])
        if d <= 0.0:
            return None
        w1 = _pair_w1(graph, i, j)
        return d, w1

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            solved = list(pool.map(_solve, pair_list))
    else:
        solved = [_solve(p) for p in pair_list]

    pairs: list[PairCurvature] = []
    skipped: list[tuple[str, str]] = []
    for (i, j), res in zip(pair_list, solved):
        key = (ids[i], ids[j])
        if res is None:
            skipped.append(key)
            continue
        d, w1 = res
        pairs.append(
            PairCurvature(
                src=key[0],
                dst=key[1],
                distance=d,
                w1=w1,
                kappa=1.0 - w1 / d,
                is_edge=(i, j) in edge_set or (j, i) in edge_set,
            )
        )
    edge_kappas = [p.kappa for p in pairs if p.is_edge]
    kappa0_edge = min(edge_kappas) if edge_kappas else None
    kappa0_all = min((p.kappa for p in pairs), default=None) if pairs_mode == "all_pairs" else None
    return CurvatureProfile(
        mode=pairs_mode,
        pairs=tuple(pairs),
        skipped=tuple(skipped),
        kappa0_edge=kappa0_edge,
        kappa0_all=kappa0_all,
    )


def bridge_mass(graph: SubstrateGraph, profile: CurvatureProfile, x: str) -> float:
    """Weight-averaged negative curvature mass around x.

    B(x) = sum over neighbors of pi(x, y) * max(-kappa(x, y), 0), with
    pi the node's edge weights renormalized over neighbors that carry a
    curvature value. Zero-distance neighbors are excluded from both the
    sum and the normalizer. Nodes with no usable neighbor get 0.
    """
    i = graph.index(x)
    nbrs = graph.neighbor_idx[i]
    if nbrs.size == 0:
        return 0.0
    weights = graph.neighbor_weight[i]
    kept_w: list[float] = []
    kept_neg: list[float] = []
    for j, w in zip(nbrs, weights):
        y = graph.ids[int(j)]
        if profile.was_skipped(x, y):
            continue
        if not profile.has_pair(x, y):
            raise MissingCurvatureError(
                f"edge ({x!r}, {y!r}) missing from curvature profile"
            )
        kappa = profile.kappa_of(x, y)
        kept_w.append(float(w))
        kept_neg.append(max(-kappa, 0.0))
    if not kept_w:
        return 0.0
    w_arr = np.array(kept_w)
    return float((w_arr / w_arr.sum()) @ np.array(kept_neg))


def node_report_rows(
    graph: SubstrateGraph, profile: CurvatureProfile, basins: BasinPartition
) -> list[tuple[str, float, int, float | None]]:
    """Per-node (id, bridge_mass, basin_id, min_incident_kappa), id-sorted."""
    rows = []
    for node_id in sorted(graph.ids):
        rows.append(
            (
                node_id,
                bridge_mass(graph, profile, node_id),
                basins.assignment[node_id],
                profile.min_incident_kappa(node_id),
            )
        )
    return rows


@dataclass(frozen=True)
class ContractivityReport:
    """Outcome of empirical transport-contraction checks.

    vacuous is set when kappa0 <= 0, in which case no inequality is
    asserted and trials are skipped. max_slack maps step count k to the
    worst observed W1(mu P^k, nu P^k) - (1 - kappa0)^k * W1(mu, nu).
    """

    kappa0: float
    vacuous: bool
    trials: int
    tolerance: float
    max_slack: dict[int, float]
    violations: int

    @property
    def passed(self) -> bool:
        if self.vacuous:
            return True
        return self.violations == 0


def verify_contractivity(
    graph: SubstrateGraph,
    profile: CurvatureProfile,
    trials: int = 100,
    seed: int = 0,
    max_support: int = 6,
    tolerance: float = CONTRACTIVITY_TOL,
) -> ContractivityReport:
    """Test the curvature contraction bound on random measure pairs.

    Requires kappa0_all from an all-pairs profile. Each trial draws two
    sparse random measures, pushes both through the kernel for k = 1..3
    steps, and compares exact W1 against the geometric bound.
    """
    if profile.kappa0_all is None:
        raise MissingCurvatureError(
            "contractivity needs an all-pairs curvature profile"
        )
    kappa0 = float(profile.kappa0_all)
    if kappa0 <= 0.0:
        return ContractivityReport(
            kappa0=kappa0,
            vacuous=True,
            trials=0,
            tolerance=tolerance,
            max_slack={},
            violations=0,
        )
    rng = np.random.default_rng(seed)
    n = len(graph)
    metric_safe = graph.config.metric == "euclidean"
    kernel_t = graph.kernel.T.tocsr()
    max_slack = {k: -np.inf for k in CONTRACTIVITY_STEPS}
    violations = 0
    for _ in range(trials):
        mu = _random_sparse_measure(rng, n, max_support)
        nu = _random_sparse_measure(rng, n, max_support)
        base = transport_cost_core(
            mu, nu, graph.distances, reduce_shared=metric_safe
        )
        cur_mu, cur_nu = mu, nu
        for k in CONTRACTIVITY_STEPS:
            cur_mu = kernel_t @ cur_mu
            cur_nu = kernel_t @ cur_nu
            cur_mu = cur_mu / cur_mu.sum()
            cur_nu = cur_nu / cur_nu.sum()
            stepped = transport_cost_core(
                cur_mu, cur_nu, graph.distances, reduce_shared=metric_safe
            )
            slack = stepped - (1.0 - kappa0) ** k * base
            if slack > max_slack[k]:
                max_slack[k] = slack
            if slack > tolerance:
                violations += 1
    return ContractivityReport(
        kappa0=kappa0,
        vacuous=False,
        trials=trials,
        tolerance=tolerance,
        max_slack={k: float(v) for k, v in max_slack.items()},
        violations=violations,
    )


def _random_sparse_measure(
    rng: np.random.Generator, n: int, max_support: int
) -> np.ndarray:
    size = int(rng.integers(1, max_support + 1))
    support = rng.choice(n, size=min(size, n), replace=False)
    raw = rng.dirichlet(np.ones(support.shape[0]))
    vec = np.zeros(n)
    vec[support] = raw
    return vec


@dataclass(frozen=True)
class BasinPartition:
    """Connected components after cutting low-curvature edges.

    Edges with kappa <= tau are removed; zero-distance edges (duplicate
    coordinates) are kept regardless, since coincident nodes belong
    together. Basin ids are dense, assigned in order of each component's
    smallest node id.
    """

    tau: float
    assignment: dict[str, int]
    n_basins: int
    bridge_edges: tuple[tuple[str, str], ...]

    def members(self, basin_id: int) -> list[str]:
        return sorted(k for k, v in self.assignment.items() if v == basin_id)


def derive_basins(
    graph: SubstrateGraph, profile: CurvatureProfile, tau: float = 0.0
) -> BasinPartition:
    ids = graph.ids
    n = len(graph)
    parent = list(range(n))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a: int, b: int) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    removed: list[tuple[str, str]] = []
    for i, j in graph.edge_pairs():
        x, y = ids[i], ids[j]
        if profile.was_skipped(x, y):
            union(i, j)
            continue
        kappa = profile.kappa_of(x, y)
        if kappa <= tau:
            removed.append((x, y))
        else:
            union(i, j)

    roots: dict[int, list[int]] = {}
    for i in range(n):
        roots.setdefault(find(i), []).append(i)
    comps = sorted(roots.values(), key=lambda member: min(ids[i] for i in member))
    assignment: dict[str, int] = {}
    for basin_id, members in enumerate(comps):
        for i in members:
            assignment[ids[i]] = basin_id
    return BasinPartition(
        tau=tau,
        assignment=assignment,
        n_basins=len(comps),
        bridge_edges=tuple(sorted(removed)),
    )


def basin_centroids(
    graph: SubstrateGraph, basins: BasinPartition
) -> np.ndarray:
    """Mean embedding per basin, indexed by basin id."""
    dim = graph.snapshot.dim
    sums = np.zeros((basins.n_basins, dim))
    counts = np.zeros(basins.n_basins)
    for node_id, b in basins.assignment.items():
        sums[b] += graph.snapshot.vector(node_id)
        counts[b] += 1
    if np.any(counts == 0):
        raise NumericalError("empty basin in partition")
    return sums / counts[:, None]
