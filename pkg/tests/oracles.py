"""Independent reference implementations used to cross-check results.

Everything here is written against scipy/numpy primitives or plain
brute force, never against the package under test, so agreement between
the two is evidence rather than tautology.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy import linalg, stats
from scipy.spatial.distance import jensenshannon


def w1_1d_quantile(pos_a, mass_a, pos_b, mass_b) -> float:
    """W1 on the line as the integral of |F_a - F_b| over the merged grid."""
    pos_a = np.asarray(pos_a, dtype=float)
    pos_b = np.asarray(pos_b, dtype=float)
    mass_a = np.asarray(mass_a, dtype=float)
    mass_b = np.asarray(mass_b, dtype=float)
    grid = np.unique(np.concatenate([pos_a, pos_b]))
    fa = np.array([mass_a[pos_a <= t].sum() for t in grid])
    fb = np.array([mass_b[pos_b <= t].sum() for t in grid])
    widths = np.diff(grid)
    return float((np.abs(fa - fb)[:-1] * widths).sum())


def _tree_flow(basis, supply, demand):
    """Flow on a candidate transportation basis, by leaf elimination.

    Returns None when the edge set is not a spanning tree of the
    bipartite supply/demand graph.
    """
    m, n = len(supply), len(demand)
    need = {("r", i): float(s) for i, s in enumerate(supply)}
    need.update({("c", j): float(d) for j, d in enumerate(demand)})
    edges = {e: None for e in basis}
    incident = {v: set() for v in need}
    for i, j in basis:
        incident[("r", i)].add((i, j))
        incident[("c", j)].add((i, j))
    remaining = set(basis)
    while remaining:
        leaf = None
        for v, inc in incident.items():
            live = inc & remaining
            if len(live) == 1:
                leaf = (v, next(iter(live)))
                break
        if leaf is None:
            return None
        v, (i, j) = leaf
        flow = need[v]
        edges[(i, j)] = flow
        other = ("c", j) if v == ("r", i) else ("r", i)
        need[other] -= flow
        need[v] = 0.0
        remaining.discard((i, j))
    if any(abs(r) > 1e-9 for r in need.values()):
        return None
    return edges


def transport_bruteforce(supply, demand, cost) -> float:
    """Optimal transport cost by enumerating basic feasible solutions.

    Every vertex of the transportation polytope is a spanning-tree
    basic solution, so checking all m+n-1 edge subsets is exhaustive.
    Intended for tiny instances (2x2, 2x3).
    """
    supply = np.asarray(supply, dtype=float)
    demand = np.asarray(demand, dtype=float)
    cost = np.asarray(cost, dtype=float)
    m, n = supply.size, demand.size
    assert abs(supply.sum() - demand.sum()) < 1e-9, "unbalanced instance"
    all_edges = [(i, j) for i in range(m) for j in range(n)]
    best = None
    for basis in itertools.combinations(all_edges, m + n - 1):
        flows = _tree_flow(basis, supply, demand)
        if flows is None:
            continue
        if min(flows.values()) < -1e-9:
            continue
        value = sum(cost[i, j] * max(f, 0.0) for (i, j), f in flows.items())
        if best is None or value < best:
            best = value
    assert best is not None, "no feasible basis found"
    return float(best)


def js_oracle(p, q) -> float:
    """Jensen-Shannon divergence, base 2, on aligned mass vectors."""
    return float(jensenshannon(np.asarray(p, float), np.asarray(q, float), base=2) ** 2)


def entropy_oracle(p) -> float:
    return float(stats.entropy(np.asarray(p, dtype=float), base=2))


def auc_oracle(scores, labels) -> float:
    """Mann-Whitney U scaled to a probability, ties counted half."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    pos = scores[labels]
    neg = scores[~labels]
    u = stats.mannwhitneyu(pos, neg, alternative="two-sided").statistic
    return float(u / (pos.size * neg.size))


def ece_bruteforce(probs, labels, n_bins: int) -> float:
    """Expected calibration error over equal-width bins, by direct loop."""
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels, dtype=float)
    total = probs.size
    value = 0.0
    for b in range(n_bins):
        lo = b / n_bins
        hi = (b + 1) / n_bins
        if b == n_bins - 1:
            mask = (probs >= lo) & (probs <= hi)
        else:
            mask = (probs >= lo) & (probs < hi)
        if not mask.any():
            continue
        conf = probs[mask].mean()
        acc = labels[mask].mean()
        value += (mask.sum() / total) * abs(acc - conf)
    return float(value)


def procrustes_map_oracle(source_pts, target_pts):
    """Map target points into the source frame per orthogonal Procrustes.

    Centers both clouds, fits the rotation with scipy, and returns the
    mapped targets: tgt_centered @ R + source_centroid.
    """
    src = np.asarray(source_pts, dtype=float)
    tgt = np.asarray(target_pts, dtype=float)
    c_src = src.mean(axis=0)
    c_tgt = tgt.mean(axis=0)
    rotation, _ = linalg.orthogonal_procrustes(tgt - c_tgt, src - c_src)
    return (tgt - c_tgt) @ rotation + c_src


def spearman_oracle(a, b) -> float:
    return float(stats.spearmanr(a, b).statistic)


def affine_iterates(factor: float, offset, x0, steps: int) -> np.ndarray:
    """Closed-form orbit of x -> factor * x + offset, including x0."""
    x0 = np.asarray(x0, dtype=float)
    offset = np.asarray(offset, dtype=float)
    out = [x0.copy()]
    for k in range(1, steps + 1):
        geo = k if factor == 1.0 else (factor**k - 1.0) / (factor - 1.0)
        out.append(factor**k * x0 + geo * offset)
    return np.stack(out)
