"""Rank statistics, resampling, calibration, and frequency matching.

Everything here is deterministic given its seed argument. Permutation
p-values use the add-one convention p = (1 + #{perm >= observed}) /
(n_perm + 1), so p is never zero and identical-group inputs come out
near uniform.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import (
    InputError,
    InvalidBootCountError,
    InvalidPermCountError,
    NumericalError,
    SingleClassError,
)

MIN_PERMUTATIONS = 99
TIE_TOL = 1e-12
MIN_BOOTSTRAP = 200
LOGISTIC_GRAD_TOL = 1e-8


def rank_auc(scores, labels) -> float:
    """Probability a positive outranks a negative, ties counting half.

    Equivalent to the Mann-Whitney U statistic normalized by the number
    of positive/negative pairs.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise InputError("scores and labels must be equal-length vectors")
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("rank_auc needs both classes present")
    ranks = rankdata(scores)
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def calibration_error(probs, labels, n_bins: int = 10) -> float:
    """Expected calibration error over equal-width probability bins."""
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    if probs.ndim != 1 or probs.shape != labels.shape:
        raise InputError("probs and labels must be equal-length vectors")
    if probs.size == 0:
        raise InputError("calibration_error needs at least one prediction")
    if n_bins < 1:
        raise InputError("n_bins must be positive")
    if np.any(probs < 0.0) or np.any(probs > 1.0):
        raise InputError("probabilities must lie in [0, 1]")
    idx = np.minimum((probs * n_bins).astype(int), n_bins - 1)
    ece = 0.0
    n = probs.size
    for b in range(n_bins):
        mask = idx == b
        if not mask.any():
            continue
        gap = abs(float(probs[mask].mean()) - float(labels[mask].mean()))
        ece += (mask.sum() / n) * gap
    return float(ece)


def permutation_pvalue(
    statistic: Callable[[np.ndarray, np.ndarray], float],
    sample_a,
    sample_b,
    n_perm: int,
    seed: int,
) -> tuple[float, float]:
    """Permutation test for statistic(sample_a, sample_b).

    Pools the samples, reassigns group membership n_perm times, and
    counts permuted statistics at least as large as the observed one.
    Pass a symmetric discrepancy for a two-sided reading; a signed
    statistic gives the one-sided test in that direction. Returns
    (p, observed).
    """
    if n_perm < MIN_PERMUTATIONS:
        raise InvalidPermCountError(
            f"n_perm must be at least {MIN_PERMUTATIONS}, got {n_perm}"
        )
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise InputError("both samples must be non-empty")
    observed = float(statistic(a, b))
    pooled = np.concatenate([a, b])
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(n_perm):
        perm = rng.permutation(pooled)
        if float(statistic(perm[: a.size], perm[a.size :])) >= observed:
            hits += 1
    return (1 + hits) / (n_perm + 1), observed


def label_permutation_pvalue(
    statistic: Callable[[np.ndarray, np.ndarray], float],
    values,
    labels,
    n_perm: int,
    seed: int,
    strata=None,
) -> tuple[float, float]:
    """Permutation p for statistic(values, labels) under label shuffles.

    With strata given, labels are shuffled only within each stratum, so
    the stratum composition is an invariant of the null. Permutations on
    which the statistic is undefined (degenerate resample) are skipped
    but still count toward the denominator as non-exceeding. Permutation
    statistics tied with the observed value count one half; discrete
    statistics (heavily tied scores) would otherwise push the null p
    distribution above uniform. The add-one numerator keeps p > 0.
    """
    if n_perm < MIN_PERMUTATIONS:
        raise InvalidPermCountError(
            f"n_perm must be at least {MIN_PERMUTATIONS}, got {n_perm}"
        )
    values = np.asarray(values, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    observed = float(statistic(values, labels))
    rng = np.random.default_rng(seed)
    if strata is None:
        groups = [np.arange(labels.size)]
    else:
        strata = np.asarray(strata)
        groups = [np.flatnonzero(strata == s) for s in np.unique(strata)]
    hits = 0.0
    shuffled = labels.copy()
    for _ in range(n_perm):
        for g in groups:
            shuffled[g] = labels[g][rng.permutation(g.size)]
        try:
            value = float(statistic(values, shuffled))
        except (SingleClassError, NumericalError):
            continue
        if value > observed + TIE_TOL:
            hits += 1.0
        elif value >= observed - TIE_TOL:
            hits += 0.5
    return (1 + hits) / (n_perm + 1), observed


def bootstrap_ci(
    statistic: Callable[..., float],
    samples: Sequence,
    n_boot: int,
    seed: int,
    level: float = 0.95,
) -> tuple[float, float]:
    """Percentile bootstrap interval for statistic(*samples).

    samples is a list of equal-length arrays resampled jointly by index.
    Degenerate resamples (statistic raises) are skipped. The interval is
    widened if needed so the point estimate always lies inside.
    """
    if n_boot < MIN_BOOTSTRAP:
        raise InvalidBootCountError(
            f"n_boot must be at least {MIN_BOOTSTRAP}, got {n_boot}"
        )
    if not 0.0 < level < 1.0:
        raise InputError(f"level must lie in (0, 1), got {level!r}")
    arrays = [np.asarray(s) for s in samples]
    n = arrays[0].shape[0]
    if n == 0:
        raise InputError("cannot bootstrap an empty sample")
    if any(a.shape[0] != n for a in arrays):
        raise InputError("joint bootstrap needs equal-length samples")
    estimate = float(statistic(*arrays))
    rng = np.random.default_rng(seed)
    stats: list[float] = []
    for _ in range(n_boot):
        idx = rng.integers(0, n, size=n)
        try:
            stats.append(float(statistic(*(a[idx] for a in arrays))))
        except (SingleClassError, NumericalError):
            continue
    if not stats:
        raise NumericalError("all bootstrap resamples were degenerate")
    lo = float(np.quantile(stats, (1.0 - level) / 2.0))
    hi = float(np.quantile(stats, 1.0 - (1.0 - level) / 2.0))
    return min(lo, estimate), max(hi, estimate)


def quantile_edges(covariate, n_bins: int) -> np.ndarray:
    """Interior quantile cut points; may collapse under heavy ties."""
    covariate = np.asarray(covariate, dtype=float)
    if covariate.size == 0:
        raise InputError("cannot bin an empty covariate")
    if n_bins < 1:
        raise InputError("n_bins must be positive")
    qs = np.linspace(0.0, 1.0, n_bins + 1)[1:-1]
    return np.quantile(covariate, qs)


def apply_edges(covariate, edges: np.ndarray) -> np.ndarray:
    return np.searchsorted(edges, np.asarray(covariate, dtype=float), side="right")


def frequency_match(covariate, n_bins: int) -> np.ndarray:
    """Quantile-bin a confound so comparisons run within strata.

    A constant covariate lands everything in one stratum, which
    downstream code treats as no stratification.
    """
    return apply_edges(covariate, quantile_edges(covariate, n_bins))


@dataclass(frozen=True)
class StratifiedAUC:
    auc: float
    n_used: int
    n_strata_used: int
    n_strata_dropped: int


def stratified_auc(scores, labels, strata) -> StratifiedAUC:
    """Size-weighted within-stratum AUC.

    Strata holding a single class carry no rank information; they are
    dropped and counted. Raises SingleClassError when nothing remains.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    strata = np.asarray(strata)
    if not (scores.shape == labels.shape == strata.shape):
        raise InputError("scores, labels, strata must align")
    total = 0.0
    weight = 0
    used = 0
    dropped = 0
    last_auc = 0.0
    for s in np.unique(strata):
        mask = strata == s
        sub_labels = labels[mask]
        if sub_labels.all() or not sub_labels.any():
            dropped += 1
            continue
        last_auc = rank_auc(scores[mask], sub_labels)
        size = int(mask.sum())
        total += last_auc * size
        weight += size
        used += 1
    if weight == 0:
        raise SingleClassError("every stratum was single-class")
    # one usable stratum reduces to the plain statistic; skip the
    # multiply-divide round trip so the reduction is exact
    value = last_auc if used == 1 else float(total / weight)
    return StratifiedAUC(
        auc=value,
        n_used=weight,
        n_strata_used=used,
        n_strata_dropped=dropped,
    )


def spearman(a, b) -> float:
    """Rank correlation; NaN when either input is constant."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise InputError("spearman needs two equal-length vectors")
    if a.size < 2:
        raise InputError("spearman needs at least two points")
    ra = rankdata(a)
    rb = rankdata(b)
    if np.ptp(ra) == 0.0 or np.ptp(rb) == 0.0:
        return float("nan")
    ra = ra - ra.mean()
    rb = rb - rb.mean()
    return float((ra @ rb) / np.sqrt((ra @ ra) * (rb @ rb)))


@dataclass(frozen=True)
class LogisticModel:
    """Standardized-feature logistic fit, used only to produce the
    probabilities that feed calibration_error."""

    weights: np.ndarray
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    converged: bool
    iterations: int

    def predict_proba(self, features) -> np.ndarray:
        x = np.atleast_2d(np.asarray(features, dtype=float))
        z = (x - self.feature_mean) / self.feature_scale
        design = np.hstack([np.ones((z.shape[0], 1)), z])
        return _sigmoid(design @ self.weights)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def fit_logistic(
    features,
    labels,
    ridge: float = 1e-6,
    max_iter: int = 200,
    tol: float = LOGISTIC_GRAD_TOL,
) -> LogisticModel:
    """Newton fit of ridge-regularized logistic regression.

    Features are standardized internally (constant columns pass through
    untouched). Stops when the gradient max-norm falls below tol.
    """
    x = np.atleast_2d(np.asarray(features, dtype=float))
    y = np.asarray(labels, dtype=float)
    if x.shape[0] != y.shape[0]:
        raise InputError("features and labels must align")
    if y.size == 0:
        raise InputError("cannot fit on an empty sample")
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale = np.where(scale > 0.0, scale, 1.0)
    z = (x - mean) / scale
    design = np.hstack([np.ones((z.shape[0], 1)), z])
    w = np.zeros(design.shape[1])
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        p = _sigmoid(design @ w)
        grad = design.T @ (p - y) + ridge * w
        if float(np.abs(grad).max()) < tol:
            converged = True
            break
        h = p * (1.0 - p)
        hess = (design * h[:, None]).T @ design + ridge * np.eye(design.shape[1])
        w = w - np.linalg.solve(hess, grad)
    return LogisticModel(
        weights=w,
        feature_mean=mean,
        feature_scale=scale,
        converged=converged,
        iterations=iterations,
    )


def split_half(ids: Sequence[str]) -> tuple[list[int], list[int]]:
    """Deterministic half split by node-id hash, independent of order."""
    fit_idx: list[int] = []
    eval_idx: list[int] = []
    for i, node_id in enumerate(ids):
        digest = hashlib.sha256(str(node_id).encode("utf-8")).digest()
        (fit_idx if digest[-1] % 2 == 0 else eval_idx).append(i)
    return fit_idx, eval_idx
