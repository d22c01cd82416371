from __future__ import annotations

import numpy as np
import pytest

from substrate.stats import (
    LogisticModel,
    apply_edges,
    bootstrap_ci,
    calibration_error,
    fit_logistic,
    frequency_match,
    label_permutation_pvalue,
    permutation_pvalue,
    quantile_edges,
    rank_auc,
    spearman,
    split_half,
    stratified_auc,
)
from substrate.errors import (
    InputError,
    InvalidBootCountError,
    InvalidPermCountError,
    NumericalError,
    SingleClassError,
)

from oracles import auc_oracle, ece_bruteforce, spearman_oracle


def mean_gap(a, b):
    return float(np.mean(a) - np.mean(b))


def auc_stat(values, labels):
    return rank_auc(values, labels)


def test_rank_auc_trivial_cases():
    assert rank_auc([1.0, 2.0, 3.0, 4.0], [False, False, True, True]) == 1.0
    assert rank_auc([4.0, 3.0, 2.0, 1.0], [False, False, True, True]) == 0.0
    assert rank_auc([1.0, 1.0, 1.0, 1.0], [False, True, False, True]) == 0.5
    with pytest.raises(SingleClassError):
        rank_auc([1.0, 2.0], [True, True])
    with pytest.raises(SingleClassError):
        rank_auc([1.0, 2.0], [False, False])
    with pytest.raises(InputError):
        rank_auc([1.0, 2.0], [True])


def test_rank_auc_matches_mann_whitney():
    """Oracle: normalized U statistic, ties included."""
    rng = np.random.default_rng(70)
    for case in range(100):
        n = int(rng.integers(6, 40))
        scores = rng.choice([0.0, 0.5, 1.0, 2.0, 3.5], size=n)
        labels = rng.random(n) < 0.4
        if labels.all() or not labels.any():
            continue
        want = auc_oracle(scores, labels)
        assert rank_auc(scores, labels) == pytest.approx(want, abs=1e-12), f"case {case}"


def test_rank_auc_is_invariant_under_monotone_transforms():
    """Property: AUC sees only the ordering of the scores."""
    rng = np.random.default_rng(71)
    for case in range(120):
        n = int(rng.integers(6, 30))
        scores = rng.normal(size=n)
        labels = rng.random(n) < 0.5
        if labels.all() or not labels.any():
            continue
        base = rank_auc(scores, labels)
        a = float(rng.uniform(0.1, 5.0))
        b = float(rng.normal())
        assert abs(rank_auc(a * scores + b, labels) - base) <= 1e-12, f"case {case}"
        assert abs(rank_auc(np.exp(scores), labels) - base) <= 1e-12, f"case {case}"
        assert abs(rank_auc(np.tanh(scores), labels) - base) <= 1e-12, f"case {case}"


def test_calibration_error_hand_value():
    # two bins: [0, .5) holds probs (.2, .4) labels (0, 1) -> gap |.3 - .5| = .2
    # [.5, 1] holds probs (.6, 1.) labels (1, 1) -> gap |.8 - 1.| = .2
    probs = [0.2, 0.4, 0.6, 1.0]
    labels = [False, True, True, True]
    assert calibration_error(probs, labels, n_bins=2) == pytest.approx(0.2, abs=1e-12)
    assert calibration_error([0.5], [True], n_bins=1) == pytest.approx(0.5)
    with pytest.raises(InputError):
        calibration_error([], [])
    with pytest.raises(InputError):
        calibration_error([1.2], [True])
    with pytest.raises(InputError):
        calibration_error([0.5], [True], n_bins=0)


def test_calibration_error_matches_bruteforce():
    rng = np.random.default_rng(72)
    for case in range(100):
        n = int(rng.integers(1, 60))
        probs = rng.random(n)
        labels = rng.random(n) < probs
        for bins in (1, 5, 10):
            want = ece_bruteforce(probs, labels, bins)
            got = calibration_error(probs, labels, n_bins=bins)
            assert got == pytest.approx(want, abs=1e-12), f"case {case} bins {bins}"


def test_permutation_pvalue_on_identical_groups_is_diffuse():
    """Null behavior: with both samples from one distribution, small p
    must stay rare."""
    rng = np.random.default_rng(73)
    low = 0
    for case in range(100):
        pooled = rng.normal(size=24)
        p, _ = permutation_pvalue(
            mean_gap, pooled[:12], pooled[12:], n_perm=199, seed=case
        )
        if p <= 0.05:
            low += 1
    assert low <= 10


def test_permutation_pvalue_separates_shifted_groups():
    rng = np.random.default_rng(74)
    a = rng.normal(size=30) + 3.0
    b = rng.normal(size=30)
    p, observed = permutation_pvalue(mean_gap, a, b, n_perm=999, seed=0)
    assert p <= 0.01
    assert observed == pytest.approx(float(a.mean() - b.mean()))


def test_permutation_pvalue_contract():
    with pytest.raises(InvalidPermCountError):
        permutation_pvalue(mean_gap, [1.0], [2.0], n_perm=50, seed=0)
    with pytest.raises(InputError):
        permutation_pvalue(mean_gap, [], [1.0], n_perm=99, seed=0)
    a = [1.0, 2.0, 5.0]
    b = [0.5, 0.1, 0.2]
    first = permutation_pvalue(mean_gap, a, b, n_perm=199, seed=42)
    second = permutation_pvalue(mean_gap, a, b, n_perm=199, seed=42)
    assert first == second
    assert permutation_pvalue(mean_gap, a, b, n_perm=199, seed=43) != first or True
    p, _ = permutation_pvalue(mean_gap, a, b, n_perm=199, seed=42)
    assert 0.0 < p <= 1.0


def test_label_permutation_constant_scores_hit_midpoint():
    # every shuffle ties the observed statistic, so mid-p counting gives
    # exactly (1 + n/2) / (n + 1)
    values = np.ones(10)
    labels = np.array([True] * 4 + [False] * 6)
    p, observed = label_permutation_pvalue(auc_stat, values, labels, 199, seed=0)
    assert observed == 0.5
    assert p == pytest.approx((1 + 199 / 2) / 200, abs=1e-12)


def test_label_permutation_null_is_roughly_uniform():
    """Mid-p tie handling keeps the null p distribution flat even with
    heavily tied scores."""
    rng = np.random.default_rng(75)
    ps = []
    for case in range(200):
        values = rng.choice([0.0, 0.0, 0.0, 1.0, 2.0], size=30)
        labels = np.zeros(30, dtype=bool)
        labels[rng.choice(30, size=6, replace=False)] = True
        p, _ = label_permutation_pvalue(auc_stat, values, labels, 199, seed=case)
        ps.append(p)
    ps = np.sort(ps)
    grid = (np.arange(1, 201)) / 200
    ks = float(np.max(np.abs(ps - grid)))
    assert ks < 0.12


def test_label_permutation_respects_strata():
    # labels never leave their stratum: a statistic that counts positives
    # in stratum 0 is constant under stratified shuffles
    values = np.arange(12, dtype=float)
    labels = np.array([True, True, False, False] * 3)
    strata = np.array([0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2])

    def positives_in_stratum0(_, shuffled):
        return float(shuffled[:4].sum())

    p, observed = label_permutation_pvalue(
        positives_in_stratum0, values, labels, 199, seed=3, strata=strata
    )
    assert observed == 2.0
    # all permutations tie: p = (1 + n/2)/(n + 1)
    assert p == pytest.approx((1 + 199 / 2) / 200, abs=1e-12)


def test_label_permutation_skips_degenerate_draws():
    def fussy(values, labels):
        # degenerate whenever the two positives land apart in the front pair
        if labels[0] != labels[1]:
            raise SingleClassError("degenerate")
        return float(values[labels].sum())

    values = np.arange(6, dtype=float)
    labels = np.array([True, True, False, False, False, False])
    p, observed = label_permutation_pvalue(fussy, values, labels, 199, seed=1)
    assert observed == 1.0
    assert 0.0 < p <= 1.0


def test_bootstrap_ci_basics():
    rng = np.random.default_rng(76)
    data = rng.normal(loc=5.0, size=80)
    lo, hi = bootstrap_ci(lambda x: float(np.mean(x)), [data], 500, seed=0)
    assert lo <= float(data.mean()) <= hi
    assert lo <= hi
    same = bootstrap_ci(lambda x: float(np.mean(x)), [data], 500, seed=0)
    assert (lo, hi) == same
    const = np.full(30, 2.5)
    clo, chi = bootstrap_ci(lambda x: float(np.mean(x)), [const], 300, seed=1)
    assert clo == chi == 2.5
    with pytest.raises(InvalidBootCountError):
        bootstrap_ci(lambda x: float(np.mean(x)), [data], 50, seed=0)
    with pytest.raises(InputError):
        bootstrap_ci(lambda x: 0.0, [np.array([])], 300, seed=0)
    with pytest.raises(InputError):
        bootstrap_ci(lambda x, y: 0.0, [np.ones(3), np.ones(4)], 300, seed=0)
    with pytest.raises(InputError):
        bootstrap_ci(lambda x: 0.0, [data], 300, seed=0, level=1.5)


def test_bootstrap_ci_joint_resampling():
    # paired arrays must be resampled by the same indices: a statistic of
    # the pairwise difference of identical arrays is exactly zero
    rng = np.random.default_rng(77)
    data = rng.normal(size=50)
    lo, hi = bootstrap_ci(
        lambda x, y: float(np.max(np.abs(x - y))), [data, data.copy()], 300, seed=2
    )
    assert lo == hi == 0.0


def test_bootstrap_ci_rough_coverage():
    """Seeded loop: the 95 percent interval for a mean should cover the
    true value most of the time."""
    rng = np.random.default_rng(78)
    covered = 0
    for case in range(100):
        data = rng.normal(loc=1.0, size=60)
        lo, hi = bootstrap_ci(lambda x: float(np.mean(x)), [data], 300, seed=case)
        if lo <= 1.0 <= hi:
            covered += 1
    assert covered >= 85


def test_quantile_edges_and_strata():
    cov = np.arange(100, dtype=float)
    edges = quantile_edges(cov, 4)
    assert edges.shape == (3,)
    strata = apply_edges(cov, edges)
    assert set(strata) == {0, 1, 2, 3}
    counts = np.bincount(strata)
    assert counts.max() - counts.min() <= 2
    assert np.array_equal(frequency_match(cov, 4), strata)
    with pytest.raises(InputError):
        quantile_edges([], 3)
    with pytest.raises(InputError):
        quantile_edges([1.0], 0)


def test_constant_covariate_collapses_to_unstratified():
    """A constant confound must not change the statistic at all."""
    rng = np.random.default_rng(79)
    for case in range(100):
        n = int(rng.integers(8, 40))
        scores = rng.normal(size=n)
        labels = rng.random(n) < 0.5
        if labels.all() or not labels.any():
            continue
        strata = frequency_match(np.full(n, 7.0), 5)
        assert len(set(strata)) == 1
        got = stratified_auc(scores, labels, strata)
        assert got.auc == rank_auc(scores, labels), f"case {case}"
        assert got.n_strata_used == 1 and got.n_strata_dropped == 0
        one_bin = frequency_match(rng.normal(size=n), 1)
        assert len(set(one_bin)) == 1


def test_stratified_auc_removes_a_constructed_confound():
    # the score is a close proxy for the covariate, and labels depend on
    # the covariate alone. Pooled AUC looks strong; within covariate
    # bins the score carries no residual signal and AUC drops to chance.
    rng = np.random.default_rng(80)
    n = 600
    cov = rng.normal(size=n)
    labels = rng.random(n) < 1.0 / (1.0 + np.exp(-2.5 * cov))
    scores = cov + rng.normal(scale=0.05, size=n)
    pooled = rank_auc(scores, labels)
    assert pooled > 0.75
    strata = frequency_match(cov, 10)
    within = stratified_auc(scores, labels, strata)
    assert within.n_strata_used >= 5
    assert abs(within.auc - 0.5) < 0.1
    assert abs(within.auc - 0.5) < abs(pooled - 0.5)


def test_stratified_auc_drops_single_class_strata():
    # stratum 1 is all-positive and must be dropped; stratum 0 ranks its
    # positive above its negative, so the kept statistic is exactly 1
    scores = np.array([1.0, 2.0, 3.0, 4.0])
    labels = np.array([False, True, True, True])
    strata = np.array([0, 0, 1, 1])
    got = stratified_auc(scores, labels, strata)
    assert got.n_strata_used == 1 and got.n_strata_dropped == 1
    assert got.auc == 1.0
    with pytest.raises(SingleClassError):
        stratified_auc(scores, np.array([True, True, False, False]),
                       np.array([0, 0, 1, 1]))
    with pytest.raises(InputError):
        stratified_auc(scores, labels, np.array([0, 0, 1]))


def test_spearman_matches_scipy():
    rng = np.random.default_rng(81)
    for case in range(100):
        n = int(rng.integers(3, 40))
        a = rng.normal(size=n)
        b = rng.normal(size=n) + 0.5 * a
        want = spearman_oracle(a, b)
        assert spearman(a, b) == pytest.approx(want, abs=1e-12), f"case {case}"
    assert np.isnan(spearman([1.0, 1.0, 1.0], [1.0, 2.0, 3.0]))
    with pytest.raises(InputError):
        spearman([1.0], [2.0])
    with pytest.raises(InputError):
        spearman([1.0, 2.0], [1.0, 2.0, 3.0])


def test_logistic_fit_reaches_gradient_tolerance():
    rng = np.random.default_rng(82)
    x = rng.normal(size=(200, 3))
    true_w = np.array([1.5, -2.0, 0.5])
    probs = 1.0 / (1.0 + np.exp(-(x @ true_w)))
    y = rng.random(200) < probs
    model = fit_logistic(x, y)
    assert model.converged
    p = model.predict_proba(x)
    z = (x - model.feature_mean) / model.feature_scale
    design = np.hstack([np.ones((200, 1)), z])
    grad = design.T @ (p - y) + 1e-6 * model.weights
    assert float(np.abs(grad).max()) < 1e-8
    assert np.all((p > 0.0) & (p < 1.0))
    # better than chance on its own training data
    assert rank_auc(p, y) > 0.7


def test_logistic_constant_column_passes_through():
    x = np.hstack([np.ones((50, 1)), np.arange(50, dtype=float)[:, None]])
    y = np.arange(50) > 24
    model = fit_logistic(x, y)
    assert model.feature_scale[0] == 1.0
    assert np.all(np.isfinite(model.weights))
    with pytest.raises(InputError):
        fit_logistic(np.ones((3, 2)), np.array([True, False]))
    with pytest.raises(InputError):
        fit_logistic(np.ones((0, 2)), np.array([], dtype=bool))


def test_split_half_is_order_free_and_stable():
    ids = [f"node{i:03d}" for i in range(60)]
    fit_idx, eval_idx = split_half(ids)
    assert sorted(fit_idx + eval_idx) == list(range(60))
    assert len(fit_idx) > 0 and len(eval_idx) > 0
    fit_ids = {ids[i] for i in fit_idx}
    rev = list(reversed(ids))
    rev_fit_idx, _ = split_half(rev)
    assert {rev[i] for i in rev_fit_idx} == fit_ids
    again_fit, again_eval = split_half(ids)
    assert again_fit == fit_idx and again_eval == eval_idx


def test_predict_proba_accepts_single_rows():
    model = LogisticModel(
        weights=np.array([0.0, 1.0]),
        feature_mean=np.array([0.0]),
        feature_scale=np.array([1.0]),
        converged=True,
        iterations=1,
    )
    out = model.predict_proba([0.0])
    assert out.shape == (1,)
    assert out[0] == pytest.approx(0.5)
