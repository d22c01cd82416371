from __future__ import annotations

import numpy as np
import pytest

from substrate import CostMatrix, DiscreteMeasure, js_divergence, shannon_entropy, w1_exact, w1_exact_plan, w1_sinkhorn
from substrate.errors import CostShapeError, InputError, SupportCapError

from conftest import line_cost, measure, random_measure_pair
from oracles import entropy_oracle, js_oracle, transport_bruteforce, w1_1d_quantile


def test_entropy_frozen_values():
    assert shannon_entropy(measure(["a", "b"], [0.25, 0.75])) == pytest.approx(
        0.8112781244591328, abs=1e-12
    )
    assert shannon_entropy(measure(["a"], [1.0])) == 0.0
    assert shannon_entropy(measure(["a", "b"], [0.5, 0.5])) == pytest.approx(1.0, abs=1e-12)
    # zero-mass atoms contribute nothing
    assert shannon_entropy(measure(["a", "b", "c"], [0.25, 0.75, 0.0])) == pytest.approx(
        0.8112781244591328, abs=1e-12
    )


def test_entropy_matches_scipy_oracle():
    rng = np.random.default_rng(11)
    for _ in range(100):
        n = int(rng.integers(1, 9))
        m = rng.random(n) + 1e-6
        m /= m.sum()
        mu = measure([f"x{i}" for i in range(n)], m)
        assert shannon_entropy(mu) == pytest.approx(entropy_oracle(m), abs=1e-12)


def test_js_frozen_values():
    mu = measure(["a", "b"], [0.5, 0.5])
    nu = measure(["a", "b"], [0.25, 0.75])
    assert js_divergence(mu, nu) == pytest.approx(0.0487949406953986, abs=1e-12)
    # disjoint supports saturate the bound
    assert js_divergence(measure(["a"], [1.0]), measure(["b"], [1.0])) == pytest.approx(
        1.0, abs=1e-12
    )


def test_js_matches_scipy_oracle_on_shared_support():
    rng = np.random.default_rng(12)
    for _ in range(100):
        n = int(rng.integers(2, 9))
        p = rng.random(n) + 1e-6
        q = rng.random(n) + 1e-6
        p /= p.sum()
        q /= q.sum()
        atoms = [f"x{i}" for i in range(n)]
        assert js_divergence(measure(atoms, p), measure(atoms, q)) == pytest.approx(
            js_oracle(p, q), abs=1e-12
        )


def test_js_symmetry_and_identity_property():
    """Invariance suite: symmetric in its arguments, zero iff equal."""
    rng = np.random.default_rng(13)
    for case in range(120):
        mu, nu, _ = random_measure_pair(rng)
        d_ab = js_divergence(mu, nu)
        d_ba = js_divergence(nu, mu)
        assert abs(d_ab - d_ba) <= 1e-14, f"case {case}"
        assert -1e-15 <= d_ab <= 1.0 + 1e-12, f"case {case}"
        assert js_divergence(mu, mu) <= 1e-15, f"case {case}"
        if d_ab <= 1e-15:
            assert np.allclose(mu.masses, nu.masses, atol=1e-12), f"case {case}"


def test_js_partial_overlap_is_symmetric():
    rng = np.random.default_rng(14)
    for case in range(100):
        n_a = int(rng.integers(1, 6))
        n_b = int(rng.integers(1, 6))
        shared = int(rng.integers(0, min(n_a, n_b) + 1))
        atoms_a = [f"s{i}" for i in range(shared)] + [f"a{i}" for i in range(n_a - shared)]
        atoms_b = [f"s{i}" for i in range(shared)] + [f"b{i}" for i in range(n_b - shared)]
        a = rng.random(n_a) + 1e-6
        b = rng.random(n_b) + 1e-6
        mu = measure(atoms_a, a / a.sum())
        nu = measure(atoms_b, b / b.sum())
        assert abs(js_divergence(mu, nu) - js_divergence(nu, mu)) <= 1e-14, f"case {case}"


def test_measure_validation():
    with pytest.raises(InputError):
        measure(["a", "b"], [0.6, 0.6])
    with pytest.raises(InputError):
        measure(["a", "a"], [0.5, 0.5])
    with pytest.raises(InputError):
        measure(["a", "b"], [1.2, -0.2])


def test_measure_canonical_strips_zero_atoms_and_conserves_mass():
    rng = np.random.default_rng(15)
    for _ in range(100):
        n = int(rng.integers(2, 9))
        m = rng.random(n)
        m[rng.integers(0, n)] = 0.0
        m /= m.sum()
        mu = measure([f"x{i}" for i in range(n)], m)
        canon = mu.canonical()
        assert all(v > 0.0 for v in canon.masses)
        assert canon.masses.sum() == pytest.approx(1.0, abs=1e-12)


def test_w1_frozen_2x2():
    mu = measure(["r0", "r1"], [0.7, 0.3])
    nu = measure(["c0", "c1"], [0.4, 0.6])
    cost = CostMatrix(mu.atoms, nu.atoms, np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert w1_exact(mu, nu, cost) == pytest.approx(0.3, abs=1e-12)


def test_w1_closed_form_point_masses():
    mu = measure(["p"], [1.0])
    nu = measure(["q0", "q1"], [0.25, 0.75])
    cost = CostMatrix(mu.atoms, nu.atoms, np.array([[2.0, 4.0]]))
    assert w1_exact(mu, nu, cost) == pytest.approx(0.25 * 2.0 + 0.75 * 4.0, abs=1e-12)


def test_w1_identity_is_zero():
    rng = np.random.default_rng(16)
    for _ in range(30):
        mu, _, pos = random_measure_pair(rng)
        cost = line_cost(mu, mu, pos, pos)
        assert w1_exact(mu, mu, cost) <= 1e-12


def test_w1_matches_1d_quantile_oracle():
    rng = np.random.default_rng(17)
    for case in range(150):
        if case % 2 == 0:
            mu, nu, pos = random_measure_pair(rng)
            value = w1_exact(mu, nu, line_cost(mu, nu, pos, pos))
            expect = w1_1d_quantile(pos, mu.masses, pos, nu.masses)
        else:
            n_a = int(rng.integers(1, 9))
            n_b = int(rng.integers(1, 9))
            pos_a = rng.uniform(-10, 10, n_a)
            pos_b = rng.uniform(-10, 10, n_b)
            a = rng.random(n_a) + 1e-3
            b = rng.random(n_b) + 1e-3
            mu = measure([f"a{i}" for i in range(n_a)], a / a.sum())
            nu = measure([f"b{i}" for i in range(n_b)], b / b.sum())
            value = w1_exact(mu, nu, line_cost(mu, nu, pos_a, pos_b))
            expect = w1_1d_quantile(pos_a, mu.masses, pos_b, nu.masses)
        assert value == pytest.approx(expect, abs=1e-9), f"case {case}"


def test_w1_matches_bruteforce_vertices():
    rng = np.random.default_rng(18)
    for case in range(60):
        m, n = (2, 2) if case % 2 == 0 else (2, 3)
        a = rng.random(m) + 1e-3
        b = rng.random(n) + 1e-3
        a /= a.sum()
        b /= b.sum()
        cost = rng.uniform(0.0, 5.0, (m, n))
        mu = measure([f"a{i}" for i in range(m)], a)
        nu = measure([f"b{i}" for i in range(n)], b)
        cm = CostMatrix(mu.atoms, nu.atoms, cost)
        assert w1_exact(mu, nu, cm) == pytest.approx(
            transport_bruteforce(a, b, cost), abs=1e-9
        ), f"case {case}"


def test_w1_triangle_inequality_on_common_support():
    rng = np.random.default_rng(19)
    for case in range(100):
        n = int(rng.integers(2, 7))
        pos = np.sort(rng.uniform(-5, 5, n))
        atoms = [f"x{i}" for i in range(n)]
        masses = []
        for _ in range(3):
            w = rng.random(n) + 1e-3
            masses.append(w / w.sum())
        mu, nu, rho = (measure(atoms, m) for m in masses)
        cost = line_cost(mu, nu, pos, pos)
        d_ab = w1_exact(mu, nu, cost)
        d_bc = w1_exact(nu, rho, cost)
        d_ac = w1_exact(mu, rho, cost)
        assert d_ac <= d_ab + d_bc + 1e-9, f"case {case}"


def test_w1_plan_marginals_and_value():
    rng = np.random.default_rng(20)
    for _ in range(30):
        mu, nu, pos = random_measure_pair(rng, max_support=6)
        cost = line_cost(mu, nu, pos, pos)
        value, plan = w1_exact_plan(mu, nu, cost)
        row = {a: 0.0 for a in mu.atoms}
        col = {a: 0.0 for a in nu.atoms}
        total = 0.0
        pos_of = {a: p for a, p in zip(mu.atoms, pos)}
        for (src, dst), mass in plan.items():
            assert mass > 0.0
            row[src] += mass
            col[dst] += mass
            total += mass * abs(pos_of[src] - pos_of[dst])
        for a, m in zip(mu.atoms, mu.masses):
            assert row[a] == pytest.approx(float(m), abs=1e-9)
        for a, m in zip(nu.atoms, nu.masses):
            assert col[a] == pytest.approx(float(m), abs=1e-9)
        assert total == pytest.approx(value, abs=1e-9)


def test_w1_cost_validation():
    mu = measure(["a", "b"], [0.5, 0.5])
    nu = measure(["c"], [1.0])
    with pytest.raises(CostShapeError):
        CostMatrix(("a",), ("c",), np.array([[1.0, 2.0]]))
    good = CostMatrix(("x", "y"), ("c",), np.array([[1.0], [2.0]]))
    with pytest.raises(CostShapeError):
        w1_exact(mu, nu, good)
    with pytest.raises(InputError):
        CostMatrix(("a",), ("c",), np.array([[-1.0]]))
    # an atom on both sides must cost zero against itself
    with pytest.raises(InputError):
        CostMatrix(("a",), ("a",), np.array([[0.5]]))


def test_w1_support_cap():
    n = 40
    atoms_a = [f"a{i}" for i in range(n)]
    atoms_b = [f"b{i}" for i in range(n)]
    mu = measure(atoms_a, np.full(n, 1.0 / n))
    nu = measure(atoms_b, np.full(n, 1.0 / n))
    cost = CostMatrix(mu.atoms, nu.atoms, np.ones((n, n)))
    with pytest.raises(SupportCapError):
        w1_exact(mu, nu, cost, support_cap=32)


def test_metric_safe_reduction_matches_full_solve():
    """Cancelling shared mass must not change the optimum on a metric."""
    rng = np.random.default_rng(21)
    for case in range(60):
        mu, nu, pos = random_measure_pair(rng)
        safe = w1_exact(mu, nu, line_cost(mu, nu, pos, pos, metric_safe=True))
        full = w1_exact(mu, nu, line_cost(mu, nu, pos, pos, metric_safe=False))
        assert safe == pytest.approx(full, abs=1e-9), f"case {case}"


def test_sinkhorn_upper_bounds_exact_and_tightens():
    """The entropic plan can only cost more; shrinking epsilon closes the gap."""
    rng = np.random.default_rng(22)
    for case in range(25):
        n_a = int(rng.integers(3, 11))
        n_b = int(rng.integers(3, 11))
        pos_a = rng.uniform(-8, 8, n_a)
        pos_b = rng.uniform(-8, 8, n_b)
        a = rng.random(n_a) + 1e-3
        b = rng.random(n_b) + 1e-3
        mu = measure([f"a{i}" for i in range(n_a)], a / a.sum())
        nu = measure([f"b{i}" for i in range(n_b)], b / b.sum())
        cost = line_cost(mu, nu, pos_a, pos_b)
        exact = w1_exact(mu, nu, cost)
        med = float(np.median(cost.values))
        errors = []
        for frac in (0.5, 0.1, 0.02):
            res = w1_sinkhorn(mu, nu, cost, epsilon=frac * med)
            assert res.converged, f"case {case} eps={frac}"
            # the reported plan is feasible only up to max_violation per
            # marginal, which can shave that much times the cost scale
            slack = 1e-9 + res.max_violation * float(cost.values.max()) * (n_a + n_b)
            assert res.value >= exact - slack, f"case {case} eps={frac}"
            errors.append(abs(res.value - exact))
        assert errors[0] >= errors[1] - 1e-12, f"case {case}"
        assert errors[1] >= errors[2] - 1e-12, f"case {case}"


def test_sinkhorn_result_records_its_knobs():
    mu = measure(["a0", "a1"], [0.5, 0.5])
    nu = measure(["b0", "b1"], [0.3, 0.7])
    cost = line_cost(mu, nu, [0.0, 1.0], [0.2, 0.9])
    res = w1_sinkhorn(mu, nu, cost, epsilon=0.05, max_iter=5000, tol=1e-9)
    assert res.epsilon == 0.05
    assert res.tol == 1e-9
    assert 1 <= res.iterations <= 5000
    assert res.max_violation <= 1e-9


def test_sinkhorn_default_epsilon_from_median_cost():
    mu = measure(["a0", "a1"], [0.5, 0.5])
    nu = measure(["b0", "b1"], [0.3, 0.7])
    cost = line_cost(mu, nu, [0.0, 1.0], [0.2, 0.9])
    res = w1_sinkhorn(mu, nu, cost)
    assert res.epsilon == pytest.approx(0.05 * float(np.median(cost.values)), rel=1e-12)
