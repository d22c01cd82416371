from __future__ import annotations

import sys

import numpy as np
import pytest

from substrate import (
    ExternalOperator,
    GraphConfig,
    Trajectory,
    affine_op,
    build_graph,
    commutativity_gap,
    compose,
    curvature_profile,
    derive_basins,
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
from substrate.dynamics import halfspace_projection_op
from substrate.errors import InputError, OperatorProtocolError

from conftest import make_snapshot, random_snapshot
from oracles import affine_iterates


def test_commuting_translations_have_zero_gap():
    """Property: translations commute exactly, everywhere."""
    rng = np.random.default_rng(60)
    for case in range(100):
        dim = int(rng.integers(1, 6))
        u = rng.normal(size=dim) * 10
        v = rng.normal(size=dim) * 10
        x = rng.normal(size=dim) * 5
        gap = commutativity_gap(translation_op(u), translation_op(v), x)
        assert gap <= 1e-12, f"case {case}"


def test_scale_translate_gap_is_offset_norm():
    """Closed form: (2x + v) vs (2(x + v)) differ by exactly v."""
    rng = np.random.default_rng(61)
    for case in range(100):
        dim = int(rng.integers(1, 6))
        v = rng.normal(size=dim) * 3
        x = rng.normal(size=dim) * 5
        gap = commutativity_gap(scale_op(2.0), translation_op(v), x)
        assert abs(gap - float(np.linalg.norm(v))) <= 1e-12, f"case {case}"


def test_gap_is_symmetric_in_its_operators():
    rng = np.random.default_rng(62)
    for case in range(100):
        dim = int(rng.integers(2, 5))
        a = affine_op(rng.normal(size=(dim, dim)), rng.normal(size=dim))
        b = affine_op(rng.normal(size=(dim, dim)), rng.normal(size=dim))
        x = rng.normal(size=dim)
        assert commutativity_gap(a, b, x) == commutativity_gap(b, a, x), f"case {case}"


def test_gap_cosine_variant():
    u = translation_op([1.0, 0.0])
    s = scale_op(3.0)
    # both orders land on positively-proportional vectors: cosine gap 0
    assert commutativity_gap(s, u, np.array([1.0, 0.0]), metric="cosine") <= 1e-12
    with pytest.raises(InputError):
        commutativity_gap(
            s, translation_op([-1.0, 0.0]), np.array([1.0, 0.0]), metric="cosine"
        )


def test_iterate_matches_affine_closed_form():
    """Oracle: x_k = f^k x_0 + offset * (f^(k-1) + ... + 1)."""
    rng = np.random.default_rng(63)
    for case in range(100):
        factor = float(rng.choice([0.5, 1.0, 1.7, -0.3]))
        dim = int(rng.integers(1, 4))
        offset = rng.normal(size=dim)
        x0 = rng.normal(size=dim)
        steps = int(rng.integers(1, 9))
        op = affine_op(np.eye(dim) * factor, offset)
        traj = iterate(op, x0, steps)
        want = affine_iterates(factor, offset, x0, steps)
        assert traj.points.shape == (steps + 1, dim)
        assert np.allclose(traj.points, want, atol=1e-9), f"case {case}"


def test_contraction_converges_to_fixed_point():
    # rate-r pull contracts by (1 - r) per step toward the target
    target = np.array([2.0, -1.0])
    op = pull_to_centroid_op(target, 0.5)
    traj = iterate(op, np.array([10.0, 10.0]), 40)
    gaps = np.linalg.norm(traj.points - target, axis=1)
    assert gaps[-1] <= 1e-9
    for a, b in zip(gaps, gaps[1:]):
        assert b <= 0.5 * a + 1e-12


def test_iterate_validates_horizon():
    with pytest.raises(InputError):
        iterate(identity_op(), np.zeros(2), 0)


def test_compose_applies_inner_then_outer():
    op = compose(scale_op(2.0), translation_op([1.0]))
    assert op.apply(np.array([3.0])) == pytest.approx(8.0)
    assert "scale" in op.name and "translate" in op.name


def basin_fixture():
    # two far clusters joined only through the long gap
    snap = make_snapshot(
        ["a0", "a1", "a2", "b0", "b1", "b2"],
        [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [50.0, 0.0], [51.0, 0.0], [50.0, 1.0]],
    )
    g = build_graph(snap, GraphConfig(
        k=2, mode="knn", metric="euclidean", weighting="binary", alpha=0.5
    ))
    prof = curvature_profile(g)
    basins = derive_basins(g, prof, tau=0.0)
    assert basins.n_basins == 2
    return g, basins


def test_switch_rate_counts_label_changes():
    g, basins = basin_fixture()
    jump = translation_op([50.0, 0.0])
    traj = iterate(jump, np.array([0.3, 0.3]), 1)
    labeled = label_trajectory(g, basins, traj)
    assert labeled.basin_labels is not None
    assert switch_rate(labeled) == 1.0
    stay = label_trajectory(g, basins, iterate(identity_op(), np.array([0.3, 0.3]), 5))
    assert switch_rate(stay) == 0.0
    with pytest.raises(InputError):
        switch_rate(Trajectory("raw", np.zeros((3, 2))))


def test_switch_rate_range_and_persistence_range():
    """Property: rates live in [0, 1], persistence in [0, horizon + 1]."""
    g, basins = basin_fixture()
    rng = np.random.default_rng(64)
    for case in range(100):
        sigma = float(rng.uniform(0.0, 30.0))
        op = noisy_drift_op(sigma, int(rng.integers(1 << 30)))
        start = rng.normal(size=2) * 10
        horizon = int(rng.integers(1, 8))
        traj = label_trajectory(g, basins, iterate(op, start, horizon))
        rate = switch_rate(traj)
        assert 0.0 <= rate <= 1.0, f"case {case}"
        pers = perturbation_persistence(
            op, start, rng.normal(size=2), horizon, float(rng.uniform(0, 2))
        )
        assert 0 <= pers <= horizon + 1, f"case {case}"


def test_persistence_closed_forms():
    # identity never closes a gap larger than epsilon
    op = identity_op()
    assert perturbation_persistence(op, np.zeros(2), np.ones(2), 5, 0.1) == 6
    # a zero perturbation is inside any tube at step zero
    assert perturbation_persistence(op, np.zeros(2), np.zeros(2), 5, 0.0) == 0
    # rate-0.5 pull halves the gap each step: ||delta|| = 8 enters eps = 1.1 at k = 3
    pull = pull_to_centroid_op(np.zeros(1), 0.5)
    assert perturbation_persistence(pull, np.array([4.0]), np.array([8.0]), 10, 1.1) == 3
    with pytest.raises(InputError):
        perturbation_persistence(op, np.zeros(1), np.zeros(1), 3, -0.5)


def test_noise_replays_identically_per_step():
    op = noisy_drift_op(0.7, seed=123, drift=[0.1])
    a = iterate(op, np.array([0.0]), 6)
    b = iterate(op, np.array([0.0]), 6)
    assert np.array_equal(a.points, b.points)
    # same step index, different start: the kick is the same draw
    x = op.apply(np.array([0.0]), step=2)
    y = op.apply(np.array([1.0]), step=2)
    assert (y - x) == pytest.approx(1.0, abs=1e-12)


def test_halfspace_projection_is_idempotent():
    op = halfspace_projection_op([1.0, 0.0], 2.0)
    inside = op.apply(np.array([1.0, 5.0]))
    assert np.array_equal(inside, [1.0, 5.0])
    out = op.apply(np.array([7.0, 3.0]))
    assert out == pytest.approx([2.0, 3.0])
    again = op.apply(out)
    assert np.array_equal(again, out)
    with pytest.raises(InputError):
        halfspace_projection_op([0.0, 0.0], 1.0)


def test_snap_ties_break_by_node_id():
    snap = make_snapshot(["z", "a"], [[1.0, 0.0], [-1.0, 0.0]])
    g = build_graph(snap, GraphConfig(
        k=1, mode="knn", metric="euclidean", weighting="binary", alpha=0.5
    ))
    assert g.ids[nearest_node(g, np.zeros(2))] == "a"
    op = snap_to_nearest_op(g)
    assert np.array_equal(op.apply(np.zeros(2)), [-1.0, 0.0])


def test_operator_from_spec_round_trip():
    rng = np.random.default_rng(65)
    x = rng.normal(size=2)
    pairs = [
        ({"kind": "identity"}, identity_op()),
        ({"kind": "translate", "offset": [1.0, -2.0]}, translation_op([1.0, -2.0])),
        ({"kind": "scale", "factor": 0.5}, scale_op(0.5)),
        (
            {"kind": "affine", "matrix": [[0.0, 1.0], [1.0, 0.0]], "offset": [0.5, 0.5]},
            affine_op([[0.0, 1.0], [1.0, 0.0]], [0.5, 0.5]),
        ),
        (
            {"kind": "pull_to_centroid", "centroid": [1.0, 1.0], "rate": 0.25},
            pull_to_centroid_op([1.0, 1.0], 0.25),
        ),
        (
            {"kind": "noisy_drift", "sigma": 0.3, "seed": 7},
            noisy_drift_op(0.3, 7),
        ),
        (
            {"kind": "halfspace_projection", "normal": [1.0, 0.0], "offset": 0.0},
            halfspace_projection_op([1.0, 0.0], 0.0),
        ),
    ]
    for spec, want in pairs:
        got = operator_from_spec(spec)
        assert np.allclose(got.apply(x, 3), want.apply(x, 3)), spec["kind"]
    with pytest.raises(InputError):
        operator_from_spec({"kind": "warp"})
    with pytest.raises(InputError):
        operator_from_spec({"kind": "snap_to_nearest"})
    with pytest.raises(InputError):
        affine_op([[1.0, 0.0]], [0.0])


EXTERNAL_AFFINE = (
    "import sys\n"
    "for line in sys.stdin:\n"
    "    vals = [float(t) for t in line.split()]\n"
    "    out = [2.0 * v + 1.0 for v in vals]\n"
    "    print(' '.join(repr(v) for v in out), flush=True)\n"
)


def test_external_operator_matches_builtin():
    """A child process implementing 2x + 1 must track the builtin."""
    builtin = affine_op(np.eye(2) * 2.0, np.ones(2))
    with ExternalOperator([sys.executable, "-c", EXTERNAL_AFFINE], dim=2) as ext:
        rng = np.random.default_rng(66)
        for _ in range(20):
            x = rng.normal(size=2) * 4
            got = ext.apply(x)
            want = builtin.apply(x)
            assert np.allclose(got, want, atol=1e-6)
        traj_e = iterate(ext, np.array([0.1, -0.2]), 5)
        traj_b = iterate(builtin, np.array([0.1, -0.2]), 5)
        assert np.allclose(traj_e.points, traj_b.points, atol=1e-6)


def test_external_operator_protocol_errors():
    bad_shape = "import sys\n" \
        "for line in sys.stdin:\n" \
        "    print('1.0', flush=True)\n"
    with ExternalOperator([sys.executable, "-c", bad_shape], dim=2) as ext:
        with pytest.raises(OperatorProtocolError):
            ext.apply(np.zeros(2))
    garbled = "import sys\n" \
        "for line in sys.stdin:\n" \
        "    print('spam eggs', flush=True)\n"
    with ExternalOperator([sys.executable, "-c", garbled], dim=2) as ext:
        with pytest.raises(OperatorProtocolError):
            ext.apply(np.zeros(2))
    with ExternalOperator(["/nonexistent_binary_xyz"], dim=1) as ext:
        with pytest.raises(OperatorProtocolError):
            ext.apply(np.zeros(1))
    with pytest.raises(InputError):
        ExternalOperator([])


def test_external_operator_timeout():
    sleeper = "import sys, time\n" \
        "sys.stdin.readline()\n" \
        "time.sleep(60)\n"
    with ExternalOperator([sys.executable, "-c", sleeper], timeout=0.5) as ext:
        with pytest.raises(OperatorProtocolError, match="timed out"):
            ext.apply(np.zeros(2))


def test_label_trajectory_on_random_walks():
    g, basins = basin_fixture()
    op = noisy_drift_op(5.0, seed=9)
    traj = iterate(op, np.array([25.0, 0.0]), 10)
    labeled = label_trajectory(g, basins, traj)
    assert len(labeled.basin_labels) == 11
    assert set(labeled.basin_labels) <= {0, 1}
