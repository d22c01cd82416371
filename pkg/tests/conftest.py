from __future__ import annotations

import numpy as np

from substrate import CostMatrix, DiscreteMeasure, Snapshot


def make_snapshot(ids, coords, window: str = "t0") -> Snapshot:
    coords = np.asarray(coords, dtype=float)
    if coords.ndim == 1:
        coords = coords[:, None]
    return Snapshot(window, tuple(ids), coords)


def random_snapshot(seed: int, n: int = 12, dim: int = 3, scale: float = 1.0,
                    window: str = "t0") -> Snapshot:
    rng = np.random.default_rng(seed)
    ids = tuple(f"n{i:03d}" for i in range(n))
    return Snapshot(window, ids, scale * rng.standard_normal((n, dim)))


def measure(atoms, masses) -> DiscreteMeasure:
    return DiscreteMeasure(tuple(atoms), np.asarray(masses, dtype=float))


def line_cost(mu: DiscreteMeasure, nu: DiscreteMeasure, pos_mu, pos_nu,
              metric_safe: bool = True) -> CostMatrix:
    """Absolute-difference costs between 1-d atom positions.

    Rows follow mu's atoms, columns nu's, as w1_exact requires.
    """
    pos_mu = np.asarray(pos_mu, dtype=float)
    pos_nu = np.asarray(pos_nu, dtype=float)
    values = np.abs(pos_mu[:, None] - pos_nu[None, :])
    return CostMatrix(mu.atoms, nu.atoms, values, metric_safe=metric_safe)


def random_measure_pair(rng, max_support: int = 8):
    """Two measures over a shared 1-d atom grid, plus their positions."""
    n = int(rng.integers(2, max_support + 1))
    pos = np.sort(rng.uniform(-10.0, 10.0, size=n))
    atoms = tuple(f"x{i}" for i in range(n))
    a = rng.random(n) + 1e-3
    b = rng.random(n) + 1e-3
    return (
        DiscreteMeasure(atoms, a / a.sum()),
        DiscreteMeasure(atoms, b / b.sum()),
        pos,
    )
