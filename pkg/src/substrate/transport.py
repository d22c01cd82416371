"""Discrete probability measures and transport distances between them.

Provides Shannon entropy and Jensen-Shannon divergence (both base 2),
an exact Wasserstein-1 solver backed by a transportation linear program,
and a log-domain Sinkhorn solver for the entropy-regularized objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix

from .errors import (
    CostShapeError,
    InputError,
    NumericalError,
    SolverError,
    SupportCapError,
)

MASS_TOL = 1e-12
DEFAULT_SUPPORT_CAP = 512
SINKHORN_DEFAULT_TOL = 1e-9
SINKHORN_DEFAULT_MAX_ITER = 10_000
SINKHORN_EPSILON_FACTOR = 0.05


@dataclass(frozen=True)
class DiscreteMeasure:
    """Probability measure on finitely many string-labelled atoms.

    Atoms must be unique, masses nonnegative and summing to one within
    1e-12. Atoms carrying exactly zero mass are permitted; canonical()
    strips them.
    """

    atoms: tuple[str, ...]
    masses: np.ndarray

    def __post_init__(self):
        atoms = tuple(str(a) for a in self.atoms)
        masses = np.array(self.masses, dtype=float)
        if masses.ndim != 1 or len(atoms) != masses.shape[0]:
            raise InputError("measure atoms and masses must align 1:1")
        if len(set(atoms)) != len(atoms):
            raise InputError("measure atoms must be unique")
        if not np.all(np.isfinite(masses)):
            raise InputError("measure masses must be finite")
        if np.any(masses < -MASS_TOL):
            raise InputError("measure masses must be nonnegative")
        masses = np.where(masses < 0.0, 0.0, masses)
        total = masses.sum()
        if abs(total - 1.0) > MASS_TOL:
            raise InputError(f"measure masses sum to {total!r}, expected 1")
        masses.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "masses", masses)

    @classmethod
    def from_dict(cls, table: dict[str, float]) -> DiscreteMeasure:
        items = sorted(table.items())
        return cls(tuple(k for k, _ in items), np.array([v for _, v in items]))

    @classmethod
    def point_mass(cls, atom: str) -> DiscreteMeasure:
        return cls((atom,), np.array([1.0]))

    def canonical(self) -> DiscreteMeasure:
        """Drop zero-mass atoms. Keeps atom order."""
        keep = self.masses > 0.0
        if bool(keep.all()):
            return self
        atoms = tuple(a for a, k in zip(self.atoms, keep) if k)
        return DiscreteMeasure(atoms, self.masses[keep])

    def mass_of(self, atom: str) -> float:
        try:
            return float(self.masses[self.atoms.index(atom)])
        except ValueError:
            return 0.0

    def as_dict(self) -> dict[str, float]:
        return {a: float(m) for a, m in zip(self.atoms, self.masses)}

    @property
    def support(self) -> tuple[str, ...]:
        return tuple(a for a, m in zip(self.atoms, self.masses) if m > 0.0)


@dataclass(frozen=True)
class CostMatrix:
    """Ground costs between two atom lists.

    values[i, j] is the cost from row_atoms[i] to col_atoms[j]. Costs are
    finite and nonnegative, and an atom present on both sides must cost
    zero against itself. metric_safe marks costs drawn from a true metric
    (triangle inequality holds), which unlocks the common-mass reduction
    in w1_exact.
    """

    row_atoms: tuple[str, ...]
    col_atoms: tuple[str, ...]
    values: np.ndarray
    metric_safe: bool = False

    def __post_init__(self):
        rows = tuple(str(a) for a in self.row_atoms)
        cols = tuple(str(a) for a in self.col_atoms)
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape != (len(rows), len(cols)):
            raise CostShapeError(
                f"cost matrix shape {values.shape} does not match "
                f"{len(rows)} row atoms x {len(cols)} col atoms"
            )
        if not np.all(np.isfinite(values)):
            raise InputError("cost entries must be finite")
        if np.any(values < 0.0):
            raise InputError("cost entries must be nonnegative")
        col_pos = {a: j for j, a in enumerate(cols)}
        for i, a in enumerate(rows):
            j = col_pos.get(a)
            if j is not None and abs(values[i, j]) > MASS_TOL:
                raise InputError(f"atom {a!r} has nonzero self-cost")
        values.setflags(write=False)
        object.__setattr__(self, "row_atoms", rows)
        object.__setattr__(self, "col_atoms", cols)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class SinkhornResult:
    value: float
    iterations: int
    converged: bool
    epsilon: float
    tol: float
    max_violation: float


def shannon_entropy(mu: DiscreteMeasure) -> float:
    """Entropy in bits; zero-mass atoms contribute nothing."""
    p = mu.masses[mu.masses > 0.0]
    if p.size == 0:
        return 0.0
    return float(-(p * np.log2(p)).sum())


def js_divergence(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Jensen-Shannon divergence in bits, bounded by [0, 1]."""
    atoms = list(mu.atoms)
    seen = set(atoms)
    atoms.extend(a for a in nu.atoms if a not in seen)
    pos = {a: i for i, a in enumerate(atoms)}
    p = np.zeros(len(atoms))
    q = np.zeros(len(atoms))
    for a, m in zip(mu.atoms, mu.masses):
        p[pos[a]] = m
    for a, m in zip(nu.atoms, nu.masses):
        q[pos[a]] = m
    mid = 0.5 * (p + q)

    def _kl(a: np.ndarray, b: np.ndarray) -> float:
        mask = a > 0.0
        return float((a[mask] * np.log2(a[mask] / b[mask])).sum())

    js = 0.5 * _kl(p, mid) + 0.5 * _kl(q, mid)
    return min(max(js, 0.0), 1.0)


def _transport_lp(
    supply: np.ndarray, demand: np.ndarray, costs: np.ndarray
) -> tuple[float, np.ndarray]:
    """Solve min <C, plan> over couplings of supply and demand.

    Inputs are strictly positive and already balanced to within 1e-12;
    demand is rescaled so the equality constraints are consistent to the
    last bit. Returns (optimal value, plan).
    """
    n, m = costs.shape
    if n == 1:
        plan = demand.reshape(1, m).copy()
        return float(costs[0] @ demand), plan
    if m == 1:
        plan = supply.reshape(n, 1).copy()
        return float(costs[:, 0] @ supply), plan
    demand = demand * (supply.sum() / demand.sum())

    row_idx = np.repeat(np.arange(n), m)
    col_idx = np.tile(np.arange(m), n)
    var = np.arange(n * m)
    a_eq = coo_matrix(
        (
            np.ones(2 * n * m),
            (np.concatenate([row_idx, n + col_idx]), np.concatenate([var, var])),
        ),
        shape=(n + m, n * m),
    )
    b_eq = np.concatenate([supply, demand])
    res = linprog(costs.ravel(), A_eq=a_eq.tocsr(), b_eq=b_eq, method="highs")
    if res.status != 0:
        # presolve misreads balanced instances whose masses span many
        # orders of magnitude as infeasible; retry without it
        res = linprog(
            costs.ravel(),
            A_eq=a_eq.tocsr(),
            b_eq=b_eq,
            method="highs",
            options={"presolve": False},
        )
    if res.status != 0:
        raise SolverError(f"transport LP failed (status {res.status}): {res.message}")
    plan = res.x.reshape(n, m)
    return max(float(res.fun), 0.0), plan


def _check_alignment(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostMatrix) -> None:
    if cost.row_atoms != mu.atoms or cost.col_atoms != nu.atoms:
        raise CostShapeError(
            "cost matrix atoms do not match the measures "
            f"({len(cost.row_atoms)}x{len(cost.col_atoms)} vs "
            f"{len(mu.atoms)}x{len(nu.atoms)})"
        )


def _positive_parts(
    mu: DiscreteMeasure, nu: DiscreteMeasure
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Cancel mass shared by atom name; return residual index/mass arrays."""
    col_pos = {a: j for j, a in enumerate(nu.atoms)}
    excess = np.array(mu.masses, dtype=float)
    deficit = np.array(nu.masses, dtype=float)
    for i, a in enumerate(mu.atoms):
        j = col_pos.get(a)
        if j is None:
            continue
        shared = min(excess[i], deficit[j])
        excess[i] -= shared
        deficit[j] -= shared
    rows = np.flatnonzero(excess > MASS_TOL)
    cols = np.flatnonzero(deficit > MASS_TOL)
    return rows, excess[rows], cols, deficit[cols]


def w1_exact(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    cost: CostMatrix,
    support_cap: int = DEFAULT_SUPPORT_CAP,
) -> float:
    """Exact Wasserstein-1 distance between mu and nu.

    The cost matrix must index mu's atoms on rows and nu's atoms on
    columns, in order. When the cost is metric_safe the shared mass is
    cancelled first, which shrinks the program without changing the
    optimum; otherwise the full instance is solved as stated.
    """
    _check_alignment(mu, nu, cost)
    mu_c = mu.canonical()
    nu_c = nu.canonical()
    if len(mu_c.atoms) > support_cap or len(nu_c.atoms) > support_cap:
        raise SupportCapError(
            f"support {max(len(mu_c.atoms), len(nu_c.atoms))} exceeds cap {support_cap}"
        )
    row_keep = [i for i, a in enumerate(mu.atoms) if mu.masses[i] > 0.0]
    col_keep = [j for j, a in enumerate(nu.atoms) if nu.masses[j] > 0.0]
    values = cost.values[np.ix_(row_keep, col_keep)]

    if cost.metric_safe:
        rows, supply, cols, demand = _positive_parts(mu_c, nu_c)
        if rows.size == 0 or cols.size == 0:
            return 0.0
        value, _ = _transport_lp(supply, demand, values[np.ix_(rows, cols)])
        return value

    value, _ = _transport_lp(
        np.asarray(mu_c.masses, dtype=float),
        np.asarray(nu_c.masses, dtype=float),
        values,
    )
    return value


def w1_exact_plan(
    mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostMatrix
) -> tuple[float, dict[tuple[str, str], float]]:
    """Exact solve that also reports the optimal plan, for inspection."""
    _check_alignment(mu, nu, cost)
    mu_c = mu.canonical()
    nu_c = nu.canonical()
    row_keep = [i for i, m in enumerate(mu.masses) if m > 0.0]
    col_keep = [j for j, m in enumerate(nu.masses) if m > 0.0]
    values = cost.values[np.ix_(row_keep, col_keep)]
    value, plan = _transport_lp(
        np.asarray(mu_c.masses, dtype=float),
        np.asarray(nu_c.masses, dtype=float),
        values,
    )
    table: dict[tuple[str, str], float] = {}
    for i, a in enumerate(mu_c.atoms):
        for j, b in enumerate(nu_c.atoms):
            if plan[i, j] > MASS_TOL:
                table[(a, b)] = float(plan[i, j])
    return value, table


def transport_cost_core(
    supply: np.ndarray,
    demand: np.ndarray,
    costs: np.ndarray,
    reduce_shared: bool = False,
) -> float:
    """Index-based exact solve used by graph-side callers.

    supply and demand live on the same indexing of costs' rows and cols
    when reduce_shared is set, in which case entries common to both are
    cancelled first (valid only for metric ground costs).
    """
    supply = np.asarray(supply, dtype=float)
    demand = np.asarray(demand, dtype=float)
    if reduce_shared:
        if costs.shape[0] != costs.shape[1]:
            raise NumericalError("shared-mass reduction needs square costs")
        diff = supply - demand
        rows = np.flatnonzero(diff > MASS_TOL)
        cols = np.flatnonzero(-diff > MASS_TOL)
        if rows.size == 0 or cols.size == 0:
            return 0.0
        value, _ = _transport_lp(diff[rows], -diff[cols], costs[np.ix_(rows, cols)])
        return value
    rows = np.flatnonzero(supply > 0.0)
    cols = np.flatnonzero(demand > 0.0)
    value, _ = _transport_lp(supply[rows], demand[cols], costs[np.ix_(rows, cols)])
    return value


def w1_sinkhorn(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    cost: CostMatrix,
    epsilon: float | None = None,
    max_iter: int = SINKHORN_DEFAULT_MAX_ITER,
    tol: float = SINKHORN_DEFAULT_TOL,
) -> SinkhornResult:
    """Entropy-regularized transport cost via log-domain matrix scaling.

    Minimizes <C, plan> - epsilon * H(plan) and reports <C, plan*> at the
    scaled optimum. Defaults: epsilon = 0.05 * median(cost entries),
    falling back to 0.05 * max when the median vanishes. One iteration is
    a full row+column potential sweep; convergence is declared when the
    worst marginal violation drops below tol.
    """
    _check_alignment(mu, nu, cost)
    if epsilon is not None and not epsilon > 0.0:
        raise NumericalError(f"epsilon must be positive, got {epsilon!r}")
    if max_iter < 1:
        raise NumericalError("max_iter must be at least 1")
    mu_c = mu.canonical()
    nu_c = nu.canonical()
    row_keep = [i for i, m in enumerate(mu.masses) if m > 0.0]
    col_keep = [j for j, m in enumerate(nu.masses) if m > 0.0]
    costs = cost.values[np.ix_(row_keep, col_keep)]

    if epsilon is None:
        med = float(np.median(costs))
        scale = med if med > 0.0 else float(costs.max())
        if scale <= 0.0:
            # all costs zero: any coupling is optimal at zero cost
            return SinkhornResult(0.0, 0, True, 0.0, tol, 0.0)
        epsilon = SINKHORN_EPSILON_FACTOR * scale

    a = np.asarray(mu_c.masses, dtype=float)
    b = np.asarray(nu_c.masses, dtype=float)
    log_a = np.log(a)
    log_b = np.log(b)
    f = np.zeros(a.shape[0])
    g = np.zeros(b.shape[0])
    scaled = -costs / epsilon

    def _logsumexp(mat: np.ndarray, axis: int) -> np.ndarray:
        peak = mat.max(axis=axis, keepdims=True)
        out = peak.squeeze(axis) + np.log(
            np.exp(mat - peak).sum(axis=axis)
        )
        return out

    iterations = 0
    violation = np.inf
    converged = False
    while iterations < max_iter:
        iterations += 1
        kernel = scaled + (f[:, None] + g[None, :]) / epsilon
        f = f + epsilon * (log_a - _logsumexp(kernel, axis=1))
        kernel = scaled + (f[:, None] + g[None, :]) / epsilon
        g = g + epsilon * (log_b - _logsumexp(kernel, axis=0))
        plan = np.exp(scaled + (f[:, None] + g[None, :]) / epsilon)
        violation = float(np.abs(plan.sum(axis=1) - a).max())
        if violation < tol:
            converged = True
            break
    plan = np.exp(scaled + (f[:, None] + g[None, :]) / epsilon)
    value = float((plan * costs).sum())
    return SinkhornResult(value, iterations, converged, float(epsilon), tol, violation)
