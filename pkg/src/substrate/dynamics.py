"""Recursive update operators acting on embedding space.

Operators map a vector (plus a step counter, so stochastic operators can
replay exactly) to a vector. Builtins cover identity, translation,
affine maps, pull-to-centroid, seeded noisy drift, half-space
projection, and snap-to-nearest-node. External operators speak a line
protocol over a child process: one whitespace-separated vector in, one
vector out, flushed per line.
"""

from __future__ import annotations

import os
import selectors
import subprocess
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import SubstrateGraph
from .curvature import BasinPartition, basin_centroids
from .errors import (
    DimensionMismatchError,
    InputError,
    OperatorProtocolError,
)

EXTERNAL_TIMEOUT = 30.0


class Operator:
    """Base interface: apply(vector, step) -> vector."""

    name: str = "operator"
    dim: int | None = None

    def apply(self, x: np.ndarray, step: int = 0) -> np.ndarray:
        raise NotImplementedError

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise InputError("operators act on single vectors")
        if self.dim is not None and x.shape[0] != self.dim:
            raise DimensionMismatchError(
                f"operator {self.name} expects dim {self.dim}, got {x.shape[0]}"
            )
        return x


class BuiltinOperator(Operator):
    def __init__(
        self,
        name: str,
        fn: Callable[[np.ndarray, int], np.ndarray],
        dim: int | None = None,
    ):
        self.name = name
        self.dim = dim
        self._fn = fn

    def apply(self, x: np.ndarray, step: int = 0) -> np.ndarray:
        x = self._check(x)
        out = np.asarray(self._fn(x, step), dtype=float)
        if out.shape != x.shape:
            raise OperatorProtocolError(
                f"operator {self.name} changed dimension {x.shape} -> {out.shape}"
            )
        return out

    def __repr__(self) -> str:
        return f"BuiltinOperator({self.name})"


def identity_op() -> BuiltinOperator:
    return BuiltinOperator("identity", lambda x, _: x.copy())


def translation_op(offset) -> BuiltinOperator:
    u = np.asarray(offset, dtype=float)
    return BuiltinOperator("translate", lambda x, _: x + u, dim=u.shape[0])


def scale_op(factor: float) -> BuiltinOperator:
    return BuiltinOperator("scale", lambda x, _: factor * x)


def affine_op(matrix, offset) -> BuiltinOperator:
    a = np.asarray(matrix, dtype=float)
    b = np.asarray(offset, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or b.shape != (a.shape[0],):
        raise InputError("affine operator needs a square matrix and matching offset")
    return BuiltinOperator("affine", lambda x, _: a @ x + b, dim=a.shape[0])


def pull_to_centroid_op(centroid, rate: float) -> BuiltinOperator:
    if not 0.0 <= rate <= 1.0:
        raise InputError(f"pull rate must lie in [0, 1], got {rate!r}")
    c = np.asarray(centroid, dtype=float)
    return BuiltinOperator(
        "pull_to_centroid", lambda x, _: x + rate * (c - x), dim=c.shape[0]
    )


def noisy_drift_op(sigma: float, seed: int, drift=None) -> BuiltinOperator:
    """Gaussian kick per step. The generator is re-derived from
    (seed, step) on every call, so perturbed and unperturbed runs see
    identical noise at identical steps."""
    if sigma < 0.0:
        raise InputError("sigma must be nonnegative")

    def _fn(x: np.ndarray, step: int) -> np.ndarray:
        rng = np.random.default_rng((int(seed), int(step)))
        out = x + rng.normal(0.0, sigma, size=x.shape[0]) if sigma > 0 else x.copy()
        if drift is not None:
            out = out + np.asarray(drift, dtype=float)
        return out

    return BuiltinOperator("noisy_drift", _fn)


def halfspace_projection_op(normal, offset: float) -> BuiltinOperator:
    """Project onto the half-space normal . x <= offset."""
    u = np.asarray(normal, dtype=float)
    norm2 = float(u @ u)
    if norm2 == 0.0:
        raise InputError("projection normal must be nonzero")

    def _fn(x: np.ndarray, _: int) -> np.ndarray:
        slack = float(u @ x) - offset
        if slack <= 0.0:
            return x.copy()
        return x - (slack / norm2) * u

    return BuiltinOperator("halfspace_projection", _fn, dim=u.shape[0])


def snap_to_nearest_op(graph: SubstrateGraph) -> BuiltinOperator:
    """Replace a point with the embedding of its nearest node."""

    def _fn(x: np.ndarray, _: int) -> np.ndarray:
        idx = nearest_node(graph, x)
        return graph.snapshot.vectors[idx].copy()

    return BuiltinOperator("snap_to_nearest", _fn, dim=graph.snapshot.dim)


class ComposedOperator(Operator):
    """Right-to-left composition: (outer . inner)(x) = outer(inner(x))."""

    def __init__(self, outer: Operator, inner: Operator):
        if (
            outer.dim is not None
            and inner.dim is not None
            and outer.dim != inner.dim
        ):
            raise DimensionMismatchError(
                f"cannot compose dims {outer.dim} and {inner.dim}"
            )
        self.outer = outer
        self.inner = inner
        self.name = f"compose({outer.name},{inner.name})"
        self.dim = outer.dim if outer.dim is not None else inner.dim

    def apply(self, x: np.ndarray, step: int = 0) -> np.ndarray:
        return self.outer.apply(self.inner.apply(x, step), step)


def compose(outer: Operator, inner: Operator) -> ComposedOperator:
    return ComposedOperator(outer, inner)


class ExternalOperator(Operator):
    """Child-process operator speaking one vector per line.

    The child is spawned on first use and kept alive across calls. A
    crash, malformed reply, or stall past the timeout raises
    OperatorProtocolError with whatever stderr said.
    """

    def __init__(
        self,
        command: tuple[str, ...] | list[str],
        dim: int | None = None,
        timeout: float = EXTERNAL_TIMEOUT,
    ):
        if not command:
            raise InputError("external operator needs a command")
        self.command = tuple(str(c) for c in command)
        self.name = f"external({self.command[0]})"
        self.dim = dim
        self.timeout = float(timeout)
        self._proc: subprocess.Popen | None = None
        self._buffer = b""

    def _ensure(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            try:
                self._proc = subprocess.Popen(
                    self.command,
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    stderr=subprocess.PIPE,
                )
            except OSError as exc:
                raise OperatorProtocolError(f"cannot spawn {self.command}: {exc}")
            self._buffer = b""
        return self._proc

    def _read_line(self, proc: subprocess.Popen) -> str:
        fd = proc.stdout.fileno()
        sel = selectors.DefaultSelector()
        sel.register(fd, selectors.EVENT_READ)
        deadline = time.monotonic() + self.timeout
        try:
            while b"\n" not in self._buffer:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise OperatorProtocolError(
                        f"{self.name} timed out after {self.timeout}s"
                    )
                if not sel.select(remaining):
                    continue
                chunk = os.read(fd, 65536)
                if not chunk:
                    err = b""
                    if proc.poll() is not None and proc.stderr is not None:
                        try:
                            err = proc.stderr.read() or b""
                        except Exception:
                            pass
                    raise OperatorProtocolError(
                        f"{self.name} closed its output"
                        + (f": {err.decode(errors='replace').strip()}" if err else "")
                    )
                self._buffer += chunk
        finally:
            sel.close()
        line, self._buffer = self._buffer.split(b"\n", 1)
        return line.decode("utf-8", errors="replace")

    def apply(self, x: np.ndarray, step: int = 0) -> np.ndarray:
        x = self._check(x)
        proc = self._ensure()
        line = " ".join(repr(float(v)) for v in x) + "\n"
        try:
            proc.stdin.write(line.encode("utf-8"))
            proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise OperatorProtocolError(f"{self.name} rejected input: {exc}")
        reply = self._read_line(proc)
        try:
            out = np.array([float(tok) for tok in reply.split()], dtype=float)
        except ValueError:
            raise OperatorProtocolError(
                f"{self.name} replied with non-numeric data: {reply[:80]!r}"
            )
        if out.shape != x.shape:
            raise OperatorProtocolError(
                f"{self.name} replied with {out.shape[0]} values, expected {x.shape[0]}"
            )
        if not np.all(np.isfinite(out)):
            raise OperatorProtocolError(f"{self.name} replied with non-finite values")
        return out

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.terminate()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
        self._proc = None

    def __enter__(self) -> ExternalOperator:
        return self

    def __exit__(self, *exc) -> None:
        self.close()


@dataclass(frozen=True)
class Trajectory:
    operator_name: str
    points: np.ndarray
    basin_labels: tuple[int, ...] | None = None

    @property
    def horizon(self) -> int:
        return int(self.points.shape[0] - 1)


def iterate(op: Operator, start, horizon: int) -> Trajectory:
    """Apply op horizon times, keeping every visited point."""
    if horizon < 1:
        raise InputError(f"horizon must be at least 1, got {horizon!r}")
    x = np.asarray(start, dtype=float)
    points = [x.copy()]
    for step in range(horizon):
        x = op.apply(x, step)
        points.append(np.asarray(x, dtype=float).copy())
    return Trajectory(operator_name=op.name, points=np.stack(points))


def nearest_node(graph: SubstrateGraph, point) -> int:
    """Index of the nearest node under the graph's metric, ties by id."""
    point = np.asarray(point, dtype=float)
    if graph.config.metric == "euclidean":
        d = np.linalg.norm(graph.snapshot.vectors - point, axis=1)
    else:
        norms = np.linalg.norm(graph.snapshot.vectors, axis=1)
        pn = np.linalg.norm(point)
        if pn == 0.0 or np.any(norms == 0.0):
            raise InputError("zero vector in nearest-node lookup under cosine")
        d = 1.0 - (graph.snapshot.vectors @ point) / (norms * pn)
    best = np.flatnonzero(d == d.min())
    if best.size == 1:
        return int(best[0])
    return int(min(best, key=lambda i: graph.ids[i]))


def label_trajectory(
    graph: SubstrateGraph, basins: BasinPartition, traj: Trajectory
) -> Trajectory:
    labels = tuple(
        basins.assignment[graph.ids[nearest_node(graph, p)]] for p in traj.points
    )
    return Trajectory(traj.operator_name, traj.points, labels)


def switch_rate(traj: Trajectory) -> float:
    """Fraction of steps that change basin label."""
    if traj.basin_labels is None:
        raise InputError("trajectory has no basin labels; label it first")
    labels = traj.basin_labels
    if len(labels) < 2:
        return 0.0
    changes = sum(1 for a, b in zip(labels, labels[1:]) if a != b)
    return changes / (len(labels) - 1)


def perturbation_persistence(
    op: Operator,
    start,
    delta,
    horizon: int,
    epsilon: float,
) -> int:
    """Steps until a perturbed trajectory re-enters the epsilon-tube.

    Runs the operator from start and from start + delta with shared step
    indices (so seeded noise cancels), and returns the first step k with
    ||x_k - x'_k|| <= epsilon. Returns horizon + 1 if that never happens.
    """
    if epsilon < 0.0:
        raise InputError("epsilon must be nonnegative")
    base = iterate(op, start, horizon).points
    pert = iterate(op, np.asarray(start, dtype=float) + np.asarray(delta, dtype=float), horizon).points
    gaps = np.linalg.norm(base - pert, axis=1)
    hits = np.flatnonzero(gaps <= epsilon)
    if hits.size == 0:
        return horizon + 1
    return int(hits[0])


def commutativity_gap(
    op_a: Operator, op_b: Operator, x, metric: str = "euclidean"
) -> float:
    """Distance between (a . b)(x) and (b . a)(x) at step 0."""
    x = np.asarray(x, dtype=float)
    ab = op_a.apply(op_b.apply(x, 0), 0)
    ba = op_b.apply(op_a.apply(x, 0), 0)
    if metric == "euclidean":
        return float(np.linalg.norm(ab - ba))
    na, nb = np.linalg.norm(ab), np.linalg.norm(ba)
    if na == 0.0 or nb == 0.0:
        raise InputError("zero vector in commutativity gap under cosine")
    return float(min(max(1.0 - float(ab @ ba) / (na * nb), 0.0), 2.0))


OPERATOR_KINDS = (
    "identity",
    "translate",
    "scale",
    "affine",
    "pull_to_centroid",
    "noisy_drift",
    "halfspace_projection",
    "snap_to_nearest",
    "external",
)


def operator_from_spec(
    spec: dict, graph: SubstrateGraph | None = None
) -> Operator:
    """Build an operator from a flat description, as the CLI passes it.

    Expected keys by kind:
      translate: offset (list)        scale: factor
      affine: matrix (nested list), offset
      pull_to_centroid: centroid, rate
      noisy_drift: sigma, seed, optional drift
      halfspace_projection: normal, offset
      snap_to_nearest: (needs graph)  external: command (list), optional timeout
    """
    kind = spec.get("kind")
    if kind == "identity":
        return identity_op()
    if kind == "translate":
        return translation_op(spec["offset"])
    if kind == "scale":
        return scale_op(float(spec["factor"]))
    if kind == "affine":
        return affine_op(spec["matrix"], spec["offset"])
    if kind == "pull_to_centroid":
        return pull_to_centroid_op(spec["centroid"], float(spec["rate"]))
    if kind == "noisy_drift":
        return noisy_drift_op(
            float(spec["sigma"]), int(spec["seed"]), spec.get("drift")
        )
    if kind == "halfspace_projection":
        return halfspace_projection_op(spec["normal"], float(spec["offset"]))
    if kind == "snap_to_nearest":
        if graph is None:
            raise InputError("snap_to_nearest needs a graph")
        return snap_to_nearest_op(graph)
    if kind == "external":
        return ExternalOperator(
            spec["command"], dim=spec.get("dim"), timeout=spec.get("timeout", EXTERNAL_TIMEOUT)
        )
    raise InputError(f"unknown operator kind {kind!r}; expected one of {OPERATOR_KINDS}")
