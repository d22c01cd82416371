"""Run configuration, hashing, and artifact writers.

Reports embed the effective configuration hash and root seed in a
comment preamble so any CSV/JSON on disk can be traced to the exact run
that produced it. Floats are rendered with repr, which round-trips
exactly, keeping re-runs byte-identical. The manifest is the one output
that is not byte-stable (it records wall-clock time).
"""

from __future__ import annotations

import hashlib
import json
import platform
import sys
from dataclasses import asdict, dataclass, fields
from typing import Any

import numpy as np
import scipy

from .errors import ConfigError, InputError
from .seeding import (
    STREAM_BOOT,
    STREAM_ENSEMBLE,
    STREAM_PERM,
    STREAM_PLACEBO,
    STREAM_SYNTH,
    STREAM_TRIALS,
    substream_seed,
)

PACKAGE_VERSION = "0.1.0"


@dataclass
class RunConfig:
    """Every knob the command line accepts, with defaults.

    The full set (not just the fields a given command reads) is hashed
    and serialized into each report, so two artifacts with equal hashes
    came from interchangeable runs.
    """

    # graph construction
    k: int = 10
    mode: str = "knn"
    metric: str = "euclidean"
    weighting: str = "binary"
    alpha: float = 0.5
    heat_sigma: float | None = None
    # curvature / basins
    pairs_mode: str = "edges"
    tau: float = 0.0
    trials: int = 100
    # drift
    drift_variant: str = "euclidean"
    # statistics
    q: float = 0.9
    n_bins: int = 5
    n_perm: int = 999
    n_boot: int = 1000
    level: float = 0.95
    seed: int = 0
    committed: bool = False
    placebo: bool = False
    # dynamics
    horizon: int = 30
    n_traj: int = 40
    pull_rate: float = 0.5
    noise_sigma: float = 0.5
    # sinkhorn
    sinkhorn_epsilon: float | None = None
    sinkhorn_max_iter: int = 10000
    sinkhorn_tol: float = 1e-9
    # synthetic
    synth_basins: int = 2
    synth_size: int = 50
    synth_sigma: float = 1.0
    synth_separation: float = 10.0
    synth_bridge: int = 6
    synth_dim: int = 2
    rewire_bridge: float = 0.8
    rewire_basin: float = 0.0
    # execution
    threads: int = 1
    deterministic: bool = False

    def merged(self, overrides: dict[str, Any]) -> RunConfig:
        table = asdict(self)
        for key, value in overrides.items():
            if value is None:
                continue
            if key not in table:
                raise ConfigError(f"unknown config key {key!r}")
            table[key] = value
        return RunConfig(**table)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_BOOL_TRUE = ("true", "1", "yes", "on")
_BOOL_FALSE = ("false", "0", "no", "off")


def _coerce(key: str, raw: str) -> Any:
    """Parse a config-file value against the RunConfig field type."""
    ftype = _FIELD_TYPES.get(key)
    if ftype is None:
        raise ConfigError(f"unknown config key {key!r}")
    text = raw.strip()
    if "bool" in ftype:
        low = text.lower()
        if low in _BOOL_TRUE:
            return True
        if low in _BOOL_FALSE:
            return False
        raise ConfigError(f"config key {key!r} expects a boolean, got {raw!r}")
    if text.lower() == "none" and "None" in ftype:
        return None
    if "int" in ftype:
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"config key {key!r} expects an integer, got {raw!r}")
    if "float" in ftype:
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"config key {key!r} expects a number, got {raw!r}")
    return text


def parse_config_file(path: str) -> dict[str, Any]:
    """Flat key=value file; '#' starts a comment; blank lines skipped."""
    overrides: dict[str, Any] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(
                        f"{path}:{lineno}: expected key=value, got {raw.rstrip()!r}"
                    )
                key, value = line.split("=", 1)
                overrides[key.strip()] = _coerce(key.strip(), value)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}")
    return overrides


# execution knobs change scheduling, never results, so they stay out of
# the config hash; hashing them would make identical outputs disagree
# about their own identity across --threads
EXECUTION_KEYS = frozenset({"threads", "deterministic"})


def canonical_config_text(config: RunConfig) -> str:
    """Sorted key=value rendering; the basis of the config hash."""
    table = asdict(config)
    parts = []
    for key in sorted(table):
        if key in EXECUTION_KEYS:
            continue
        value = table[key]
        if isinstance(value, float):
            rendered = repr(value)
        elif value is None:
            rendered = "none"
        elif isinstance(value, bool):
            rendered = "true" if value else "false"
        else:
            rendered = str(value)
        parts.append(f"{key}={rendered}")
    return "\n".join(parts) + "\n"


def config_hash(config: RunConfig) -> str:
    return hashlib.sha256(canonical_config_text(config).encode("utf-8")).hexdigest()


def report_preamble(config: RunConfig) -> list[str]:
    return [f"config_hash={config_hash(config)}", f"seed={config.seed}"]


def build_manifest(
    command: str,
    config: RunConfig,
    wall_clock_s: float,
    extra: dict[str, Any] | None = None,
) -> str:
    body: dict[str, Any] = {
        "command": command,
        "config": asdict(config),
        "config_hash": config_hash(config),
        "seed_streams": {
            name: substream_seed(config.seed, name)
            for name in (
                STREAM_PERM,
                STREAM_BOOT,
                STREAM_SYNTH,
                STREAM_ENSEMBLE,
                STREAM_TRIALS,
                STREAM_PLACEBO,
            )
        },
        "versions": {
            "package": PACKAGE_VERSION,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "wall_clock_s": round(wall_clock_s, 6),
    }
    if extra:
        body.update(extra)
    return json.dumps(body, indent=2, sort_keys=True) + "\n"


def fmt_float(x: float) -> str:
    """repr-based float rendering; empty string for NaN."""
    x = float(x)
    if x != x:
        return ""
    return repr(x)


def write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def json_report(payload: dict[str, Any]) -> str:
    """Deterministic JSON rendering for report payloads."""

    def _clean(obj):
        if isinstance(obj, dict):
            return {str(k): _clean(v) for k, v in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [_clean(v) for v in obj]
        if isinstance(obj, (np.bool_, bool)):
            return bool(obj)
        if isinstance(obj, (np.floating, float)):
            v = float(obj)
            return None if v != v else v
        if isinstance(obj, (np.integer, int)):
            return int(obj)
        if isinstance(obj, np.ndarray):
            return [_clean(v) for v in obj.tolist()]
        return obj

    return json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n"


def read_covariate_tsv(path: str) -> dict[str, float]:
    """Two-column id <tab> value table with '#' comments."""
    table: dict[str, float] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise InputError(f"{path}:{lineno}: expected id<TAB>value")
                try:
                    table[parts[0]] = float(parts[1])
                except ValueError:
                    raise InputError(f"{path}:{lineno}: bad value {parts[1]!r}")
    except OSError as exc:
        raise InputError(f"cannot read covariate table {path!r}: {exc}")
    if not table:
        raise InputError(f"{path}: empty covariate table")
    return table
