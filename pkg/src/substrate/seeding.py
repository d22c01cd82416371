"""Root-seed bookkeeping.

Every stochastic routine draws from a named substream derived from the
single root seed, so runs replay exactly regardless of which commands
executed earlier in the process.
"""

from __future__ import annotations

import hashlib

import numpy as np

# substream names in use across the package
STREAM_PERM = "perm"
STREAM_BOOT = "boot"
STREAM_SYNTH = "synth"
STREAM_ENSEMBLE = "ensemble"
STREAM_TRIALS = "trials"
STREAM_PLACEBO = "placebo"


def substream_seed(root: int, name: str) -> int:
    """Derive a stable 63-bit seed for the named substream."""
    digest = hashlib.sha256(f"{root}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def stream_rng(root: int, name: str) -> np.random.Generator:
    return np.random.default_rng(substream_seed(root, name))
