"""Labeled seed derivation.

Every random stream in the engine is derived from a single master seed by
hashing a string label, so independent subsystems never share or race a
generator.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master: int, label: str) -> int:
    """Derive a 64-bit child seed from ``master`` and a textual label."""
    digest = hashlib.sha256(f"{master}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(master: int, label: str) -> np.random.Generator:
    """Deterministic generator for the stream named by ``label``."""
    return np.random.default_rng(derive_seed(master, label))
