"""Deterministic seed derivation.

Every random stream in the toolkit comes from a named derivation of one
master seed, so reruns (and parallel workers) reproduce byte-identical
results regardless of scheduling.  Python's builtin hash is salted per
process; sha256 is not.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _canonical(part) -> str:
    if isinstance(part, float):
        return repr(part)
    if isinstance(part, (int, np.integer)):
        return str(int(part))
    return str(part)


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from a tuple of ints/floats/strings."""
    text = "/".join(_canonical(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def make_rng(*parts) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(*parts)))
