"""Deterministic random streams split per subtask by stable string labels."""

from __future__ import annotations

import hashlib

import numpy as np


def stream(seed: int, label: str) -> np.random.Generator:
    """Return a Generator determined by (seed, label) only.

    The label is hashed with sha256 so the mapping is stable across runs,
    platforms and Python hash randomization.
    """
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *words])))
