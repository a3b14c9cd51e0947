"""Deterministic seed derivation.

Every run takes a single integer seed; components derive their own
streams by hashing the seed together with a label, so adding a consumer
never perturbs the streams of existing ones.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, *labels: str) -> int:
    h = hashlib.sha256()
    h.update(str(int(seed)).encode())
    for label in labels:
        h.update(b"/")
        h.update(str(label).encode())
    return int.from_bytes(h.digest()[:8], "little")


def rng_for(seed: int, *labels: str) -> np.random.Generator:
    """Independent generator for one (seed, label...) stream."""
    return np.random.default_rng(derive_seed(seed, *labels))
