"""Seed plumbing.

All samplers take explicit integer seeds; nothing shares generator state.
Child seeds are derived by hashing, so cells of an experiment grid do not
couple through the draw order.
"""

import hashlib

import numpy as np


def child_seed(*parts) -> int:
    """Stable 63-bit seed derived from the given parts (ints/strings)."""
    text = "|".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))
