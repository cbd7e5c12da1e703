"""Named random streams derived from one root seed.

Every consumer asks for a stream by a tuple of names, e.g.
``rng("loso", "S03", 2)``. Streams are independent of each other and of the
order in which they are requested, so adding a fold never shifts the draws of
another fold.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _name_key(name) -> int:
    digest = hashlib.sha256(str(name).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def seed_sequence(root: int, *names) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(root) & (2**64 - 1),
                                  spawn_key=tuple(_name_key(n) for n in names))


def rng(root: int, *names) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(root, *names))


def derive_seed(root: int, *names) -> int:
    """A 63-bit integer seed for ``names`` under ``root``."""
    return int(seed_sequence(root, *names).generate_state(2, np.uint32).view(np.uint64)[0] >> 1)
