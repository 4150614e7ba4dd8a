"""Seeded, splittable random streams built on the Philox counter-based generator."""

from __future__ import annotations

import hashlib

import numpy as np

ALGORITHM = "philox4x64-10"


def _key_word(key) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError("stream keys must be non-negative")
        return int(key)
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class RngStream:
    """A named random stream.

    Child streams are addressed by a path of keys (ints or strings), so the
    stream for e.g. ``("denoise", "gt", 7)`` never depends on how many draws
    were taken from any sibling stream.
    """

    algorithm = ALGORITHM

    def __init__(self, seed: int, path: tuple = ()):
        if not 0 <= int(seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self.seed = int(seed)
        self.path = tuple(path)
        seq = np.random.SeedSequence(self.seed, spawn_key=tuple(_key_word(k) for k in self.path))
        self.generator = np.random.Generator(np.random.Philox(seq))

    def child(self, *keys) -> "RngStream":
        return RngStream(self.seed, self.path + keys)

    def derive_seed(self, *keys) -> int:
        """A 63-bit integer identifying the child stream at ``keys``."""
        return int(self.child(*keys).generator.integers(0, 2**63))

    def normal(self, size=None, scale=1.0):
        return self.generator.normal(0.0, scale, size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def poisson(self, lam):
        return self.generator.poisson(lam)

    def permutation(self, n):
        return self.generator.permutation(n)

    def choice(self, n, size, replace=True):
        return self.generator.choice(n, size=size, replace=replace)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, path={self.path!r})"
