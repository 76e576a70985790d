"""Seeded counter-based randomness with independent named streams."""

from __future__ import annotations

import hashlib

import numpy as np


def stream_key(seed: int, name: str) -> int:
    h = hashlib.sha256(f"{seed & (2**64 - 1)}/{name}".encode()).digest()
    return int.from_bytes(h[:16], "big")


class Streams:
    """One Philox generator per named subsystem.

    Each stream's key depends only on (seed, name), so adding a stream never
    shifts the numbers another stream produces.
    """

    def __init__(self, seed: int):
        self.seed = seed
        self._gens: dict[str, np.random.Generator] = {}

    def get(self, name: str) -> np.random.Generator:
        g = self._gens.get(name)
        if g is None:
            g = np.random.Generator(np.random.Philox(key=stream_key(self.seed, name)))
            self._gens[name] = g
        return g

    def id_source(self, name: str = "ids"):
        g = self.get(name)

        def next_id() -> str:
            return g.bytes(16).hex()

        return next_id

    def uniform_int(self, name: str, lo: int, hi: int) -> int:
        """Integer uniformly drawn from [lo, hi]."""
        return int(self.get(name).integers(lo, hi + 1))

    def chance(self, name: str, p: float) -> bool:
        if p <= 0.0:
            return False
        if p >= 1.0:
            return True
        return bool(self.get(name).random() < p)
