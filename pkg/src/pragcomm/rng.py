"""Portable seeded integer RNG.

Draws come from the raw 64-bit output stream of PCG64 (the XSL-RR 128/64
permuted congruential generator), seeded through numpy's ``SeedSequence``.
numpy guarantees the raw bit-generator stream is stable across platforms
and releases, unlike the distribution methods of ``Generator``; bounded
integers are derived here by rejection sampling so the mapping from raw
words to draws is fixed by this module alone.
"""
from __future__ import annotations

import zlib

import numpy as np

_TWO64 = 1 << 64


class PortableRng:
    def __init__(self, seed: int):
        if seed < 0 or seed >= _TWO64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self.seed = int(seed)
        self._bitgen = np.random.PCG64(self.seed)

    def next_u64(self) -> int:
        return int(self._bitgen.random_raw())

    def below(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = _TWO64 - (_TWO64 % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def choice(self, seq):
        return seq[self.below(len(seq))]


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from ints and strings (CRC32 for strings)."""
    words = []
    for p in parts:
        if isinstance(p, str):
            words.append(zlib.crc32(p.encode("utf-8")))
        else:
            words.append(int(p) & 0xFFFFFFFF)
            words.append((int(p) >> 32) & 0xFFFFFFFF)
    return int(np.random.SeedSequence(words).generate_state(1, np.uint64)[0])
