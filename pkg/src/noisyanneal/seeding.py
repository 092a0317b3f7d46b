"""Counter-based stream splitting.

A stream is identified by ``(master, label, *indices)``; the tuple is hashed
with SHA-256 and the digest seeds a Philox generator, so a stream never
depends on how many other streams were created before it.
"""
from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["stream_key", "generator"]

MASK64 = (1 << 64) - 1


def stream_key(master: int, label: str, *indices: int) -> list[int]:
    text = "|".join([str(int(master) & MASK64), label] + [str(int(i)) for i in indices])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 32, 4)]


def generator(master: int, label: str, *indices: int) -> np.random.Generator:
    ss = np.random.SeedSequence(stream_key(master, label, *indices))
    return np.random.Generator(np.random.Philox(ss))
