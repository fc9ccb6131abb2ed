"""Named random streams derived from a single root seed.

Two flavours are provided. :func:`stream` returns a numpy ``Generator``
backed by Philox keyed on ``(root_seed, name)``, for sequential draws.
:func:`counter_uniform` is a stateless counter-based generator used where
many games advance in lockstep: the draw for ``(key, counter)`` does not
depend on which other games share the batch.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_key(root_seed: int, name: str) -> int:
    """64-bit key for the stream ``name`` under ``root_seed``."""
    h = hashlib.blake2b(f"{int(root_seed)}/{name}".encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def stream(root_seed: int, name: str) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=derive_key(root_seed, name)))


def _splitmix(z: np.ndarray) -> np.ndarray:
    z = z + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def counter_bits(key, counter) -> np.ndarray:
    """64 pseudo-random bits per (key, counter) pair, broadcast elementwise."""
    k = np.asarray(key, dtype=np.uint64)
    c = np.asarray(counter, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _splitmix(_splitmix(k) ^ (c * np.uint64(0xD1B54A32D192ED03)))


def counter_uniform(key, counter) -> np.ndarray:
    """Uniform floats in [0, 1) with 53 bits of precision."""
    bits = counter_bits(key, counter) >> np.uint64(11)
    return bits.astype(np.float64) * (1.0 / (1 << 53))


def game_keys(root_seed: int, name: str, indices) -> np.ndarray:
    """Per-game keys for a family of games sharing a stream name."""
    base = np.uint64(derive_key(root_seed, name))
    idx = np.asarray(indices, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _splitmix(base ^ _splitmix(idx))
