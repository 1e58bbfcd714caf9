"""Deterministic random number streams.

Every stochastic routine in this package draws from a named substream of a
single master seed.  The splitting rule is:

    substream(seed, *keys) == Generator(PCG64(SeedSequence(seed, spawn_key=K)))

where K maps each key to a uint32: integers are used as-is (reduced mod 2**32)
and strings are hashed with CRC-32.  Two substreams with different key tuples
are statistically independent, and the mapping does not depend on the order in
which streams are created, so results are reproducible under any scheduling of
the work.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["substream", "child_seed"]


def _key_to_uint32(key: int | str) -> int:
    if isinstance(key, bool):
        raise TypeError("stream keys must be ints or strings, not bool")
    if isinstance(key, (int, np.integer)):
        return int(key) % (2**32)
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    raise TypeError(f"stream keys must be ints or strings, got {type(key)!r}")


def substream(seed: int, *keys: int | str) -> np.random.Generator:
    """Return the generator for the named substream of ``seed``."""
    spawn_key = tuple(_key_to_uint32(k) for k in keys)
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=spawn_key))


def child_seed(seed: int, *keys: int | str) -> int:
    """Return a derived integer seed for the named substream.

    Handy when an operation takes a plain ``seed`` argument but must be run
    once per outer index (per dataset, per study, ...).  The derived seed is a
    pure function of ``(seed, keys)``.
    """
    spawn_key = tuple(_key_to_uint32(k) for k in keys)
    state = np.random.SeedSequence(seed, spawn_key=spawn_key).generate_state(2)
    return int(state[0]) + (int(state[1]) << 32)
