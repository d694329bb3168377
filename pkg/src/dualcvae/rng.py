"""Named random substreams derived from a single integer seed."""
from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int, name: str, *keys: int) -> np.random.Generator:
    """Generator keyed by ``(seed, name, *keys)``; distinct names never share a stream."""
    entropy = [int(seed) & 0xFFFFFFFF, zlib.crc32(name.encode()), *(int(k) for k in keys)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def get_state(gen: np.random.Generator) -> dict:
    return gen.bit_generator.state


def set_state(gen: np.random.Generator, state: dict) -> None:
    gen.bit_generator.state = state
