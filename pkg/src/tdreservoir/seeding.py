"""Named random sub-streams derived from one user-visible seed."""

import zlib

import numpy as np

STREAMS = ("weights", "variation", "input", "folds", "synthetic")


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for ``name``; stable across platforms and runs."""
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(key,)))
