"""Named, reproducible random substreams derived from one master seed.

Every piece of randomness in the pipeline flows through here so a single
seed reproduces a whole run.  Generators are PCG64 (numpy's default
bit generator), which is stable across platforms and numpy releases.
"""

from __future__ import annotations

import zlib

import numpy as np

# Stream names used by the command-line layer.
GENERATE = "generate"
FIT = "fit"
BOOT = "boot"
SPLIT = "split"
SAMPLE = "sample"


def substream(seed: int, name: str) -> np.random.Generator:
    """Generator for the substream ``name`` under master ``seed``."""
    tag = zlib.crc32(name.encode("utf-8"))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, tag])))


def spawn(rng_seed: int, name: str, count: int) -> list[np.random.Generator]:
    """``count`` independent child generators of the named substream."""
    tag = zlib.crc32(name.encode("utf-8"))
    children = np.random.SeedSequence([rng_seed, tag]).spawn(count)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]
