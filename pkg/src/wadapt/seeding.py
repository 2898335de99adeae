"""Named random substreams derived from a single run seed.

Every source of randomness in the package draws from ``substream(seed, name)``
so that two runs with the same seed replay bit-identically, and so that
components that must share a random sequence (e.g. the batch draws of the two
adversarial arms) simply use the same substream name.
"""

import zlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Return a generator for the substream ``name`` of run ``seed``."""
    key = zlib.crc32(name.encode("utf-8"))
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFF, key])
    return np.random.Generator(np.random.PCG64(ss))
