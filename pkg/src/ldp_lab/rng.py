"""Named random substreams derived from a single master seed.

Every stochastic step draws from ``substream(seed, name, *ints)``. The key is
hashed into a ``SeedSequence`` spawn key, so a stream depends only on the
master seed and its name, never on call order or on how work is split across
threads.

Stream names in use:

``truth``                   ground-truth class assignment
``truth-bits``              binary truth vectors for the baselines
``users``, block            user records for users ``[block*B, (block+1)*B)``
``pairwise``, block         pair assignment and bit flips
``maxsense``, block         sensing vectors and bit flips
``maxsense-out``            outside-rated-set sensing counts (marginal engine)
``mms``, block              Multi-MaxSense partitions and bit flips
``kmeans``, restart         k-means++ seeding
``baseline``, scheme, N, r  run r of a non-private baseline
"""

from __future__ import annotations

import hashlib

import numpy as np

#: Users are generated in fixed blocks of this size. The block size is part
#: of the reproducibility contract: changing it changes every dataset.
BLOCK_SIZE = 8192


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("substream keys must be non-negative")
        return int(part)
    digest = hashlib.sha256(str(part).encode()).digest()
    return int.from_bytes(digest[:4], "little")


def substream(seed: int, *keys) -> np.random.Generator:
    """Return the generator for stream ``keys`` under master ``seed``."""
    if seed < 0:
        raise ValueError("seed must be a non-negative 64-bit integer")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def blocks(n: int, size: int = BLOCK_SIZE):
    """Yield ``(index, start, stop)`` for the fixed blocks covering ``range(n)``."""
    for b, start in enumerate(range(0, n, size)):
        yield b, start, min(start + size, n)
