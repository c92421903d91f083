"""Named random streams derived from a single run seed.

Every source of randomness in the package draws from a stream named
after its purpose, e.g. stream(seed, "train/noise/3/12"). The stream
key is the SHA-256 of the name folded into a SeedSequence together with
the run seed, so streams are independent, reproducible, and stable
across platforms and process invocations.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream(seed: int, name: str) -> np.random.Generator:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    key = int.from_bytes(digest[:8], "little")
    return np.random.default_rng(np.random.SeedSequence(entropy=[seed, key]))
