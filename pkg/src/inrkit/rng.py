"""Named deterministic RNG streams.

Every stochastic choice in the toolkit draws from a stream addressed by a
root seed plus a path of labels (e.g. ("fit", shape_id, refit)).  Streams
with different paths are statistically independent, and the same path always
reproduces the same draws, which is what makes reruns byte-identical.
"""
from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _label_word(label: object) -> int:
    digest = hashlib.sha256(repr(label).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def stream(root_seed: int, *path: object) -> np.random.Generator:
    """Generator for the stream addressed by (root_seed, *path)."""
    words = [int(root_seed) & _MASK64]
    words.extend(_label_word(p) for p in path)
    return np.random.default_rng(np.random.SeedSequence(words))


def substream_seed(root_seed: int, *path: object) -> int:
    """64-bit seed derived from a path, for handing to child processes/files."""
    words = [int(root_seed) & _MASK64]
    words.extend(_label_word(p) for p in path)
    mixed = hashlib.sha256(repr(tuple(words)).encode("utf-8")).digest()
    return int.from_bytes(mixed[:8], "little")
