"""Deterministic random-stream derivation.

Every stochastic component derives its generator from a user seed plus a
fixed stream tag, so independent components never share or perturb each
other's streams and identical seeds reproduce identical runs bit for bit.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# Stream tags. New consumers append; never renumber.
STREAM_TREE = 1
STREAM_CV = 2
STREAM_SYNTH = 3
STREAM_SHAPLEY = 4
STREAM_GOAL = 5


def derive_rng(seed: int, *stream: int) -> np.random.Generator:
    """Generator for ``(seed, stream...)``; seed may be any Python int."""
    entropy = [int(seed) & _MASK64] + [int(s) & _MASK64 for s in stream]
    return np.random.default_rng(entropy)
