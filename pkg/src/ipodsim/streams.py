"""Deterministic per-trial random streams.

A stream is a Philox (counter-based) generator keyed by
``SeedSequence(entropy=master_seed, spawn_key=(cell_index, trial_index))``.
Both the SeedSequence hash and Philox are platform independent, so the
same triple gives the same draws everywhere, and distinct indices give
independent streams.
"""

import numpy as np


def derive_stream(master_seed: int, trial_index: int, cell_index: int = 0) -> np.random.Generator:
    if master_seed < 0 or trial_index < 0 or cell_index < 0:
        raise ValueError("seed and indices must be nonnegative")
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(cell_index), int(trial_index)))
    return np.random.Generator(np.random.Philox(seq))
