"""Deterministic RNG derivation.

Every stochastic site gets its own Generator derived from the master seed
plus a structured key, so adding or removing one consumer never shifts the
streams of the others.  Keys are small integer tuples; the purpose constants
below keep them readable at call sites.
"""

import numpy as np

# purpose tags (first key element after the master seed)
INIT = 1      # parameter initialisation, keyed further by tensor ordinal
SPLIT = 2     # group-level train/val/test split
SAMPLE = 3    # negative sampling, keyed by (stage, epoch)
MASK = 4      # node dropout masks, keyed by (epoch, scale)
SHUFFLE = 5   # batch order, keyed by (stage, epoch)
SYNTH = 6     # synthetic data generation


def derive_rng(seed, *key):
    """Return a Generator for (seed, *key).

    Same inputs always give the same stream; distinct keys give
    independent streams.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key)]))
