"""Named random sub-streams derived from one integer seed."""

import numpy as np

STREAMS = {"dataset": 0, "init": 1, "batching": 2, "eval": 3}


def stream(seed, name, *extra):
    """Independent generator for ``name``; ``extra`` integers (e.g. a sample index) fork it further."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), STREAMS[name], *map(int, extra)]))
