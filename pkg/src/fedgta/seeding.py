"""Per-purpose random streams derived from a single root seed."""

import numpy as np

PURPOSES = {"graph": 1, "split": 2, "partition": 3, "init": 4, "sampling": 5}


def rng_for(seed: int, purpose: str, *counters: int) -> np.random.Generator:
    """Independent generator keyed by ``(seed, purpose, *counters)``.

    Streams for different purposes or counters never overlap, so adding a
    draw in one component leaves every other component's numbers unchanged.
    """
    key = (PURPOSES[purpose], *(int(c) for c in counters))
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))
