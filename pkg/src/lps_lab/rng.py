"""Counter-based random streams.

Every random draw in the package comes from a Philox generator keyed by
``(seed, *key)``. Keys used by the package:

``(trial, layer, 0)``
    Step-1 sampling of layer ``layer`` (1-based) in initialization ``trial``.
``(trial, 0, round)``
    Layer selection for re-initialization round ``round`` (1-based).
``(trial, layer, round)``
    Element redraws of layer ``layer`` during round ``round``.

Streams with different keys are statistically independent, so trials can be
evaluated in any order (or concurrently) with identical results.
"""

import numpy as np


def stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
