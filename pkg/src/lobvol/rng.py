"""Reproducible random streams.

Every random draw in lobvol comes from numpy's ``Philox`` bit generator
(Philox4x64-10, Salmon et al. 2011).  Philox is counter based: stream
``(seed, index)`` is the key ``seed + index * 2**64`` with the counter
started at zero, so replicate ``i`` of a bootstrap yields the same numbers
whether it runs first, last, or on another thread.
"""

import numpy as np

_KEY_SPAN = 1 << 64


def stream(seed, index=0):
    """Return a ``numpy.random.Generator`` for stream ``index`` of ``seed``."""
    seed = int(seed)
    index = int(index)
    if not 0 <= seed < _KEY_SPAN:
        raise ValueError(f"seed must be in [0, 2**64), got {seed}")
    if index < 0:
        raise ValueError(f"stream index must be non-negative, got {index}")
    return np.random.Generator(np.random.Philox(key=seed + index * _KEY_SPAN))
