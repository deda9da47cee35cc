"""Pure numpy implementations of the hot sampling kernels.

These mirror the compiled kernels in ``_ckernels.pyx`` exactly: every
function is a deterministic map from its inputs, all randomness enters
through pre-drawn arrays, so the two backends are interchangeable.
"""

import numpy as np

BACKEND = "python"


def srswor_indices(n, k, uniforms):
    """Draw k of n indices without replacement via partial Fisher-Yates.

    ``uniforms`` holds k variates in [0, 1); the draw is uniform over all
    ordered k-tuples, hence uniform over k-subsets.
    """
    pool = np.arange(n, dtype=np.int64)
    for i in range(k):
        span = n - i
        j = i + int(uniforms[i] * span)
        if j >= n:  # guard against u*span rounding up to span
            j = n - 1
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:k].copy()


def systematic_positions(cum, start):
    """Positions selected by systematic sampling with unit jumps.

    ``cum`` is the cumulated size scale ascending to m (the number of
    draws); points start + 0, 1, ..., m-1 each select the first position
    whose cumulated size reaches them.
    """
    m = int(round(cum[-1]))
    points = start + np.arange(m, dtype=np.float64)
    return np.searchsorted(cum, points, side="left").astype(np.int64)


def replicate_sums(contrib, draws, factor):
    """Resampled stratum sums for bootstrap replicates.

    ``draws`` has one row of with-replacement indices per replicate; each
    row's contributions are summed and rescaled by ``factor``.
    """
    return factor * contrib[draws].sum(axis=1)
