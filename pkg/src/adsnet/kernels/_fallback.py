"""Pure numpy nearest-foreground transform, same tie rule as the compiled kernel.

The row pass is a dense ``W x W`` minimisation per row (``O(H W^2)``), which
is simple and exact but slow on full-resolution benchmark images.
"""

import numpy as np


def _column_pass(m: np.ndarray) -> np.ndarray:
    h, w = m.shape
    idx = np.arange(h)[:, None].repeat(w, axis=1)
    above = np.where(m, idx, -1)
    above = np.maximum.accumulate(above, axis=0)
    below = np.where(m, idx, h + h)
    below = np.minimum.accumulate(below[::-1], axis=0)[::-1]
    has_above = above >= 0
    has_below = below < h
    take_below = has_below & (~has_above | (below - idx < idx - above))
    return np.where(take_below, below, above)


def nearest_foreground(mask):
    """Return ``(dist2, rows, cols)`` of the nearest nonzero pixel of ``mask``."""
    m = np.asarray(mask).astype(bool)
    if m.size == 0:
        raise ValueError("empty mask")
    h, w = m.shape
    vrow = _column_pass(m)
    r_idx = np.arange(h)[:, None]
    f = np.where(vrow >= 0, (vrow - r_idx).astype(np.float64) ** 2, np.inf)
    x = np.arange(w)
    shift2 = (x[:, None] - x[None, :]).astype(np.float64) ** 2  # [x, q]
    dist = np.empty((h, w))
    rows = np.empty((h, w), dtype=np.int64)
    cols = np.empty((h, w), dtype=np.int64)
    for r in range(h):
        cost = f[r][None, :] + shift2
        q = np.argmin(cost, axis=1)  # first minimum -> smallest column
        dist[r] = cost[x, q]
        cols[r] = q
        rows[r] = vrow[r, q]
    empty = ~np.isfinite(dist)
    rows[empty] = -1
    cols[empty] = -1
    return dist, rows, cols
