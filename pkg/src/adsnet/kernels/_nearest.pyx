# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Exact nearest-foreground transform (two-pass lower envelope).

Ties are broken towards the smallest column, then the smallest row.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef double INF = float("inf")


def nearest_foreground(mask):
    """Return ``(dist2, rows, cols)`` of the nearest nonzero pixel of ``mask``."""
    cdef cnp.uint8_t[:, ::1] m = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef Py_ssize_t h = m.shape[0], w = m.shape[1]
    if h == 0 or w == 0:
        raise ValueError("empty mask")

    # column pass: nearest foreground row within each column
    vrow_arr = np.full((h, w), -1, dtype=np.int64)
    cdef cnp.int64_t[:, ::1] vrow = vrow_arr
    cdef Py_ssize_t r, c, above, below
    for c in range(w):
        above = -1
        for r in range(h):
            if m[r, c]:
                above = r
            vrow[r, c] = above
        below = -1
        for r in range(h - 1, -1, -1):
            if m[r, c]:
                below = r
            if below >= 0 and (vrow[r, c] < 0 or below - r < r - vrow[r, c]):
                vrow[r, c] = below

    dist_arr = np.empty((h, w), dtype=np.float64)
    rows_arr = np.empty((h, w), dtype=np.int64)
    cols_arr = np.empty((h, w), dtype=np.int64)
    cdef double[:, ::1] dist = dist_arr
    cdef cnp.int64_t[:, ::1] rows = rows_arr
    cdef cnp.int64_t[:, ::1] cols = cols_arr

    v_arr = np.empty(w, dtype=np.int64)
    z_arr = np.empty(w + 1, dtype=np.float64)
    f_arr = np.empty(w, dtype=np.float64)
    cdef cnp.int64_t[::1] v = v_arr
    cdef double[::1] z = z_arr
    cdef double[::1] f = f_arr
    cdef Py_ssize_t k, q, x, p
    cdef double s, dr

    # row pass: lower envelope of f(q) + (x - q)^2, smallest q on ties
    for r in range(h):
        for q in range(w):
            if vrow[r, q] < 0:
                f[q] = INF
            else:
                dr = <double>(vrow[r, q] - r)
                f[q] = dr * dr
        k = -1
        for q in range(w):
            if f[q] == INF:
                continue
            while k >= 0:
                p = v[k]
                s = ((f[q] + <double>(q * q)) - (f[p] + <double>(p * p))) / (2.0 * <double>(q - p))
                if k >= 1 and s <= z[k]:
                    k -= 1
                else:
                    break
            k += 1
            v[k] = q
            if k >= 1:
                p = v[k - 1]
                z[k] = ((f[q] + <double>(q * q)) - (f[p] + <double>(p * p))) / (2.0 * <double>(q - p))
        if k < 0:
            for x in range(w):
                dist[r, x] = INF
                rows[r, x] = -1
                cols[r, x] = -1
            continue
        q = 0
        for x in range(w):
            while q < k and z[q + 1] < x:
                q += 1
            p = v[q]
            dist[r, x] = f[p] + <double>((x - p) * (x - p))
            rows[r, x] = vrow[r, p]
            cols[r, x] = p
    return dist_arr, rows_arr, cols_arr
