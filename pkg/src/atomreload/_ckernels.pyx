# cython: language_level=3
"""Compiled hot loops for rearrangement planning.

Mirrors ``_pykernels`` operation for operation; the two must agree exactly,
including tie-breaking, so planning is identical whichever backend loads.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, sqrt

cnp.import_array()


def solve_assignment(cnp.ndarray cost_in):
    """Min-cost rectangular assignment by shortest augmenting paths.

    Returns ``(rows, cols)`` with one pair per row of the smaller dimension.
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=2] cost = np.ascontiguousarray(cost_in, dtype=np.float64)
    cdef bint transposed = False
    if cost.shape[0] > cost.shape[1]:
        cost = np.ascontiguousarray(cost.T)
        transposed = True
    cdef Py_ssize_t n = cost.shape[0], m = cost.shape[1]
    if n == 0:
        empty = np.empty(0, dtype=np.intp)
        return empty, empty.copy()
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")

    cdef double[::1] u = np.zeros(n)
    cdef double[::1] v = np.zeros(m)
    cdef double[::1] shortest = np.empty(m)
    cdef Py_ssize_t[::1] col4row = np.full(n, -1, dtype=np.intp)
    cdef Py_ssize_t[::1] row4col = np.full(m, -1, dtype=np.intp)
    cdef Py_ssize_t[::1] path = np.full(m, -1, dtype=np.intp)
    cdef unsigned char[::1] sr = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] sc = np.zeros(m, dtype=np.uint8)
    cdef double[:, ::1] c = cost

    cdef Py_ssize_t cur, i, j, index, sink, tmp
    cdef double min_val, lowest, r

    for cur in range(n):
        for j in range(m):
            shortest[j] = INFINITY
            sc[j] = 0
        for i in range(n):
            sr[i] = 0
        min_val = 0.0
        i = cur
        sink = -1
        while sink == -1:
            sr[i] = 1
            index = -1
            lowest = INFINITY
            for j in range(m):
                if sc[j]:
                    continue
                r = min_val + c[i, j] - u[i] - v[j]
                if r < shortest[j]:
                    path[j] = i
                    shortest[j] = r
                if shortest[j] < lowest:
                    lowest = shortest[j]
                    index = j
                elif index >= 0 and shortest[j] == lowest and row4col[j] == -1 and row4col[index] != -1:
                    index = j
            min_val = lowest
            j = index
            if row4col[j] == -1:
                sink = j
            else:
                i = row4col[j]
            sc[j] = 1

        u[cur] = u[cur] + min_val
        for i in range(n):
            if sr[i] and i != cur:
                u[i] = u[i] + (min_val - shortest[col4row[i]])
        for j in range(m):
            if sc[j]:
                v[j] = v[j] - (min_val - shortest[j])

        j = sink
        while True:
            i = path[j]
            row4col[j] = i
            tmp = col4row[i]
            col4row[i] = j
            j = tmp
            if i == cur:
                break

    rows = np.arange(n, dtype=np.intp)
    cols = np.asarray(col4row).copy()
    if transposed:
        order = np.argsort(cols, kind="stable")
        return cols[order], rows[order]
    return rows, cols


def close_sites(cnp.ndarray path_xy, cnp.ndarray xs_in, cnp.ndarray ys_in,
                cnp.ndarray candidates_in, double radius):
    """Mask of candidate sites within ``radius`` of any segment of a polyline."""
    cdef double[:, ::1] p = np.ascontiguousarray(path_xy, dtype=np.float64)
    cdef double[::1] xs = np.ascontiguousarray(xs_in, dtype=np.float64)
    cdef double[::1] ys = np.ascontiguousarray(ys_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] cand = np.ascontiguousarray(candidates_in, dtype=np.uint8)
    cdef Py_ssize_t ns = xs.shape[0], nseg = p.shape[0] - 1
    out = np.zeros(ns, dtype=bool)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1, cast=True] o = out
    cdef Py_ssize_t k, s
    cdef double ax, ay, dx, dy, l2, t, qx, qy, d2
    cdef double r2 = (radius + 1e-9) * (radius + 1e-9)
    for k in range(nseg):
        ax = p[k, 0]
        ay = p[k, 1]
        dx = p[k + 1, 0] - ax
        dy = p[k + 1, 1] - ay
        l2 = dx * dx + dy * dy
        for s in range(ns):
            if not cand[s] or o[s]:
                continue
            if l2 > 0.0:
                t = ((xs[s] - ax) * dx + (ys[s] - ay) * dy) / l2
                if t < 0.0:
                    t = 0.0
                elif t > 1.0:
                    t = 1.0
            else:
                t = 0.0
            qx = ax + t * dx - xs[s]
            qy = ay + t * dy - ys[s]
            d2 = qx * qx + qy * qy
            if d2 <= r2:
                o[s] = 1
    return out
