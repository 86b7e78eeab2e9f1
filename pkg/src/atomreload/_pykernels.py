"""Pure numpy versions of the planning kernels.

Kept operation-for-operation identical to ``_ckernels.pyx`` so that either
backend produces the same plans (including how ties are broken).
"""

import numpy as np


def solve_assignment(cost):
    cost = np.asarray(cost, dtype=np.float64)
    transposed = cost.shape[0] > cost.shape[1]
    if transposed:
        cost = cost.T
    n, m = cost.shape
    if n == 0:
        empty = np.empty(0, dtype=np.intp)
        return empty, empty.copy()
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")

    u = np.zeros(n)
    v = np.zeros(m)
    col4row = np.full(n, -1, dtype=np.intp)
    row4col = np.full(m, -1, dtype=np.intp)
    path = np.full(m, -1, dtype=np.intp)

    for cur in range(n):
        shortest = np.full(m, np.inf)
        sr = np.zeros(n, dtype=bool)
        sc = np.zeros(m, dtype=bool)
        min_val = 0.0
        i = cur
        sink = -1
        while sink == -1:
            sr[i] = True
            cols = np.flatnonzero(~sc)
            r = min_val + cost[i, cols] - u[i] - v[cols]
            better = r < shortest[cols]
            path[cols[better]] = i
            shortest[cols[better]] = r[better]
            s = shortest[cols]
            lowest = s.min()
            ties = cols[s == lowest]
            free = ties[row4col[ties] == -1]
            j = free[0] if free.size else ties[0]
            min_val = lowest
            if row4col[j] == -1:
                sink = j
            else:
                i = row4col[j]
            sc[j] = True

        u[cur] = u[cur] + min_val
        others = sr.copy()
        others[cur] = False
        u[others] = u[others] + (min_val - shortest[col4row[others]])
        v[sc] = v[sc] - (min_val - shortest[sc])

        j = sink
        while True:
            i = path[j]
            row4col[j] = i
            col4row[i], j = j, col4row[i]
            if i == cur:
                break

    rows = np.arange(n, dtype=np.intp)
    cols = col4row.copy()
    if transposed:
        order = np.argsort(cols, kind="stable")
        return cols[order], rows[order]
    return rows, cols


def close_sites(path_xy, xs, ys, candidates, radius):
    p = np.asarray(path_xy, dtype=np.float64)
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    cand = np.asarray(candidates, dtype=bool)
    out = np.zeros(xs.shape[0], dtype=bool)
    r2 = (radius + 1e-9) * (radius + 1e-9)
    for k in range(p.shape[0] - 1):
        ax, ay = p[k]
        dx = p[k + 1, 0] - ax
        dy = p[k + 1, 1] - ay
        l2 = dx * dx + dy * dy
        if l2 > 0.0:
            t = np.clip(((xs - ax) * dx + (ys - ay) * dy) / l2, 0.0, 1.0)
        else:
            t = np.zeros_like(xs)
        qx = ax + t * dx - xs
        qy = ay + t * dy - ys
        out |= cand & (qx * qx + qy * qy <= r2)
    return out
