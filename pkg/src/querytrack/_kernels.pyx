# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: square assignment solver and the RLE codec.

Semantics are identical to ``_fallback``; the Python wrappers in
``querytrack.kernels`` validate inputs before calling in here.
"""
import numpy as np

from libc.math cimport INFINITY


def solve_square(const double[:, ::1] cost, double tol):
    """Min-cost perfect matching on a square matrix.

    Returns ``row_to_col`` as an intp array. Among all optima the
    lexicographically smallest ``row_to_col`` is returned; edges whose
    reduced cost is within ``tol`` of zero count as tight.
    """
    cdef Py_ssize_t n = cost.shape[0]
    cdef Py_ssize_t i, j, i0, j0, j1, r, c, head, tail, owner, prev_owner, t, best
    cdef double delta, cur

    u_arr = np.zeros(n + 1, dtype=np.float64)
    v_arr = np.zeros(n + 1, dtype=np.float64)
    minv_arr = np.empty(n + 1, dtype=np.float64)
    p_arr = np.zeros(n + 1, dtype=np.intp)
    way_arr = np.zeros(n + 1, dtype=np.intp)
    used_arr = np.zeros(n + 1, dtype=np.uint8)
    cdef double[::1] u = u_arr
    cdef double[::1] v = v_arr
    cdef double[::1] minv = minv_arr
    cdef Py_ssize_t[::1] p = p_arr
    cdef Py_ssize_t[::1] way = way_arr
    cdef unsigned char[::1] used = used_arr

    # shortest augmenting path with potentials; 1-based, column 0 is virtual
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        for j in range(n + 1):
            minv[j] = INFINITY
            used[j] = 0
        while True:
            used[j0] = 1
            i0 = p[j0]
            delta = INFINITY
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break

    match_arr = np.empty(n, dtype=np.intp)
    owner_arr = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t[::1] match = match_arr
    cdef Py_ssize_t[::1] col_owner = owner_arr
    for j in range(1, n + 1):
        match[p[j] - 1] = j - 1
        col_owner[j - 1] = p[j] - 1

    tight_arr = np.empty((n, n), dtype=np.uint8)
    cdef unsigned char[:, ::1] tight = tight_arr
    for i in range(n):
        for j in range(n):
            tight[i, j] = (cost[i, j] - u[i + 1] - v[j + 1]) <= tol

    good_arr = np.empty(n, dtype=np.uint8)
    nxt_arr = np.empty(n, dtype=np.intp)
    queue_arr = np.empty(n, dtype=np.intp)
    cdef unsigned char[::1] good = good_arr
    cdef Py_ssize_t[::1] nxt = nxt_arr
    cdef Py_ssize_t[::1] queue = queue_arr

    # fix rows in order, each to the smallest column still completable
    for i in range(n):
        for j in range(n):
            good[j] = 0
        t = match[i]
        good[t] = 1
        queue[0] = t
        head = 0
        tail = 1
        while head < tail:
            c = queue[head]
            head += 1
            for r in range(i + 1, n):
                if tight[r, c] and not good[match[r]]:
                    good[match[r]] = 1
                    nxt[match[r]] = c
                    queue[tail] = match[r]
                    tail += 1
        best = t
        for j in range(t):
            if tight[i, j] and good[j]:
                best = j
                break
        if best == t:
            continue
        c = best
        owner = i
        while True:
            prev_owner = col_owner[c]
            match[owner] = c
            col_owner[c] = owner
            if c == t:
                break
            owner = prev_owner
            c = nxt[c]
    return match_arr


def rle_encode(const unsigned char[::1] flat):
    """Background-first run lengths of a flattened binary mask."""
    cdef Py_ssize_t n = flat.shape[0]
    cdef Py_ssize_t k, start = 0
    cdef unsigned char cur = 0
    runs = []
    for k in range(n):
        if (flat[k] != 0) != cur:
            runs.append(k - start)
            start = k
            cur = 1 - cur
    runs.append(n - start)
    return runs


def rle_decode(const long long[::1] runs, Py_ssize_t total):
    """Expand runs into a flat uint8 mask of length ``total``.

    Raises ValueError instead of touching memory past ``total``.
    """
    out_arr = np.zeros(total, dtype=np.uint8)
    cdef unsigned char[::1] out = out_arr
    cdef Py_ssize_t k, m = runs.shape[0], pos = 0, q
    cdef long long run
    cdef unsigned char val = 0
    for k in range(m):
        run = runs[k]
        if run < 0:
            raise ValueError(f"negative run length at index {k}")
        if run > total - pos:
            raise ValueError(f"runs overflow the mask at index {k}")
        if val:
            for q in range(pos, pos + run):
                out[q] = 1
        pos += run
        val = 1 - val
    if pos != total:
        raise ValueError(f"runs cover {pos} pixels, expected {total}")
    return out_arr
