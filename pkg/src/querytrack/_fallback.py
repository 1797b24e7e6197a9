"""Pure-Python/numpy versions of the compiled kernels.

Used when the extension is not built, or when ``QUERYTRACK_PURE=1``.
"""
import numpy as np


# below this size numpy call overhead dominates and plain lists are faster
SMALL = 48


def solve_square(cost, tol):
    n = cost.shape[0]
    if n <= SMALL:
        return np.asarray(_solve_small(cost.tolist(), tol), dtype=np.intp)
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.intp)
    way = np.zeros(n + 1, dtype=np.intp)
    # pad a virtual column 0 so indices line up with the 1-based potentials
    padded = np.zeros((n + 1, n + 1))
    padded[1:, 1:] = cost

    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cur = padded[i0] - u[i0] - v
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            cand = np.where(free, minv, np.inf)
            j1 = int(np.argmin(cand))
            delta = cand[j1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break

    match = np.empty(n, dtype=np.intp)
    match[p[1:] - 1] = np.arange(n)
    col_owner = p[1:] - 1
    tight = (cost - u[1:, None] - v[None, 1:]) <= tol

    for i in range(n):
        t = match[i]
        good = np.zeros(n, dtype=bool)
        nxt = np.full(n, -1, dtype=np.intp)
        good[t] = True
        queue = [t]
        head = 0
        while head < len(queue):
            c = queue[head]
            head += 1
            rows = i + 1 + np.flatnonzero(tight[i + 1:, c])
            for r in rows:
                mc = match[r]
                if not good[mc]:
                    good[mc] = True
                    nxt[mc] = c
                    queue.append(mc)
        options = np.flatnonzero(tight[i, :t] & good[:t])
        if options.size == 0:
            continue
        c = options[0]
        owner = i
        while True:
            prev_owner = col_owner[c]
            match[owner] = c
            col_owner[c] = owner
            if c == t:
                break
            owner = prev_owner
            c = nxt[c]
    return match


def _solve_small(cost, tol):
    """``solve_square`` on nested lists; same arithmetic, same answer."""
    n = len(cost)
    inf = float("inf")
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    p = [0] * (n + 1)
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            row = cost[i0 - 1] if i0 else None
            ui = u[i0]
            delta, j1 = inf, 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = ((row[j - 1] if row is not None else 0.0) - ui) - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta, j1 = minv[j], j
            if j1 == 0:
                # every free column is +inf; numpy's argmin lands on column 0
                delta = inf
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

    match = [0] * n
    for j in range(1, n + 1):
        match[p[j] - 1] = j - 1
    col_owner = [p[j] - 1 for j in range(1, n + 1)]
    tight = [[(cost[r][c] - u[r + 1]) - v[c + 1] <= tol for c in range(n)] for r in range(n)]

    for i in range(n):
        t = match[i]
        good = [False] * n
        nxt = [-1] * n
        good[t] = True
        queue = [t]
        head = 0
        while head < len(queue):
            c = queue[head]
            head += 1
            for r in range(i + 1, n):
                if tight[r][c]:
                    mc = match[r]
                    if not good[mc]:
                        good[mc] = True
                        nxt[mc] = c
                        queue.append(mc)
        c = next((c for c in range(t) if tight[i][c] and good[c]), None)
        if c is None:
            continue
        owner = i
        while True:
            prev_owner = col_owner[c]
            match[owner] = c
            col_owner[c] = owner
            if c == t:
                break
            owner = prev_owner
            c = nxt[c]
    return match


def rle_encode(flat):
    flat = np.asarray(flat, dtype=bool)
    n = flat.size
    if n == 0:
        return [0]
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    edges = np.concatenate(([0], change, [n]))
    runs = np.diff(edges).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return runs


def rle_decode(runs, total):
    runs = np.asarray(runs, dtype=np.int64)
    if np.any(runs < 0):
        k = int(np.flatnonzero(runs < 0)[0])
        raise ValueError(f"negative run length at index {k}")
    # cumulative check before allocating so overflowing lists never expand
    ends = np.cumsum(np.minimum(runs, total + 1))
    over = np.flatnonzero(ends > total)
    if over.size:
        raise ValueError(f"runs overflow the mask at index {int(over[0])}")
    pos = int(ends[-1]) if ends.size else 0
    if pos != total:
        raise ValueError(f"runs cover {pos} pixels, expected {total}")
    values = np.arange(runs.size, dtype=np.int64) % 2
    return np.repeat(values.astype(np.uint8), runs)
