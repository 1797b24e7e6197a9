"""Rectangular assignment and the score matrices used for association."""
import numpy as np

from . import kernels
from .errors import InputError


def hungarian(cost, backend=None):
    """Minimum-cost assignment of rows to columns.

    Rectangular matrices are allowed; exactly ``min(n, m)`` pairs are
    returned, sorted by row. Among equal-cost optima the lexicographically
    smallest pair list wins, so results are reproducible.

    >>> hungarian([[5, 1, 9], [1, 9, 9]])
    [(0, 1), (1, 0)]
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] < 1 or cost.shape[1] < 1:
        raise InputError(f"cost must be a non-empty 2-D matrix, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise InputError("cost matrix contains non-finite entries")
    n, m = cost.shape
    size = max(n, m)
    # zero-cost dummy rows/cols sit after the real ones, so the row-wise
    # lexicographic order over the square problem is the one we want
    square = np.zeros((size, size))
    square[:n, :m] = cost
    row_to_col = kernels.solve_square(square, backend)
    return [(i, int(row_to_col[i])) for i in range(n) if row_to_col[i] < m]


def assignment_cost(cost, pairs):
    cost = np.asarray(cost, dtype=np.float64)
    return float(sum(cost[i, j] for i, j in pairs))


def max_score_assignment(score, backend=None):
    return hungarian(-np.asarray(score, dtype=np.float64), backend)


def cosine_score_matrix(prev, nxt):
    """Cosine similarity between every row of ``prev`` and every row of ``nxt``.

    Rows with zero norm score 0 against everything.
    """
    prev = np.asarray(prev, dtype=np.float64)
    nxt = np.asarray(nxt, dtype=np.float64)
    if prev.ndim != 2 or nxt.ndim != 2 or prev.shape[1] != nxt.shape[1]:
        raise InputError(f"embedding dimensions differ: {prev.shape} vs {nxt.shape}")
    a = _unit_rows(prev)
    b = _unit_rows(nxt)
    return np.clip(a @ b.T, -1.0, 1.0)


def _unit_rows(x):
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    return np.where(norms > 0, x / safe, 0.0)


def mask_iou_matrix(prev, nxt):
    """Pairwise IoU between two stacks of binary masks (n×H×W, m×H×W)."""
    prev = np.asarray(prev).astype(bool)
    nxt = np.asarray(nxt).astype(bool)
    if prev.ndim != 3 or nxt.ndim != 3 or prev.shape[1:] != nxt.shape[1:]:
        raise InputError(f"mask stacks have mismatched shapes {prev.shape} vs {nxt.shape}")
    a = prev.reshape(prev.shape[0], -1).astype(np.float64)
    b = nxt.reshape(nxt.shape[0], -1).astype(np.float64)
    inter = a @ b.T
    union = a.sum(1)[:, None] + b.sum(1)[None, :] - inter
    return np.divide(inter, union, out=np.zeros_like(inter), where=union > 0)


def combined_score_matrix(cos, iou):
    cos = np.asarray(cos, dtype=np.float64)
    iou = np.asarray(iou, dtype=np.float64)
    if cos.shape != iou.shape:
        raise InputError(f"score shapes differ: {cos.shape} vs {iou.shape}")
    return 0.5 * cos + 0.5 * iou
