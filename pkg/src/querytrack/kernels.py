"""Backend selection for the hot loops.

The compiled extension is preferred; set ``QUERYTRACK_PURE=1`` to force the
numpy fallback. ``BACKEND`` names the active implementation.
"""
import os

import numpy as np

from . import _fallback
from .errors import FormatError

try:
    if os.environ.get("QUERYTRACK_PURE", "") not in ("", "0"):
        raise ImportError("pure backend requested")
    from . import _kernels as _impl

    BACKEND = "compiled"
except ImportError:
    _impl = _fallback
    BACKEND = "python"


def tolerance_for(cost):
    return 1e-9 * (1.0 + float(np.max(np.abs(cost)))) * max(1, cost.shape[0])


def solve_square(cost, backend=None):
    """Lexicographically smallest optimal ``row_to_col`` for a square cost."""
    impl = _select(backend)
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    if cost.shape[0] == 0:
        return np.empty(0, dtype=np.intp)
    # shift so the solver works on nonnegative values; argmin is unchanged
    shifted = cost - cost.min()
    return np.asarray(impl.solve_square(shifted, tolerance_for(shifted)), dtype=np.intp)


def rle_encode(mask, backend=None):
    impl = _select(backend)
    flat = np.ascontiguousarray(np.asarray(mask).reshape(-1) != 0, dtype=np.uint8)
    return impl.rle_encode(flat)


def rle_decode(runs, total, backend=None):
    """Decode to a flat uint8 array; every malformed input raises FormatError."""
    impl = _select(backend)
    arr = _as_run_array(runs)
    try:
        return impl.rle_decode(arr, int(total))
    except ValueError as exc:
        raise FormatError(str(exc)) from None


def _as_run_array(runs):
    if isinstance(runs, (str, bytes, dict)):
        raise FormatError("run list must be a sequence of integers")
    try:
        arr = np.asarray(runs)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"unreadable run list: {exc}") from None
    if arr.ndim != 1:
        raise FormatError("run list must be one-dimensional")
    if arr.size == 0:
        return np.zeros(0, dtype=np.int64)
    if arr.dtype.kind == "u" and arr.max() > np.iinfo(np.int64).max:
        raise FormatError("run length exceeds int64")
    if arr.dtype.kind == "O":
        if not all(isinstance(x, (int, np.integer)) for x in arr):
            raise FormatError("run lengths must be integers")
    elif arr.dtype.kind not in "iub":
        raise FormatError(f"run lengths must be integers, got dtype {arr.dtype}")
    try:
        return np.ascontiguousarray(arr, dtype=np.int64)
    except OverflowError:
        raise FormatError("run length exceeds int64") from None


def _select(backend):
    if backend is None:
        return _impl
    if backend == "python":
        return _fallback
    if backend == "compiled":
        if BACKEND != "compiled":
            raise ImportError("compiled kernels are not available")
        return _impl
    raise ValueError(f"unknown backend {backend!r}")
