import os
import subprocess
import sys

import numpy as np
import pytest

from querytrack import kernels
from querytrack.errors import FormatError

needs_ext = pytest.mark.skipif(kernels.BACKEND != "compiled", reason="extension not built")


def test_pure_env_selects_fallback():
    env = dict(os.environ, QUERYTRACK_PURE="1")
    out = subprocess.run(
        [sys.executable, "-c", "from querytrack import kernels; print(kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.solve_square(np.zeros((2, 2)), backend="fortran")


@needs_ext
def test_backends_agree_on_solver():
    rng = np.random.default_rng(1)
    for _ in range(200):
        n = int(rng.integers(1, 12))
        cost = rng.integers(0, 4, size=(n, n)).astype(float) if rng.random() < 0.5 else rng.normal(size=(n, n))
        np.testing.assert_array_equal(
            kernels.solve_square(cost, "compiled"), kernels.solve_square(cost, "python")
        )


def test_fallback_small_and_numpy_paths_agree(monkeypatch):
    from querytrack import _fallback

    rng = np.random.default_rng(3)
    sizes = [1, 2, 5, 9, _fallback.SMALL, _fallback.SMALL + 1, 60]
    cases = []
    for n in sizes:
        for ties in (False, True):
            cost = rng.integers(0, 3, size=(n, n)).astype(float) if ties else rng.uniform(size=(n, n))
            cases.append(cost)
    small = [kernels.solve_square(c, "python") for c in cases]
    monkeypatch.setattr(_fallback, "SMALL", -1)
    for cost, got in zip(cases, small):
        np.testing.assert_array_equal(got, kernels.solve_square(cost, "python"))
        if kernels.BACKEND == "compiled":
            np.testing.assert_array_equal(got, kernels.solve_square(cost, "compiled"))


@needs_ext
def test_backends_agree_on_rle():
    rng = np.random.default_rng(2)
    for _ in range(300):
        mask = rng.random((int(rng.integers(1, 9)), int(rng.integers(1, 9)))) < rng.random()
        a = kernels.rle_encode(mask, "compiled")
        b = kernels.rle_encode(mask, "python")
        assert list(a) == list(b)
        total = mask.size
        np.testing.assert_array_equal(kernels.rle_decode(a, total, "compiled"), kernels.rle_decode(b, total, "python"))


@pytest.mark.parametrize("backend", ["python"] + (["compiled"] if kernels.BACKEND == "compiled" else []))
@pytest.mark.parametrize(
    "runs,total",
    [([5], 4), ([1, -1, 4], 4), ([], 4), ([2, 3], 4), ([0, 0, 0], 1), ([2**62, 2**62], 4)],
)
def test_decode_rejects_bad_runs(backend, runs, total):
    with pytest.raises(FormatError):
        kernels.rle_decode(runs, total, backend)


@pytest.mark.parametrize("runs", ["0110", b"\x00", {"a": 1}, [[1, 2]], [1.5, 2.5], [2**64]])
def test_decode_rejects_non_integer_input(runs):
    with pytest.raises(FormatError):
        kernels.rle_decode(runs, 4)


def test_zero_length_runs_allowed():
    np.testing.assert_array_equal(kernels.rle_decode([0, 0, 2, 2], 4), [0, 0, 1, 1])
