import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linear_sum_assignment

from querytrack import kernels
from querytrack.errors import InputError
from querytrack.matching import (
    assignment_cost,
    combined_score_matrix,
    cosine_score_matrix,
    hungarian,
    mask_iou_matrix,
    max_score_assignment,
)

BACKENDS = ["python"] + (["compiled"] if kernels.BACKEND == "compiled" else [])


def brute_force(cost):
    """(min total, lexicographically smallest optimal pair list) by enumeration."""
    cost = np.asarray(cost, dtype=float)
    n, m = cost.shape
    best = None
    if n <= m:
        for cols in itertools.permutations(range(m), n):
            pairs = list(zip(range(n), cols))
            key = (sum(cost[i, j] for i, j in pairs), pairs)
            if best is None or key[0] < best[0] - 1e-12:
                best = key
    else:
        for rows in itertools.permutations(range(n), m):
            pairs = sorted(zip(rows, range(m)))
            total = sum(cost[i, j] for i, j in pairs)
            if best is None or total < best[0] - 1e-12 or (abs(total - best[0]) <= 1e-12 and pairs < best[1]):
                best = (total, pairs)
    return best


def test_identity_case():
    assert hungarian([[0, 1], [1, 0]]) == [(0, 0), (1, 1)]


def test_two_by_three_example():
    pairs = hungarian([[5, 1, 9], [1, 9, 9]])
    assert pairs == [(0, 1), (1, 0)]
    assert assignment_cost([[5, 1, 9], [1, 9, 9]], pairs) == 2


def test_five_by_five_uniform_matches_all_permutations():
    rng = np.random.default_rng(7)
    cost = rng.uniform(size=(5, 5))
    best = min(itertools.permutations(range(5)), key=lambda p: sum(cost[i, p[i]] for i in range(5)))
    assert hungarian(cost) == list(enumerate(best))


@pytest.mark.parametrize("backend", BACKENDS)
def test_random_rectangular_against_brute_force(backend):
    rng = np.random.default_rng(11)
    for _ in range(200):
        n, m = rng.integers(1, 6, size=2)
        cost = rng.normal(size=(n, m))
        total, pairs = brute_force(cost)
        got = hungarian(cost, backend)
        assert got == pairs
        assert assignment_cost(cost, got) == pytest.approx(total, abs=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_ties_take_lexicographically_smallest(backend):
    rng = np.random.default_rng(3)
    for _ in range(300):
        n, m = rng.integers(1, 6, size=2)
        cost = rng.integers(0, 3, size=(n, m)).astype(float)
        assert hungarian(cost, backend) == brute_force(cost)[1]


def test_all_equal_costs_give_diagonal():
    assert hungarian(np.ones((3, 4))) == [(0, 0), (1, 1), (2, 2)]
    assert hungarian(np.ones((4, 2))) == [(0, 0), (1, 1)]


def test_agrees_with_scipy_on_large_matrix():
    rng = np.random.default_rng(0)
    cost = rng.uniform(size=(60, 45))
    r, c = linear_sum_assignment(cost)
    assert assignment_cost(cost, hungarian(cost)) == pytest.approx(cost[r, c].sum(), rel=1e-12)


def test_large_magnitudes_and_negative_values():
    rng = np.random.default_rng(5)
    cost = rng.normal(scale=1e6, size=(6, 6)) - 3e6
    assert hungarian(cost) == brute_force(cost)[1]


@pytest.mark.parametrize("bad", [np.inf, -np.inf, np.nan])
def test_non_finite_rejected(bad):
    with pytest.raises(InputError):
        hungarian([[0.0, bad], [1.0, 0.0]])


def test_empty_rejected():
    with pytest.raises(InputError):
        hungarian(np.zeros((0, 3)))


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_bijective_and_min_size(n, m, seed):
    cost = np.random.default_rng(seed).normal(size=(n, m))
    pairs = hungarian(cost)
    assert len(pairs) == min(n, m)
    assert len({i for i, _ in pairs}) == len(pairs)
    assert len({j for _, j in pairs}) == len(pairs)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 7), st.integers(1, 7), st.integers(0, 2**32 - 1))
def test_optimality_property(n, m, seed):
    cost = np.random.default_rng(seed).uniform(-1, 1, size=(n, m))
    assert assignment_cost(cost, hungarian(cost)) == pytest.approx(brute_force(cost)[0], abs=1e-9)


# ---------------------------------------------------------------- score matrices


def test_cosine_examples():
    e = np.eye(2)
    assert cosine_score_matrix(e[:1], e[:1])[0, 0] == pytest.approx(1.0)
    assert cosine_score_matrix(e[:1], e[1:])[0, 0] == 0.0
    assert cosine_score_matrix([[1, 2]], [[2, 1]])[0, 0] == pytest.approx(0.8)


def test_cosine_zero_rows_score_zero():
    s = cosine_score_matrix([[0.0, 0.0], [1.0, 0.0]], [[1.0, 0.0], [0.0, 0.0]])
    assert s.tolist() == [[0.0, 0.0], [1.0, 0.0]]


def test_cosine_dimension_mismatch():
    with pytest.raises(InputError):
        cosine_score_matrix(np.ones((2, 3)), np.ones((2, 4)))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_cosine_in_range_and_scale_invariant(n, m, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(n, 4)), rng.normal(size=(m, 4))
    s = cosine_score_matrix(a, b)
    assert np.all(s >= -1) and np.all(s <= 1)
    scaled = cosine_score_matrix(a * rng.uniform(0.1, 10, (n, 1)), b * rng.uniform(0.1, 10, (m, 1)))
    np.testing.assert_allclose(scaled, s, atol=1e-12)
    assert max_score_assignment(scaled) == max_score_assignment(s)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_permutation_equivariance(n, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(n, 5)), rng.normal(size=(n, 5))
    perm = rng.permutation(n)
    s = cosine_score_matrix(a, b)
    sp = cosine_score_matrix(a, b[perm])
    np.testing.assert_allclose(sp, s[:, perm])
    base = dict(max_score_assignment(s))
    moved = dict(max_score_assignment(sp))
    # column j of sp is column perm[j] of s, so the optimum moves to inv[...]
    inv = np.argsort(perm)
    assert moved == {i: int(inv[base[i]]) for i in base}


def test_iou_examples():
    a = np.zeros((1, 2, 2), bool)
    a[0, 0, :] = True
    assert mask_iou_matrix(a, a)[0, 0] == 1.0
    assert mask_iou_matrix(a, ~a)[0, 0] == 0.0
    b = np.zeros((1, 2, 2), bool)
    b[0, 0, 0] = b[0, 1, 0] = True
    assert mask_iou_matrix(a, b)[0, 0] == pytest.approx(1 / 3)
    empty = np.zeros((1, 2, 2), bool)
    assert mask_iou_matrix(empty, empty)[0, 0] == 0.0


def test_iou_shape_mismatch():
    with pytest.raises(InputError):
        mask_iou_matrix(np.zeros((1, 2, 2)), np.zeros((1, 3, 2)))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_iou_symmetry(n, m, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.random((n, 4, 4)) < 0.4, rng.random((m, 4, 4)) < 0.4
    np.testing.assert_array_equal(mask_iou_matrix(a, b), mask_iou_matrix(b, a).T)


def test_combined_examples():
    assert combined_score_matrix([[1.0]], [[1.0]])[0, 0] == 1.0
    assert combined_score_matrix([[0.8]], [[0.0]])[0, 0] == pytest.approx(0.4)
    c, i = np.array([[0.2, -0.4]]), np.array([[0.6, 1.0]])
    np.testing.assert_allclose(combined_score_matrix(c, i), (c + i) / 2)
    with pytest.raises(InputError):
        combined_score_matrix(np.ones((2, 2)), np.ones((2, 3)))
