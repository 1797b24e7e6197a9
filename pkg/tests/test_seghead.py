import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from querytrack import seghead, synth
from querytrack.errors import InputError, NumericError, TrainingError
from querytrack.seghead import GroundTruthFrame, dice_loss, frame_loss, hinge_matching_loss
from querytrack.structures import FramePrediction


def small_problem(seed=0, n=4, c=8, k=3, hw=(6, 6), num_gt=2):
    rng = np.random.default_rng(seed)
    params = seghead.init_params(n, c, k, 3 + k, seed=seed)
    # non-trivial second layer so every block has a visible gradient
    params.w2 = rng.normal(0, 0.3, params.w2.shape)
    params.b1 = rng.normal(0, 0.3, params.b1.shape)
    image = rng.normal(size=hw + (3 + k,))
    labels = rng.integers(-1, num_gt, size=hw)
    masks = np.stack([labels == j for j in range(num_gt)])
    gt = GroundTruthFrame(masks, rng.integers(0, k, size=num_gt))
    return params, image, gt


def fd_gradients(params, image, gt, assignment, eps=1e-5):
    out = {}
    for name in seghead.LEARNABLE:
        base = getattr(params, name)
        g = np.zeros_like(base)
        for idx in np.ndindex(base.shape):
            orig = base[idx]
            base[idx] = orig + eps
            up = seghead.loss_value(params, image, gt, assignment)
            base[idx] = orig - eps
            down = seghead.loss_value(params, image, gt, assignment)
            base[idx] = orig
            g[idx] = (up - down) / (2 * eps)
        out[name] = g
    return out


def rel_error(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)


# ---------------------------------------------------------------- forward


def test_zero_query_gives_half_mask():
    f = np.random.default_rng(0).normal(size=(3, 3, 4))
    np.testing.assert_allclose(seghead.mask_from_queries(np.zeros((1, 4)), f), 0.5)


def test_large_inner_product_saturates():
    f = np.ones((2, 2, 3))
    m = seghead.mask_from_queries(np.full((1, 3), 50.0), f)
    assert np.all(m > 1 - 1e-12)


def test_single_pixel_inner_product_one():
    q = np.array([[1.0, 2.0, 0.0]])
    f = np.zeros((2, 2, 3))
    f[0, 0] = q[0] / np.dot(q[0], q[0])
    f[0, 1] = f[1, 0] = f[1, 1] = [0.0, 0.0, 1.0]
    m = seghead.mask_from_queries(q, f)[0]
    assert m[0, 0] == pytest.approx(1 / (1 + np.exp(-1)))
    np.testing.assert_allclose([m[0, 1], m[1, 0], m[1, 1]], 0.5)


def test_forward_outputs_valid_prediction():
    params, image, _ = small_problem()
    pred = seghead.forward(params, image)
    pred.validate()
    assert pred.queries.shape == (4, 8)
    assert pred.soft_masks.shape == (4, 6, 6)
    assert pred.class_dists.shape == (4, 4)


def test_forward_rejects_wrong_channels():
    params, image, _ = small_problem()
    with pytest.raises(InputError):
        seghead.forward(params, image[..., :2])


def test_forward_non_finite_is_numeric_error():
    params, image, _ = small_problem()
    params.w2[:] = 1e308
    params.b1[:] = 1.0
    with pytest.raises(NumericError):
        seghead.forward(params, image)


# ---------------------------------------------------------------- dice


def test_dice_examples():
    g = np.array([1.0, 1.0, 0.0, 0.0]).reshape(2, 2)
    assert dice_loss(g, g) == 0.0
    assert dice_loss(1 - g, g) == pytest.approx(0.8)
    assert dice_loss(np.full((2, 2), 0.5), np.ones((2, 2))) == pytest.approx(1 - 5 / 7)


def test_dice_shape_mismatch():
    with pytest.raises(InputError):
        dice_loss(np.zeros((2, 2)), np.zeros((2, 3)))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_dice_range_and_symmetry(seed):
    rng = np.random.default_rng(seed)
    p, g = rng.random((3, 3)), rng.random((3, 3))
    d = dice_loss(p, g)
    assert 0.0 <= d <= 1.0
    assert d == pytest.approx(dice_loss(g, p))


def test_dice_zero_only_for_equal_binary():
    g = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert dice_loss(g, g) == 0.0
    assert dice_loss(np.clip(g, 0.1, 0.9), g) > 0.0
    assert dice_loss(np.array([[1.0, 1.0], [0.0, 1.0]]), g) > 0.0


# ---------------------------------------------------------------- frame loss


def independent_pairwise(pred, gt):
    n, L = pred.num_queries, gt.num_instances
    cost = np.zeros((n, L))
    for i in range(n):
        p = pred.soft_masks[i].ravel()
        for j in range(L):
            g = gt.masks[j].ravel().astype(float)
            bce = -np.mean(g * np.log(p) + (1 - g) * np.log(1 - p))
            dice = 1 - (2 * np.sum(p * g) + 1) / (p.sum() + g.sum() + 1)
            ce = -np.log(pred.class_dists[i, gt.classes[j]])
            cost[i, j] = 5.0 * (bce + dice) + 2.0 * ce
    return cost


def random_prediction(rng, n, k, hw):
    return FramePrediction(
        rng.normal(size=(n, 4)),
        rng.uniform(0.02, 0.98, size=(n,) + hw),
        rng.dirichlet(np.ones(k + 1), size=n),
    )


def test_exact_prediction_near_zero_loss():
    masks = np.zeros((2, 4, 4), bool)
    masks[0, :2] = True
    masks[1, 2:, :2] = True
    gt = GroundTruthFrame(masks, [0, 1])
    eps = 1e-9
    soft = np.full((4, 4, 4), eps)
    soft[1] = np.where(masks[0], 1 - eps, eps)
    soft[3] = np.where(masks[1], 1 - eps, eps)
    dists = np.full((4, 3), eps)
    dists[[0, 2], 2] = 1 - 2 * eps
    dists[1, 0] = dists[3, 1] = 1 - 2 * eps
    assignment, loss = frame_loss(FramePrediction(np.eye(4), soft, dists), gt)
    assert sorted(assignment) == [(1, 0), (3, 1)]
    assert loss.total < 1e-6


def test_no_ground_truth_is_pure_null_cross_entropy():
    rng = np.random.default_rng(1)
    pred = random_prediction(rng, 5, 2, (3, 3))
    gt = GroundTruthFrame(np.zeros((0, 3, 3), bool), [])
    assignment, loss = frame_loss(pred, gt)
    assert assignment == []
    assert loss.total == pytest.approx(2.0 * np.mean(-np.log(pred.class_dists[:, -1])))
    assert loss.bce == loss.dice == 0.0


def test_too_many_instances():
    rng = np.random.default_rng(2)
    pred = random_prediction(rng, 2, 2, (3, 3))
    gt = GroundTruthFrame(np.ones((3, 3, 3), bool), [0, 1, 0])
    with pytest.raises(InputError):
        frame_loss(pred, gt)


def brute_assignment(cost):
    n, L = cost.shape
    best = min(itertools.permutations(range(n), L), key=lambda rows: sum(cost[r, j] for j, r in enumerate(rows)))
    return sorted((r, j) for j, r in enumerate(best))


def test_assignment_small_instance_brute_force():
    rng = np.random.default_rng(3)
    pred = random_prediction(rng, 4, 3, (4, 4))
    labels = rng.integers(-1, 2, size=(4, 4))
    gt = GroundTruthFrame(np.stack([labels == 0, labels == 1]), [0, 2])
    assignment, _ = frame_loss(pred, gt)
    assert sorted(assignment) == brute_assignment(independent_pairwise(pred, gt))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(0, 4), st.integers(0, 2**32 - 1))
def test_assignment_optimal_property(n, L, seed):
    L = min(L, n)
    rng = np.random.default_rng(seed)
    pred = random_prediction(rng, n, 2, (3, 3))
    labels = rng.integers(-1, max(L, 1), size=(3, 3))
    gt = GroundTruthFrame(np.array([labels == j for j in range(L)], bool).reshape(L, 3, 3), rng.integers(0, 2, size=L))
    assignment, loss = frame_loss(pred, gt)
    if L:
        cost = independent_pairwise(pred, gt)
        want = brute_assignment(cost)
        got_total = sum(cost[i, j] for i, j in assignment)
        assert got_total == pytest.approx(sum(cost[i, j] for i, j in want), abs=1e-9)
    assert loss.total == pytest.approx(5.0 * (loss.bce + loss.dice) + 2.0 * loss.cls)


# ---------------------------------------------------------------- gradients


def test_gradients_match_finite_differences():
    params, image, gt = small_problem(seed=5)
    _, grads, assignment = seghead.gradient(params, image, gt)
    fd = fd_gradients(params, image, gt, assignment)
    for name in seghead.LEARNABLE:
        assert rel_error(grads[name], fd[name]) < 1e-5, name


def test_all_null_ground_truth_pushes_null_logit_up():
    params, image, _ = small_problem()
    gt = GroundTruthFrame(np.zeros((0, 6, 6), bool), [])
    _, grads, _ = seghead.gradient(params, image, gt)
    assert grads["bc"][-1] < 0
    assert np.all(grads["bc"][:-1] > 0)


def test_zero_learning_rate_step():
    params, image, gt = small_problem()
    loss, grads, _ = seghead.gradient(params, image, gt)
    assert seghead.loss_value(params.updated(grads, 0.0), image, gt) == loss.total


def test_hinge_gradients_match_finite_differences():
    rng = np.random.default_rng(4)
    a, b = rng.normal(size=(4, 3)), rng.normal(size=(5, 3))
    pairs = [(0, 1), (2, 0), (3, 4)]
    _, da, db = hinge_matching_loss(a, b, pairs, 0.5, return_grad=True)
    eps = 1e-6
    for arr, grad in ((a, da), (b, db)):
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + eps
            up = hinge_matching_loss(a, b, pairs, 0.5)
            arr[idx] = orig - eps
            down = hinge_matching_loss(a, b, pairs, 0.5)
            arr[idx] = orig
            assert grad[idx] == pytest.approx((up - down) / (2 * eps), abs=1e-6)


# ---------------------------------------------------------------- hinge


def test_hinge_inactive_when_margin_met():
    a = np.array([[1.0, 0.0]])
    b = np.array([[2.0, 0.0], [0.0, 1.0]])
    assert hinge_matching_loss(a, b, [(0, 0)], margin=0.5) == 0.0


def test_hinge_arithmetic_example():
    # correct score 0.2, distractor 0.9
    a = np.array([[1.0, 0.0]])
    b = np.array([[0.2, 0.0], [0.9, 0.0]])
    assert hinge_matching_loss(a, b, [(0, 0)], margin=0.5) == pytest.approx(1.2)


def test_hinge_monotone_in_correct_score():
    a = np.array([[1.0, 0.0]])
    vals = []
    for s in np.linspace(-1, 2, 13):
        b = np.array([[s, 0.0], [0.4, 0.0], [0.1, 0.0]])
        vals.append(hinge_matching_loss(a, b, [(0, 0)]))
    assert all(x >= y for x, y in zip(vals, vals[1:]))


def test_hinge_rejects_non_injective_pairs():
    a = np.eye(3)
    with pytest.raises(InputError):
        hinge_matching_loss(a, a, [(0, 1), (0, 2)])
    with pytest.raises(InputError):
        hinge_matching_loss(a, a, [(0, 1), (2, 1)])


def test_limited_range_sampler_is_adjacent():
    rng = np.random.default_rng(0)
    frames = [0, 3, 4, 9, 15, 16, 30]
    for _ in range(500):
        t0, t1 = seghead.sample_hinge_frames(frames, rng, limited_range=True)
        assert frames.index(t1) == frames.index(t0) + 1
    assert seghead.sample_hinge_frames([5], rng) is None


def test_full_range_sampler_reaches_beyond_neighbours():
    rng = np.random.default_rng(0)
    frames = list(range(10))
    gaps = {b - a for a, b in (seghead.sample_hinge_frames(frames, rng) for _ in range(300))}
    assert max(gaps) > 1 and min(gaps) >= 1


# ---------------------------------------------------------------- training


def two_class_frames(count_videos=5):
    base = synth.ScenarioSpec(motion="linear", num_instances=2, num_classes=2)
    return synth.training_frames([synth.generate(s).annotation for s in synth.family(base, count_videos)])


def test_zero_iterations_leave_params():
    frames = two_class_frames(1)
    p0 = seghead.init_params(8, 16, 2, 5)
    res = seghead.train(p0, frames, seghead.TrainConfig(iters=0))
    assert res.losses == []
    for name in seghead.LEARNABLE:
        np.testing.assert_array_equal(getattr(res.params, name), getattr(p0, name))


def test_training_deterministic_and_resumable():
    frames = two_class_frames(1)
    p0 = seghead.init_params(8, 16, 2, 5)
    cfg = seghead.TrainConfig(iters=12, batch_size=4)
    a = seghead.train(p0, frames, cfg)
    b = seghead.train(p0, frames, cfg)
    half = seghead.train(p0, frames, seghead.TrainConfig(iters=5, batch_size=4))
    resumed = seghead.train(half.params, frames, cfg, start_iter=5, losses=half.losses)
    assert a.losses == b.losses == resumed.losses
    for name in seghead.LEARNABLE:
        assert getattr(a.params, name).tobytes() == getattr(resumed.params, name).tobytes()


def test_divergence_reports_iteration():
    frames = two_class_frames(1)
    p0 = seghead.init_params(8, 16, 2, 5)
    with pytest.raises(TrainingError) as info:
        seghead.train(p0, frames, seghead.TrainConfig(iters=50, lr=1e200))
    assert info.value.iteration >= 0
    assert f"iteration {info.value.iteration}" in str(info.value)


def test_training_with_hinge_term_runs():
    anns = [synth.generate(s).annotation for s in synth.family(synth.ScenarioSpec(), 2)]
    frames = synth.training_frames(anns)
    p0 = seghead.init_params(8, 16, 2, 5)
    cfg = seghead.TrainConfig(iters=5, hinge_weight=0.5)
    res = seghead.train(p0, frames, cfg, videos=synth.training_videos(anns))
    assert len(res.losses) == 5 and np.all(np.isfinite(res.losses))


def test_fifty_frame_two_class_training_reduces_loss():
    frames = two_class_frames(5)
    assert len(frames) == 50
    p0 = seghead.init_params(8, 16, 2, 5, seed=0)
    before = seghead.dataset_loss(p0, frames)
    res = seghead.train(p0, frames, seghead.TrainConfig(iters=2000, lr=0.05, seed=0))
    after = seghead.dataset_loss(res.params, frames)
    assert after < 0.2 * before


def test_partition_proxy_on_trained_model(trained_toy):
    acc = seghead.partition_accuracy(trained_toy["result"].params, trained_toy["held_out"])
    assert acc >= 0.95
