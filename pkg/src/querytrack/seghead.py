"""A small differentiable query-based segmentation head.

Masks come only from inner products between query embeddings and the
final per-pixel features, ``sigmoid(Q @ F.T)``; class scores come from a
linear head on the same queries. The transformer decoder is replaced by a
parameter-free attention pooling of the features followed by a residual
two-layer MLP, so the queries depend on the image.

Everything is numpy with hand-written gradients.
"""
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import InputError, NumericError, TrainingError
from .matching import cosine_score_matrix, hungarian
from .structures import FramePrediction

MASK_WEIGHT = 5.0
CLS_WEIGHT = 2.0
LEARNABLE = ("query_init", "w1", "b1", "w2", "b2", "wc", "bc")


@dataclass
class Encoder:
    """Frozen per-pixel random projection ``tanh(X @ weight + bias)``."""

    weight: np.ndarray
    bias: np.ndarray

    def __call__(self, image):
        image = np.asarray(image, dtype=np.float64)
        if image.ndim != 3 or image.shape[2] != self.weight.shape[0]:
            raise InputError(f"image shape {image.shape} does not fit encoder with {self.weight.shape[0]} channels")
        return np.tanh(image @ self.weight + self.bias)


@dataclass
class HeadParams:
    query_init: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    wc: np.ndarray
    bc: np.ndarray
    encoder: Encoder
    attn_temperature: float = 1.0

    @property
    def num_queries(self):
        return self.query_init.shape[0]

    @property
    def dim(self):
        return self.query_init.shape[1]

    @property
    def num_classes(self):
        return self.wc.shape[0] - 1

    def blocks(self):
        return {name: getattr(self, name) for name in LEARNABLE}

    def copy(self):
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        for name in LEARNABLE:
            kw[name] = kw[name].copy()
        kw["encoder"] = Encoder(self.encoder.weight.copy(), self.encoder.bias.copy())
        return HeadParams(**kw)

    def updated(self, grads, lr):
        new = self.copy()
        for name in LEARNABLE:
            setattr(new, name, getattr(self, name) - lr * grads[name])
        return new


def init_params(num_queries, dim, num_classes, in_channels, seed=0, query_scale=0.5, attn_temperature=1.0):
    rng = np.random.default_rng(seed)
    enc = Encoder(
        weight=rng.normal(0.0, 1.0, (in_channels, dim)),
        bias=rng.normal(0.0, 0.5, dim),
    )
    return HeadParams(
        query_init=rng.normal(0.0, query_scale, (num_queries, dim)),
        w1=rng.normal(0.0, 1.0 / np.sqrt(dim), (dim, dim)),
        b1=np.zeros(dim),
        w2=rng.normal(0.0, 0.1 / np.sqrt(dim), (dim, dim)),
        b2=np.zeros(dim),
        wc=rng.normal(0.0, 0.1 / np.sqrt(dim), (num_classes + 1, dim)),
        bc=np.zeros(num_classes + 1),
        encoder=enc,
        attn_temperature=attn_temperature,
    )


@dataclass
class GroundTruthFrame:
    """L binary masks (L×H×W) and their class indices in 0..K-1."""

    masks: np.ndarray
    classes: np.ndarray

    def __post_init__(self):
        self.masks = np.asarray(self.masks, dtype=bool)
        self.classes = np.asarray(self.classes, dtype=np.intp).reshape(-1)
        if self.masks.ndim != 3 or self.masks.shape[0] != self.classes.size:
            raise InputError("ground truth masks and classes disagree")

    @property
    def num_instances(self):
        return self.classes.size

    def onehot(self, num_classes):
        out = np.zeros((self.num_instances, num_classes))
        out[np.arange(self.num_instances), self.classes] = 1.0
        return out


@dataclass
class LossBreakdown:
    total: float
    cls: float
    bce: float
    dice: float


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softplus(x):
    return np.logaddexp(0.0, x)


def log_softmax(x):
    x = x - x.max(axis=-1, keepdims=True)
    return x - np.log(np.exp(x).sum(axis=-1, keepdims=True))


def mask_from_queries(queries, features):
    """Soft masks ``sigmoid(<Q_i, F[y, x]>)`` for features H×W×C."""
    queries = np.asarray(queries, dtype=np.float64)
    features = np.asarray(features, dtype=np.float64)
    h, w, c = features.shape
    return sigmoid(queries @ features.reshape(h * w, c).T).reshape(-1, h, w)


def _forward(params, image):
    # overflow shows up as non-finite values, which are checked below
    with np.errstate(over="ignore", invalid="ignore"):
        return _forward_pass(params, image)


def _forward_pass(params, image):
    feats = params.encoder(image)
    h, w, c = feats.shape
    f = feats.reshape(h * w, c)
    qi = params.query_init
    att_logits = qi @ f.T / params.attn_temperature
    att = np.exp(log_softmax(att_logits))
    z = qi + att @ f
    hid = np.tanh(z @ params.w1 + params.b1)
    q = z + hid @ params.w2 + params.b2
    mask_logits = q @ f.T
    cls_logits = q @ params.wc.T + params.bc
    cache = dict(f=f, shape=(h, w), att=att, z=z, hid=hid, q=q, mask_logits=mask_logits, cls_logits=cls_logits)
    for key in ("q", "mask_logits", "cls_logits"):
        if not np.all(np.isfinite(cache[key])):
            raise NumericError(f"non-finite {key} in forward pass")
    return cache


def forward(params, image):
    return _prediction(params, _forward(params, image))


def _prediction(params, cache):
    h, w = cache["shape"]
    n = params.num_queries
    masks = sigmoid(cache["mask_logits"]).reshape(n, h, w)
    # keep strictly inside (0, 1) for downstream validation
    masks = np.clip(masks, 1e-12, 1 - 1e-12)
    return FramePrediction(cache["q"], masks, np.exp(log_softmax(cache["cls_logits"])))


def predict_video(params, images):
    """Per-frame predictions, lazily, so a video never has to be held at once."""
    for image in images:
        yield forward(params, image)


def pixel_partition(pred):
    """Per-pixel index of the query with the largest object-weighted mask."""
    weight = 1.0 - pred.class_dists[:, -1]
    return np.argmax(weight[:, None, None] * pred.soft_masks, axis=0)


def partition_accuracy(params, annotations):
    """Fraction of foreground pixels whose ``pixel_partition`` query is the one matched to their instance."""
    hit = total = 0
    for ann in annotations:
        for t in np.flatnonzero(ann.annotated):
            _, cats, masks = ann.frame_masks(t)
            if not len(cats):
                continue
            gt = GroundTruthFrame(masks, cats)
            cache = _forward(params, ann.images[t])
            assignment = _loss_and_dlogits(cache, gt)[0]
            pred = _prediction(params, cache)
            want = np.full((ann.height, ann.width), -1)
            for i, j in assignment:
                want[masks[j]] = i
            fg = want >= 0
            hit += int(np.sum(pixel_partition(pred)[fg] == want[fg]))
            total += int(fg.sum())
    return hit / total if total else float("nan")


def association_accuracy(params, annotations):
    """Share of consecutive-frame instance pairs whose own query is the cosine-nearest.

    The query standing for an instance in a frame is the one the training
    assignment gives it. A pair (t, t+1) of instance g counts as correct
    when cos(Q_g^t, Q_g^{t+1}) beats cos(Q_g^t, Q_j^{t+1}) for every other
    query j.
    """
    hit = total = 0
    for ann in annotations:
        prev = None
        for t in range(ann.num_frames):
            ids, cats, masks = ann.frame_masks(t)
            cache = _forward(params, ann.images[t])
            owner = {}
            if ids:
                for i, j in _loss_and_dlogits(cache, GroundTruthFrame(masks, cats))[0]:
                    owner[ids[j]] = i
            q = cache["q"]
            if prev is not None:
                pq, powner = prev
                cos = cosine_score_matrix(pq, q)
                for g in sorted(set(powner) & set(owner)):
                    row = cos[powner[g]]
                    others = np.delete(row, owner[g])
                    hit += int(np.all(row[owner[g]] > others))
                    total += 1
            prev = (q, owner)
    return hit / total if total else float("nan")


def dice_loss(pred, gt):
    """Soft dice with smoothing 1: ``1 - (2Σpg + 1) / (Σp + Σg + 1)``."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise InputError(f"shape mismatch {pred.shape} vs {gt.shape}")
    return float(1.0 - (2.0 * np.sum(pred * gt) + 1.0) / (pred.sum() + gt.sum() + 1.0))


def bce_loss(logits, gt):
    """Mean binary cross-entropy from logits."""
    logits = np.asarray(logits, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    return float(np.mean(softplus(logits) - gt * logits))


def _pairwise(cache, gt):
    """N×L bce, dice and classification cost matrices."""
    lg = cache["mask_logits"]
    p = lg.shape[1]
    g = gt.masks.reshape(gt.num_instances, -1).astype(np.float64)
    s = sigmoid(lg)
    bce = softplus(lg).mean(axis=1)[:, None] - (lg @ g.T) / p
    dice = 1.0 - (2.0 * (s @ g.T) + 1.0) / (s.sum(1)[:, None] + g.sum(1)[None, :] + 1.0)
    logp = log_softmax(cache["cls_logits"])
    ce = -logp[:, gt.classes]
    return bce, dice, ce, logp


def pairwise_cost(pred_cache, gt):
    """N×L matching cost of a forward cache against ground truth."""
    bce, dice, ce, _ = _pairwise(pred_cache, gt)
    return MASK_WEIGHT * (bce + dice) + CLS_WEIGHT * ce


def _loss_and_dlogits(cache, gt, assignment=None):
    """Loss, assignment and gradients w.r.t. mask and class logits."""
    n, k = cache["cls_logits"].shape
    k -= 1
    L = gt.num_instances
    if L > n:
        raise InputError(f"{L} ground-truth instances exceed {n} queries")
    lg = cache["mask_logits"]
    num_pix = lg.shape[1]
    if L:
        bce, dice, ce, logp = _pairwise(cache, gt)
        if assignment is None:
            assignment = hungarian(MASK_WEIGHT * (bce + dice) + CLS_WEIGHT * ce)
    else:
        logp = log_softmax(cache["cls_logits"])
        assignment = []
    targets = np.full(n, k, dtype=np.intp)
    d_mask = np.zeros_like(lg)
    bce_sum = dice_sum = 0.0
    g = gt.masks.reshape(L, num_pix).astype(np.float64)
    for i, j in assignment:
        targets[i] = gt.classes[j]
        s = sigmoid(lg[i])
        bce_sum += bce[i, j]
        dice_sum += dice[i, j]
        a = 2.0 * np.dot(s, g[j]) + 1.0
        b = s.sum() + g[j].sum() + 1.0
        d_dice = (a - 2.0 * g[j] * b) / (b * b)
        d_mask[i] = MASK_WEIGHT / L * ((s - g[j]) / num_pix + d_dice * s * (1.0 - s))
    cls = float(-np.mean(logp[np.arange(n), targets]))
    d_cls = np.exp(logp)
    d_cls[np.arange(n), targets] -= 1.0
    d_cls *= CLS_WEIGHT / n
    bce_m = bce_sum / L if L else 0.0
    dice_m = dice_sum / L if L else 0.0
    total = MASK_WEIGHT * (bce_m + dice_m) + CLS_WEIGHT * cls
    return assignment, LossBreakdown(float(total), cls, float(bce_m), float(dice_m)), d_mask, d_cls


def frame_loss(pred, gt):
    """Match a FramePrediction to ground truth, then score the matched pairs.

    Returns ``(assignment, LossBreakdown)``; assignment pairs are
    (prediction index, GT index).
    """
    p = np.clip(pred.soft_masks.reshape(pred.num_queries, -1), 1e-15, 1 - 1e-15)
    cache = dict(
        mask_logits=np.log(p) - np.log1p(-p),
        cls_logits=np.log(np.clip(pred.class_dists, 1e-300, None)),
    )
    assignment, loss, _, _ = _loss_and_dlogits(cache, gt)
    return assignment, loss


def _backward(params, cache, d_mask, d_cls, d_q_extra=None):
    f, att, z, hid, q = cache["f"], cache["att"], cache["z"], cache["hid"], cache["q"]
    grads = {}
    d_q = d_mask @ f + d_cls @ params.wc
    if d_q_extra is not None:
        d_q = d_q + d_q_extra
    grads["wc"] = d_cls.T @ q
    grads["bc"] = d_cls.sum(axis=0)
    grads["w2"] = hid.T @ d_q
    grads["b2"] = d_q.sum(axis=0)
    d_pre = (d_q @ params.w2.T) * (1.0 - hid * hid)
    grads["w1"] = z.T @ d_pre
    grads["b1"] = d_pre.sum(axis=0)
    d_z = d_q + d_pre @ params.w1.T
    d_att = d_z @ f.T
    d_att_logits = att * (d_att - np.sum(d_att * att, axis=1, keepdims=True))
    grads["query_init"] = d_z + d_att_logits @ f / params.attn_temperature
    return grads


def gradient(params, image, gt, assignment=None):
    """Loss and exact gradients of the frame loss, assignment held fixed."""
    cache = _forward(params, image)
    assignment, loss, d_mask, d_cls = _loss_and_dlogits(cache, gt, assignment)
    grads = _backward(params, cache, d_mask, d_cls)
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name}")
    return loss, grads, assignment


def loss_value(params, image, gt, assignment=None):
    cache = _forward(params, image)
    return _loss_and_dlogits(cache, gt, assignment)[1].total


def hinge_matching_loss(q_a, q_b, gt_pairs, margin=0.5, return_grad=False):
    """Hinge on inner products: each correct pair must beat every other column by ``margin``.

    Averaged over matched pairs. With ``return_grad`` also returns the
    gradients w.r.t. ``q_a`` and ``q_b``.
    """
    q_a = np.asarray(q_a, dtype=np.float64)
    q_b = np.asarray(q_b, dtype=np.float64)
    rows = [i for i, _ in gt_pairs]
    cols = [j for _, j in gt_pairs]
    if len(set(rows)) != len(rows) or len(set(cols)) != len(cols):
        raise InputError("ground-truth pairs must be injective in both directions")
    d_a = np.zeros_like(q_a)
    d_b = np.zeros_like(q_b)
    if not gt_pairs:
        return (0.0, d_a, d_b) if return_grad else 0.0
    scores = q_a @ q_b.T
    total = 0.0
    m = len(gt_pairs)
    for i, j in gt_pairs:
        viol = margin - scores[i, j] + scores[i]
        viol[j] = 0.0
        active = viol > 0
        total += viol[active].sum()
        if return_grad:
            cnt = active.sum()
            d_a[i] += (q_b[active].sum(axis=0) - cnt * q_b[j]) / m
            d_b[active] += q_a[i] / m
            d_b[j] -= cnt * q_a[i] / m
    total /= m
    return (float(total), d_a, d_b) if return_grad else float(total)


def sample_hinge_frames(annotated_frames, rng, limited_range=False, max_gap=20):
    """Pick a pair of annotated frame indices for supervised matching.

    With ``limited_range`` the pair is always adjacent in the annotated
    list; otherwise the second frame is up to ``max_gap`` frames later.
    Returns None if fewer than two frames are annotated.
    """
    frames = sorted(int(t) for t in annotated_frames)
    if len(frames) < 2:
        return None
    if limited_range:
        k = int(rng.integers(0, len(frames) - 1))
        return frames[k], frames[k + 1]
    k = int(rng.integers(0, len(frames) - 1))
    later = [t for t in frames[k + 1:] if t - frames[k] <= max_gap] or [frames[k + 1]]
    return frames[k], later[int(rng.integers(0, len(later)))]


@dataclass
class TrainConfig:
    lr: float = 0.05
    iters: int = 2000
    seed: int = 0
    batch_size: int = 8
    hinge_weight: float = 0.0
    hinge_margin: float = 0.5
    limited_range: bool = True
    log_every: int = 1


@dataclass
class TrainResult:
    params: HeadParams
    losses: list = field(default_factory=list)
    iterations: int = 0


def _batch_grads(params, batch):
    acc = {name: np.zeros_like(v) for name, v in params.blocks().items()}
    total = 0.0
    for image, gt in batch:
        loss, grads, _ = gradient(params, image, gt)
        total += loss.total
        for name in acc:
            acc[name] += grads[name]
    scale = 1.0 / len(batch)
    return total * scale, {k: v * scale for k, v in acc.items()}


def _hinge_grads(params, video, rng, cfg):
    """Supervised-matching gradient for one frame pair of ``video``.

    ``video`` is a list of (image, GroundTruthFrame, instance_ids) in time
    order, restricted to annotated frames.
    """
    pair = sample_hinge_frames(range(len(video)), rng, cfg.limited_range)
    if pair is None:
        return 0.0, None
    caches, matched = [], []
    for t in pair:
        image, gt, ids = video[t]
        cache = _forward(params, image)
        assign = _loss_and_dlogits(cache, gt)[0]
        caches.append(cache)
        matched.append({ids[j]: i for i, j in assign})
    common = sorted(set(matched[0]) & set(matched[1]))
    gt_pairs = [(matched[0][g], matched[1][g]) for g in common]
    loss, d_a, d_b = hinge_matching_loss(caches[0]["q"], caches[1]["q"], gt_pairs, cfg.hinge_margin, True)
    zero_m = np.zeros_like(caches[0]["mask_logits"])
    zero_c = np.zeros_like(caches[0]["cls_logits"])
    ga = _backward(params, caches[0], zero_m, zero_c, d_a)
    gb = _backward(params, caches[1], zero_m, zero_c, d_b)
    return loss, {k: ga[k] + gb[k] for k in ga}


def train(params, dataset, config=None, videos=None, start_iter=0, losses=None):
    """Plain gradient descent on the per-frame loss.

    ``dataset`` is a list of (image, GroundTruthFrame); frames are treated
    independently. Batches for iteration ``it`` are drawn from a generator
    seeded with ``(seed, it)``, so a run resumed at ``start_iter`` follows
    the same trajectory as an uninterrupted one. ``videos`` is only needed
    when ``hinge_weight > 0``.
    """
    cfg = config or TrainConfig()
    if not dataset:
        raise InputError("training set is empty")
    params = params.copy()
    losses = list(losses or [])
    for it in range(start_iter, cfg.iters):
        rng = np.random.default_rng([cfg.seed, it])
        idx = rng.choice(len(dataset), size=min(cfg.batch_size, len(dataset)), replace=False)
        try:
            loss, grads = _batch_grads(params, [dataset[i] for i in idx])
            if cfg.hinge_weight > 0 and videos:
                v = videos[int(rng.integers(0, len(videos)))]
                h_loss, h_grads = _hinge_grads(params, v, rng, cfg)
                if h_grads is not None:
                    loss += cfg.hinge_weight * h_loss
                    for k in grads:
                        grads[k] = grads[k] + cfg.hinge_weight * h_grads[k]
        except NumericError as exc:
            raise TrainingError(str(exc), it) from None
        if not np.isfinite(loss):
            raise TrainingError("loss is not finite", it)
        losses.append(float(loss))
        params = params.updated(grads, cfg.lr)
    return TrainResult(params=params, losses=losses, iterations=max(cfg.iters, start_iter))


def dataset_loss(params, dataset):
    return float(np.mean([loss_value(params, image, gt) for image, gt in dataset]))
