"""Synthetic occlusion videos and a controllable stand-in for a trained model.

Objects are depth-ordered disks (even classes) and squares (odd classes)
painted back to front, so nearer objects erase the pixels of farther ones.
For every frame the generator emits, besides ground truth and an image,
the prediction an ideal query-based model would make: one query row per
slot, live instances carrying a fixed latent plus Gaussian drift, the rest
null queries with empty masks and a no-object class.
"""
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import GenerationError, InputError
from .structures import FramePrediction, GTInstance, MaskSequence, VideoAnnotation

MOTIONS = ("linear", "crossing", "enter-exit")
APPEARANCE_DIM = 3


@dataclass
class ScenarioSpec:
    height: int = 16
    width: int = 16
    num_instances: int = 2
    num_queries: int = 8
    num_frames: int = 10
    motion: str = "linear"
    occlusion_rate: float = None
    embedding_dim: int = 16
    embedding_drift: float = 0.0
    mask_corruption: float = 0.0
    seed: int = 0
    num_classes: int = 2
    speed: float = 1.0
    min_radius: int = 2
    max_radius: int = 3
    image_noise: float = 0.05
    appearance_drift: float = 0.02
    null_norm: float = 0.1
    null_spread: float = 0.5
    adversarial_exit: bool = False
    video_id: str = ""

    def validate(self):
        if self.motion not in MOTIONS:
            raise InputError(f"unknown motion {self.motion!r}; expected one of {MOTIONS}")
        if self.num_frames < 1:
            raise InputError("num_frames must be >= 1")
        if self.num_instances < 0 or self.num_instances > self.num_queries:
            raise InputError("need 0 <= num_instances <= num_queries")
        if self.num_classes < 1:
            raise InputError("num_classes must be >= 1")
        if self.occlusion_rate is not None and not 0.0 <= self.occlusion_rate <= 1.0:
            raise InputError("occlusion_rate must lie in [0, 1]")
        if not 0.0 <= self.mask_corruption <= 1.0:
            raise InputError("mask_corruption must lie in [0, 1]")
        if self.embedding_drift < 0:
            raise InputError("embedding_drift must be >= 0")
        if not 1 <= self.min_radius <= self.max_radius:
            raise InputError("need 1 <= min_radius <= max_radius")
        if 2 * self.max_radius + 1 > min(self.height, self.width):
            raise InputError("objects do not fit the grid")
        if self.embedding_dim < self.num_instances + 1:
            raise InputError("embedding_dim must exceed num_instances")
        if self.motion == "crossing":
            bands = (self.num_instances + 1) // 2
            if bands * (2 * self.max_radius + 2) > self.height:
                raise InputError("grid too short for the crossing bands")
        return self

    @property
    def in_channels(self):
        return APPEARANCE_DIM + self.num_classes

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise InputError(f"unknown scenario fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class _Instance:
    gid: int
    category: int
    radius: int
    depth: int
    appearance: np.ndarray
    latent: np.ndarray
    confidence: float
    centers: np.ndarray  # T×2 (row, col)


@dataclass
class SyntheticFrame:
    t: int
    image: np.ndarray
    masks: dict  # gid -> H×W bool, visible instances only
    prediction: FramePrediction
    gt_query_map: dict  # query index -> gid


@dataclass
class SyntheticVideo:
    annotation: VideoAnnotation
    oracle_predictions: list
    gt_query_map: list
    spec: ScenarioSpec = None
    meta: dict = field(default_factory=dict)


def _shape_mask(inst, center, h, w):
    yy, xx = np.mgrid[0:h, 0:w]
    cy, cx = np.rint(center)
    r = inst.radius
    if inst.category % 2 == 0:
        return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r + 0.25
    return (np.abs(yy - cy) <= r) & (np.abs(xx - cx) <= r)


def render_labels(instances, t, h, w):
    """Label map for frame t: gid of the nearest object per pixel, -1 for background."""
    labels = np.full((h, w), -1, dtype=np.int64)
    for inst in sorted(instances, key=lambda i: -i.depth):
        labels[_shape_mask(inst, inst.centers[t], h, w)] = inst.gid
    return labels


def _bbox(mask):
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    return rows[0], rows[-1], cols[0], cols[-1]


def bbox_iou(a, b):
    """IoU of two inclusive cell boxes (r0, r1, c0, c1)."""
    ih = min(a[1], b[1]) - max(a[0], b[0]) + 1
    iw = min(a[3], b[3]) - max(a[2], b[2]) + 1
    inter = max(ih, 0) * max(iw, 0)
    area = lambda x: (x[1] - x[0] + 1) * (x[3] - x[2] + 1)
    return inter / (area(a) + area(b) - inter)


def _frame_pair_ious(mask_list):
    boxes = [_bbox(m) for m in mask_list if m.any()]
    return [bbox_iou(boxes[i], boxes[j]) for i in range(len(boxes)) for j in range(i + 1, len(boxes))]


def bbox_occlusion_rate(annotation):
    """Mean pairwise bounding-box IoU over all co-visible (frame, pair) combinations.

    A proxy for the dataset-level bounding-box occlusion statistic; 0 when
    no two instances are ever visible together.
    """
    ious = []
    for t in range(annotation.num_frames):
        ious.extend(_frame_pair_ious([inst.masks.frame(t) for inst in annotation.instances]))
    return float(np.mean(ious)) if ious else 0.0


def _rate_from_instances(instances, spec):
    ious, peak = [], 0.0
    for t in range(spec.num_frames):
        labels = render_labels(instances, t, spec.height, spec.width)
        vals = _frame_pair_ious([labels == inst.gid for inst in instances])
        ious.extend(vals)
        peak = max([peak] + vals)
    return (float(np.mean(ious)) if ious else 0.0), peak


def _orthonormal(rng, k, dim):
    q, _ = np.linalg.qr(rng.normal(size=(dim, k)))
    return q.T[:k]


def _distinct_colors(rng, k, min_dist=0.8, tries=200):
    colors = []
    for _ in range(tries * max(k, 1)):
        if len(colors) == k:
            break
        c = rng.uniform(-1.0, 1.0, APPEARANCE_DIM)
        if all(np.linalg.norm(c - o) >= min_dist for o in colors):
            colors.append(c)
    if len(colors) < k:
        raise GenerationError("could not draw distinct instance colors")
    return np.array(colors).reshape(k, APPEARANCE_DIM)


def _linear_track(rng, spec, r, rows=None):
    h, w, T = spec.height, spec.width, spec.num_frames
    top, bottom = rows if rows is not None else (0, h - 1)
    lo, hi = np.array([top + r, r], float), np.array([bottom - r, w - 1 - r], float)
    pos = rng.uniform(lo, hi)
    angle = rng.uniform(0, 2 * np.pi)
    vel = spec.speed * np.array([np.sin(angle), np.cos(angle)])
    out = np.empty((T, 2))
    for t in range(T):
        out[t] = pos
        pos = pos + vel
        for d in range(2):
            if pos[d] < lo[d] or pos[d] > hi[d]:
                vel[d] = -vel[d]
                pos[d] = np.clip(pos[d], lo[d], hi[d])
    return out


def _enter_track(rng, spec, r, t_enter):
    h, w, T = spec.height, spec.width, spec.num_frames
    row = rng.uniform(r, h - 1 - r)
    x_end = rng.uniform(w / 2, w - 1 - r)
    x_hidden = -r - 1.0
    v = (x_end - x_hidden) / max(T - t_enter, 1)
    xs = x_hidden + v * (np.arange(T) - (t_enter - 1))
    xs = np.minimum(xs, x_end)
    xs[: t_enter] = x_hidden
    return np.column_stack([np.full(T, row), xs])


def _exit_track(rng, spec, r, t_exit):
    h, w, T = spec.height, spec.width, spec.num_frames
    row = rng.uniform(r, h - 1 - r)
    x0 = rng.uniform(r, w / 2)
    x_gone = w + r + 1.0
    v = (x_gone - x0) / max(t_exit, 1)
    xs = np.minimum(x0 + v * np.arange(T), x_gone)
    return np.column_stack([np.full(T, row), xs])


def _reflect(x, lo, hi):
    span = hi - lo
    if span <= 0:
        return np.full_like(x, lo)
    y = np.mod(x - lo, 2 * span)
    return lo + np.where(y > span, 2 * span - y, y)


def _crossing_tracks(spec, row, speed, offset, radius):
    """Two objects moving in opposite directions, aligned on the middle frame.

    They bounce off the band ends, so fast pairs cross more than once.
    """
    T, w = spec.num_frames, spec.width
    t = np.arange(T) - (T - 1) // 2
    cx = (w - 1) // 2
    lo, hi = radius, w - 1 - radius
    a = np.column_stack([np.full(T, float(row)), _reflect(cx + speed * t, lo, hi)])
    b = np.column_stack([np.full(T, float(row + offset)), _reflect(cx - speed * t, lo, hi)])
    return a, b


def _make_instances(spec, rng):
    L, C = spec.num_instances, spec.embedding_dim
    basis = _orthonormal(rng, L + 1, C)
    null_dir, latents = basis[0], basis[1:]
    colors = _distinct_colors(rng, L)
    depths = rng.permutation(L)
    instances = []
    for k in range(L):
        instances.append(
            _Instance(
                gid=k + 1,
                category=int(rng.integers(0, spec.num_classes)),
                radius=int(rng.integers(spec.min_radius, spec.max_radius + 1)),
                depth=int(depths[k]),
                appearance=colors[k],
                latent=latents[k],
                confidence=float(rng.uniform(0.75, 0.95)),
                centers=None,
            )
        )
    return instances, null_dir


def _plan_linear(spec, rng, instances, retries=200):
    """Bouncing straight-line motion; with a target, resample until the rate is within 0.05.

    A target of 0 gives every object its own band of rows, so no two boxes
    ever overlap.
    """
    target = spec.occlusion_rate
    if target == 0 and len(instances) >= 2:
        band = spec.height // len(instances)
        if any(2 * inst.radius + 1 > band for inst in instances):
            raise GenerationError(f"{len(instances)} objects do not fit separate bands of {band} rows")
        for k, inst in enumerate(instances):
            inst.centers = _linear_track(rng, spec, inst.radius, (band * k, band * (k + 1) - 1))
        return 0.0
    for _ in range(retries):
        for inst in instances:
            inst.centers = _linear_track(rng, spec, inst.radius)
        if target is None or len(instances) < 2:
            return None
        rate = _rate_from_instances(instances, spec)[0]
        if abs(rate - target) <= 0.05:
            return rate
    raise GenerationError(f"no linear layout reaches occlusion rate {target} within 0.05 after {retries} attempts")


def _plan_enter_exit(spec, rng, instances):
    T = spec.num_frames
    if T < 3:
        raise GenerationError("enter-exit needs at least 3 frames")
    for k, inst in enumerate(instances):
        if k % 3 == 0:
            inst.centers = _enter_track(rng, spec, inst.radius, int(rng.integers(1, max(2, T // 2 + 1))))
        elif k % 3 == 1:
            inst.centers = _exit_track(rng, spec, inst.radius, int(rng.integers(max(1, T // 2), T - 1)))
        else:
            inst.centers = _linear_track(rng, spec, inst.radius)


def _plan_crossing(spec, rng, instances, retries=20):
    """Pick a crossing speed whose measured occlusion rate is nearest the target."""
    h, w, T = spec.height, spec.width, spec.num_frames
    target = spec.occlusion_rate
    band = h // ((len(instances) + 1) // 2)
    for _ in range(retries):
        specs = []
        for p in range(0, len(instances), 2):
            pair = instances[p:p + 2]
            row = band * (p // 2) + band // 2 - 1
            if len(pair) == 2:
                front, back = sorted(pair, key=lambda i: i.depth)
                # the farther object is one pixel larger so it stays partly visible
                front.radius = max(min(2, spec.max_radius - 1), min(front.radius, spec.max_radius - 1))
                back.radius = front.radius + 1
                specs.append((pair[0], pair[1], row, int(rng.integers(0, 2))))
            else:
                r = pair[0].radius
                pair[0].centers = np.column_stack([np.full(T, float(row)), np.linspace(r, w - 1 - r, T)])
        if target is None:
            for a, b, row, off in specs:
                a.centers, b.centers = _crossing_tracks(spec, row, spec.speed, off, b.radius)
            rate, peak = _rate_from_instances(instances, spec)
            if peak >= 0.5 or not specs:
                return rate
            continue
        best = None
        for speed in np.arange(0.05, w / 2, 0.05):
            for a, b, row, off in specs:
                a.centers, b.centers = _crossing_tracks(spec, row, speed, off, b.radius)
            rate, peak = _rate_from_instances(instances, spec)
            if peak >= 0.5 and (best is None or abs(rate - target) < best[0]):
                best = (abs(rate - target), speed)
        if best is not None and best[0] <= 0.05:
            for a, b, row, off in specs:
                a.centers, b.centers = _crossing_tracks(spec, row, best[1], off, b.radius)
            return _rate_from_instances(instances, spec)[0]
    if target is None:
        raise GenerationError(f"no crossing layout reaches 50% peak box overlap after {retries} attempts")
    raise GenerationError(
        f"no crossing layout reaches occlusion rate {target} within 0.05 after {retries} attempts"
    )


def _corrupt(mask, rho, rng):
    if rho <= 0 or not mask.any():
        return mask
    pad = np.pad(mask, 1)
    nb = pad[:-2, 1:-1] | pad[2:, 1:-1] | pad[1:-1, :-2] | pad[1:-1, 2:]
    nb_bg = ~(pad[:-2, 1:-1] & pad[2:, 1:-1] & pad[1:-1, :-2] & pad[1:-1, 2:])
    boundary = (mask & nb_bg) | (~mask & nb)
    idx = np.flatnonzero(boundary)
    flip = idx[rng.random(idx.size) < rho]
    out = mask.copy().reshape(-1)
    out[flip] = ~out[flip]
    return out.reshape(mask.shape)


def _class_row(rng, k, category, conf):
    row = np.zeros(k + 1)
    rest = 1.0 - conf
    if category is None:
        row[k] = conf
        row[:k] = rest / k
    else:
        row[category] = conf
        row[k] = rest / 2
        others = [c for c in range(k) if c != category]
        if others:
            row[others] = rest / 2 / len(others)
        else:
            row[k] = rest
    return row


class _Oracle:
    """Emits per-frame predictions; separate RNG streams keep knobs independent."""

    def __init__(self, spec, instances, null_dir, seed_seq):
        self.spec = spec
        self.instances = instances
        self.null_dir = null_dir
        s_perm, s_drift, s_null, s_mask, s_conf, s_img = seed_seq.spawn(6)
        self.rng_perm = np.random.default_rng(s_perm)
        self.rng_drift = np.random.default_rng(s_drift)
        self.rng_null = np.random.default_rng(s_null)
        self.rng_mask = np.random.default_rng(s_mask)
        self.rng_conf = np.random.default_rng(s_conf)
        self.rng_img = np.random.default_rng(s_img)
        self.last_seen = {}

    def frame(self, t):
        spec = self.spec
        h, w, n, C, K = spec.height, spec.width, spec.num_queries, spec.embedding_dim, spec.num_classes
        labels = render_labels(self.instances, t, h, w)
        masks = {inst.gid: labels == inst.gid for inst in self.instances}
        visible = [inst for inst in self.instances if masks[inst.gid].any()]

        image = np.zeros((h, w, spec.in_channels))
        for inst in self.instances:
            m = masks[inst.gid]
            color = inst.appearance + self.rng_img.normal(0, spec.appearance_drift, APPEARANCE_DIM)
            image[m, :APPEARANCE_DIM] = color
            image[m, APPEARANCE_DIM + inst.category] = 1.0
        image += self.rng_img.normal(0, spec.image_noise, image.shape)

        perm = self.rng_perm.permutation(n)
        # drift/null draws are made for every slot so σ only scales them
        drift = self.rng_drift.normal(0, 1.0, (len(self.instances), C))
        null_noise = self.rng_null.normal(0, 1.0 / np.sqrt(C), (n, C))
        conf_noise = self.rng_conf.uniform(-0.05, 0.05, len(self.instances))
        queries = np.empty((n, C))
        binary = np.zeros((n, h, w), dtype=bool)
        dists = np.empty((n, K + 1))
        mapping = {}
        null_slots = list(perm[len(visible):])
        for q in range(n):
            v = self.null_dir + spec.null_spread * null_noise[q]
            queries[q] = spec.null_norm * v / np.linalg.norm(v)
            dists[q] = _class_row(self.rng_conf, K, None, 0.9)
        gone = [i for i in self.instances if i.gid in self.last_seen and i not in visible]
        for slot, inst in zip(perm, visible):
            k = self.instances.index(inst)
            queries[slot] = inst.latent + spec.embedding_drift * drift[k]
            binary[slot] = _corrupt(masks[inst.gid], spec.mask_corruption, self.rng_mask)
            dists[slot] = _class_row(self.rng_conf, K, inst.category, float(np.clip(inst.confidence + conf_noise[k], 0.5, 0.99)))
            mapping[int(slot)] = inst.gid
            self.last_seen[inst.gid] = t
        if spec.adversarial_exit:
            just_left = [i for i in gone if self.last_seen[i.gid] == t - 1]
            self._spurious(t, masks, visible, just_left, null_slots, queries, binary, dists)
            gone = [i for i in gone if i not in just_left]
        # a departed instance leaves a low-norm echo of its latent among the nulls
        for inst in gone:
            if not null_slots:
                break
            slot = null_slots.pop(0)
            v = inst.latent + spec.null_spread * null_noise[slot]
            queries[slot] = spec.null_norm * v / np.linalg.norm(v)
        soft = np.where(binary, 0.95, 0.05)
        pred = FramePrediction(queries, soft, dists)
        vis_masks = {inst.gid: masks[inst.gid] for inst in visible}
        return image, vis_masks, pred, mapping

    def _spurious(self, t, masks, visible, just_left, null_slots, queries, binary, dists):
        """Right after an instance vanishes, keep its query alive on a piece of a neighbour."""
        for inst in just_left:
            if not null_slots or not visible:
                break
            last = inst.centers[t - 1]
            near = min(visible, key=lambda o: np.linalg.norm(o.centers[t] - last))
            m = masks[near.gid]
            yy, xx = np.nonzero(m)
            d = (yy - last[0]) ** 2 + (xx - last[1]) ** 2
            keep = d <= np.median(d)
            piece = np.zeros_like(m)
            piece[yy[keep], xx[keep]] = True
            slot = null_slots.pop(0)
            queries[slot] = inst.latent + self.spec.embedding_drift * self.rng_drift.normal(0, 1.0, inst.latent.size)
            binary[slot] = piece
            dists[slot] = _class_row(self.rng_conf, self.spec.num_classes, inst.category, 0.6)


def _plan(spec):
    spec.validate()
    root = np.random.SeedSequence(spec.seed)
    s_layout, s_oracle = root.spawn(2)
    rng = np.random.default_rng(s_layout)
    instances, null_dir = _make_instances(spec, rng)
    measured = None
    if spec.motion == "linear":
        measured = _plan_linear(spec, rng, instances)
    elif spec.motion == "enter-exit":
        _plan_enter_exit(spec, rng, instances)
    else:
        measured = _rate_from_instances(instances, spec)[0] if not instances else _plan_crossing(spec, rng, instances)
    return instances, null_dir, s_oracle, measured


def iter_frames(spec):
    """Yield SyntheticFrame objects one at a time (constant memory in T)."""
    instances, null_dir, s_oracle, _ = _plan(spec)
    oracle = _Oracle(spec, instances, null_dir, s_oracle)
    for t in range(spec.num_frames):
        image, masks, pred, mapping = oracle.frame(t)
        yield SyntheticFrame(t, image, masks, pred, mapping)


def generate(spec, keep_images=True):
    """Materialize a whole video: annotation, oracle predictions, GT query maps."""
    instances, null_dir, s_oracle, measured = _plan(spec)
    oracle = _Oracle(spec, instances, null_dir, s_oracle)
    h, w = spec.height, spec.width
    seqs = {inst.gid: MaskSequence(h, w) for inst in instances}
    images, preds, maps = [], [], []
    empty = np.zeros((h, w), dtype=bool)
    for t in range(spec.num_frames):
        image, masks, pred, mapping = oracle.frame(t)
        for inst in instances:
            seqs[inst.gid].append(masks.get(inst.gid, empty))
        if keep_images:
            images.append(image)
        preds.append(pred)
        maps.append(mapping)
    ann = VideoAnnotation(
        video_id=spec.video_id or f"video-{spec.seed}",
        height=h,
        width=w,
        num_frames=spec.num_frames,
        instances=[GTInstance(inst.gid, inst.category, seqs[inst.gid]) for inst in instances],
        images=np.stack(images) if keep_images else None,
        num_classes=spec.num_classes,
        meta={"scenario": spec.to_dict()},
    )
    meta = {} if measured is None else {"planned_occlusion_rate": measured}
    return SyntheticVideo(ann, preds, maps, spec, meta)


def family(base, count, seed_start=0, prefix="video"):
    """``count`` specs differing only by seed and video id."""
    return [replace(base, seed=seed_start + i, video_id=f"{prefix}-{seed_start + i:04d}") for i in range(count)]


PRESETS = {
    "easy": ScenarioSpec(motion="linear", num_instances=2, speed=1.0, occlusion_rate=0.0),
    "crossing": ScenarioSpec(motion="crossing", num_instances=2, speed=1.0, min_radius=3, max_radius=4),
    # fast pairs bouncing in a narrow band: repeated crossings, bbox occlusion near 0.22
    "occlusion-heavy": ScenarioSpec(
        motion="crossing", num_instances=2, speed=2.5, min_radius=3, max_radius=4,
        embedding_drift=0.1, mask_corruption=0.2,
    ),
    "enter-exit": ScenarioSpec(motion="enter-exit", num_instances=3, embedding_drift=0.05),
    "low-variation": ScenarioSpec(motion="linear", num_instances=3, speed=0.3),
}


def preset(name, **overrides):
    if name not in PRESETS:
        raise InputError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}")
    return replace(PRESETS[name], **overrides)


def _uniform_indices(num_frames, keep, rng):
    step = num_frames / keep
    offset = rng.uniform(0, step)
    return np.floor(offset + step * np.arange(keep)).astype(int)


def subsample_annotations(dataset, fraction, seed=0):
    """Keep ``max(1, round(fraction * T))`` uniformly spaced annotated frames per video.

    Dropped frames keep their images but lose their labels.
    """
    if not dataset:
        raise InputError("dataset is empty")
    if not 0.0 < fraction <= 1.0:
        raise InputError(f"fraction must lie in (0, 1], got {fraction}")
    if fraction == 1.0:
        return list(dataset)
    out = []
    for v, ann in enumerate(dataset):
        rng = np.random.default_rng([seed, v])
        T = ann.num_frames
        keep = min(T, max(1, int(np.floor(fraction * T + 0.5))))
        idx = _uniform_indices(T, keep, rng)
        flags = np.zeros(T, dtype=bool)
        flags[idx] = True
        flags &= ann.annotated
        if not flags.any():
            flags[np.flatnonzero(ann.annotated)[0] if ann.annotated.any() else 0] = True
        insts = []
        for inst in ann.instances:
            seq = MaskSequence(ann.height, ann.width)
            for t in range(T):
                if flags[t]:
                    seq.append_runs(inst.masks.runs(t))
                else:
                    seq.append_runs([ann.height * ann.width])
            insts.append(GTInstance(inst.instance_id, inst.category, seq))
        out.append(replace(ann, instances=insts, annotated=flags))
    return out


def training_frames(annotations):
    """(image, GroundTruthFrame) pairs for every annotated frame."""
    from .seghead import GroundTruthFrame

    frames = []
    for ann in annotations:
        if ann.images is None:
            raise InputError(f"video {ann.video_id} has no images")
        for t in np.flatnonzero(ann.annotated):
            _, cats, masks = ann.frame_masks(t)
            frames.append((ann.images[t], GroundTruthFrame(masks, cats)))
    return frames


def training_videos(annotations):
    """Per video, annotated frames as (image, GroundTruthFrame, instance ids)."""
    from .seghead import GroundTruthFrame

    videos = []
    for ann in annotations:
        frames = []
        for t in np.flatnonzero(ann.annotated):
            ids, cats, masks = ann.frame_masks(t)
            frames.append((ann.images[t], GroundTruthFrame(masks, cats), ids))
        videos.append(frames)
    return videos
