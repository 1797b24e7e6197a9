"""Online instance association by matching query embeddings between frames.

Every frame's N query slots are matched to the previous frame's (already
aligned) slots with a full N×N assignment. Null queries take part like any
other, which is how deaths and births fall out without extra rules: a live
slot that gets matched to a null query dies, a null slot matched to a real
query is born.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .matching import combined_score_matrix, cosine_score_matrix, mask_iou_matrix, max_score_assignment
from .structures import FramePrediction, MaskSequence, ResultInstance, VideoResult

SCORERS = ("query", "heuristic", "combined")
MASK_THRESHOLD = 0.5


@dataclass
class TrackSet:
    """Running association state for one video.

    ``permutations[t][s]`` is the index of the frame-t query that slot s
    holds. Masks are kept per slot, encoded; class distributions are kept
    per frame in slot order.
    """

    num_slots: int
    height: int
    width: int
    permutations: list = field(default_factory=list)
    masks: list = field(default_factory=list)
    class_dists: list = field(default_factory=list)
    alive: list = field(default_factory=list)
    births: list = field(default_factory=list)
    deaths: list = field(default_factory=list)
    last_queries: np.ndarray = None
    last_masks: np.ndarray = None

    @property
    def num_frames(self):
        return len(self.permutations)

    def class_mean(self):
        # sequential float64 sum, the same arithmetic OnlineTracker does
        total = self.class_dists[0].astype(np.float64)
        for d in self.class_dists[1:]:
            total = total + d.astype(np.float64)
        return total / len(self.class_dists)


def _check_scorer(scorer):
    if scorer not in SCORERS:
        raise InputError(f"unknown scorer {scorer!r}; expected one of {SCORERS}")


def _record(tracks, frame, perm):
    aligned_masks = frame.binary_masks(MASK_THRESHOLD)[perm]
    aligned_null = frame.null_queries(MASK_THRESHOLD)[perm]
    for s in range(tracks.num_slots):
        tracks.masks[s].append(aligned_masks[s])
    tracks.permutations.append(np.asarray(perm, dtype=np.int32))
    tracks.class_dists.append(frame.class_dists[perm].astype(np.float32))
    tracks.alive.append(~aligned_null)
    tracks.last_queries = frame.queries[perm]
    tracks.last_masks = aligned_masks


def init_tracks(first):
    """Start a track set from the first frame: slot i holds query i."""
    n = first.num_queries
    h, w = first.soft_masks.shape[1:]
    tracks = TrackSet(num_slots=n, height=h, width=w, masks=[MaskSequence(h, w) for _ in range(n)])
    _record(tracks, first, np.arange(n))
    return tracks


def score_matrix(scorer, prev_queries, prev_masks, frame):
    _check_scorer(scorer)
    if scorer == "query":
        return cosine_score_matrix(prev_queries, frame.queries)
    iou = mask_iou_matrix(prev_masks, frame.binary_masks(MASK_THRESHOLD))
    if scorer == "heuristic":
        return iou
    return combined_score_matrix(cosine_score_matrix(prev_queries, frame.queries), iou)


def associate(scorer, prev_queries, prev_masks, frame):
    """Permutation ``perm`` with ``perm[s]`` = the frame query continuing slot s."""
    score = score_matrix(scorer, prev_queries, prev_masks, frame)
    perm = np.empty(frame.num_queries, dtype=np.intp)
    for s, j in max_score_assignment(score):
        perm[s] = j
    return perm


def step(tracks, aligned_prev_queries, frame, scorer="query"):
    """Associate ``frame`` to the slots of ``tracks`` and append it.

    ``aligned_prev_queries`` are the previous frame's queries in slot order;
    pass ``tracks.last_queries`` for the standard tracker.
    """
    _check_scorer(scorer)
    if frame.num_queries != tracks.num_slots:
        raise InputError(f"frame has {frame.num_queries} queries, tracks have {tracks.num_slots} slots")
    if aligned_prev_queries is None:
        aligned_prev_queries = tracks.last_queries
    perm = associate(scorer, aligned_prev_queries, tracks.last_masks, frame)
    was_alive = tracks.alive[-1]
    _record(tracks, frame, perm)
    now_alive = tracks.alive[-1]
    t = tracks.num_frames - 1
    for s in np.flatnonzero(was_alive & ~now_alive):
        tracks.deaths.append((t, int(s)))
    for s in np.flatnonzero(~was_alive & now_alive):
        tracks.births.append((t, int(s)))
    return tracks


def run_video(frames, scorer="query"):
    """Fold ``step`` over frames in order. ``frames`` may be any iterable."""
    _check_scorer(scorer)
    tracks = None
    for frame in frames:
        if tracks is None:
            tracks = init_tracks(frame)
        else:
            step(tracks, tracks.last_queries, frame, scorer)
    if tracks is None:
        raise InputError("video has no frames")
    return tracks


def finalize(tracks, top_k=10, conf_threshold=0.05, video_id=""):
    """Turn slots into scored video-level instances.

    A slot's class distribution is its mean over frames; its confidence is
    the largest non-∅ entry of that mean.
    """
    result = VideoResult(video_id, tracks.height, tracks.width, tracks.num_frames)
    for s, label, conf in select_slots(tracks.class_mean(), top_k, conf_threshold):
        result.instances.append(ResultInstance(category=label, confidence=conf, masks=tracks.masks[s], slot=s))
    return result


def select_slots(class_mean, top_k=10, conf_threshold=0.05):
    """(slot, label, confidence) for the slots ``finalize`` would emit, best first."""
    scores = np.asarray(class_mean)[:, :-1]
    labels = np.argmax(scores, axis=1)
    conf = scores[np.arange(scores.shape[0]), labels]
    order = sorted(range(scores.shape[0]), key=lambda s: (-conf[s], s))
    kept = [s for s in order if conf[s] >= conf_threshold][:top_k]
    return [(int(s), int(labels[s]), float(conf[s])) for s in kept]


class OnlineTracker:
    """Tracker state that does not grow with video length.

    Only the previous frame's aligned queries and masks and a running sum
    of class distributions are kept. Each frame's aligned masks are handed
    to ``sink(t, masks)`` (N×H×W bool, slot order) as soon as they are
    known. Produces the same slots, labels and confidences as
    ``run_video`` followed by ``finalize``.
    """

    def __init__(self, scorer="query", sink=None):
        _check_scorer(scorer)
        self.scorer = scorer
        self.sink = sink
        self.num_frames = 0
        self.last_queries = None
        self.last_masks = None
        self._class_sum = None

    def push(self, frame):
        if self.num_frames == 0:
            perm = np.arange(frame.num_queries)
        else:
            if frame.num_queries != self.last_queries.shape[0]:
                raise InputError(f"frame has {frame.num_queries} queries, tracks have {self.last_queries.shape[0]} slots")
            perm = associate(self.scorer, self.last_queries, self.last_masks, frame)
        masks = frame.binary_masks(MASK_THRESHOLD)[perm]
        dists = frame.class_dists[perm].astype(np.float32).astype(np.float64)
        self._class_sum = dists if self._class_sum is None else self._class_sum + dists
        self.last_queries = frame.queries[perm]
        self.last_masks = masks
        if self.sink is not None:
            self.sink(self.num_frames, masks)
        self.num_frames += 1
        return perm

    def class_mean(self):
        if self.num_frames == 0:
            raise InputError("video has no frames")
        return self._class_sum / self.num_frames

    def select(self, top_k=10, conf_threshold=0.05):
        return select_slots(self.class_mean(), top_k, conf_threshold)


def slot_identities(tracks, gt_query_map):
    """For each frame and slot, the GT id it covers (or None).

    ``gt_query_map[t]`` maps frame-t query index -> GT id.
    """
    out = []
    for t, perm in enumerate(tracks.permutations):
        mapping = gt_query_map[t]
        out.append([mapping.get(int(q)) for q in perm])
    return out


def identity_switches(tracks, gt_query_map):
    """Transitions where a GT instance visible in both frames changes slot."""
    ids = slot_identities(tracks, gt_query_map)
    switches = 0
    for t in range(1, len(ids)):
        before = {g: s for s, g in enumerate(ids[t - 1]) if g is not None}
        after = {g: s for s, g in enumerate(ids[t]) if g is not None}
        switches += sum(1 for g, s in before.items() if g in after and after[g] != s)
    return switches
