"""Data containers passed between tracker, metrics, synth and datio."""
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import InputError

NO_OBJECT = -1


@dataclass
class FramePrediction:
    """Per-frame model output.

    ``queries`` is N×C, ``soft_masks`` N×H×W in (0, 1), ``class_dists``
    N×(K+1) with the last column the no-object class.
    """

    queries: np.ndarray
    soft_masks: np.ndarray
    class_dists: np.ndarray

    def __post_init__(self):
        self.queries = np.asarray(self.queries, dtype=np.float64)
        self.soft_masks = np.asarray(self.soft_masks, dtype=np.float64)
        self.class_dists = np.asarray(self.class_dists, dtype=np.float64)

    @property
    def num_queries(self):
        return self.queries.shape[0]

    @property
    def num_classes(self):
        return self.class_dists.shape[1] - 1

    def binary_masks(self, threshold=0.5):
        return self.soft_masks > threshold

    def null_queries(self, threshold=0.5):
        """True where the query predicts no object (empty mask or ∅ argmax)."""
        empty = ~self.binary_masks(threshold).reshape(self.num_queries, -1).any(axis=1)
        no_obj = np.argmax(self.class_dists, axis=1) == self.num_classes
        return empty | no_obj

    def validate(self, atol=1e-6):
        n = self.queries.shape[0]
        if self.queries.ndim != 2 or self.soft_masks.ndim != 3 or self.class_dists.ndim != 2:
            raise InputError("prediction arrays have wrong rank")
        if self.soft_masks.shape[0] != n or self.class_dists.shape[0] != n:
            raise InputError("query, mask and class counts disagree")
        if np.any(self.soft_masks <= 0) or np.any(self.soft_masks >= 1):
            raise InputError("soft masks must lie strictly inside (0, 1)")
        if not np.allclose(self.class_dists.sum(axis=1), 1.0, atol=atol):
            raise InputError("class distributions must sum to 1")
        return self


class MaskSequence:
    """Per-frame binary masks of one track, stored run-length encoded.

    Empty frames cost one ``None`` entry, so long mostly-empty tracks stay
    small.
    """

    def __init__(self, height, width, runs=None):
        self.height = int(height)
        self.width = int(width)
        self._runs = [] if runs is None else list(runs)

    @classmethod
    def from_dense(cls, masks):
        masks = np.asarray(masks)
        seq = cls(masks.shape[1], masks.shape[2])
        for m in masks:
            seq.append(m)
        return seq

    @classmethod
    def empty(cls, height, width, num_frames):
        return cls(height, width, [None] * num_frames)

    def append(self, mask):
        mask = np.asarray(mask)
        if mask.shape != (self.height, self.width):
            raise InputError(f"mask shape {mask.shape} != {(self.height, self.width)}")
        if not mask.any():
            self._runs.append(None)
        else:
            self._runs.append(np.asarray(kernels.rle_encode(mask), dtype=np.int32))

    def append_runs(self, runs):
        runs = np.asarray(runs, dtype=np.int32)
        if runs.size <= 1:
            self._runs.append(None)
        else:
            self._runs.append(runs)

    def __len__(self):
        return len(self._runs)

    def runs(self, t):
        r = self._runs[t]
        if r is None:
            return [self.height * self.width]
        return [int(x) for x in r]

    def frame(self, t):
        r = self._runs[t]
        if r is None:
            return np.zeros((self.height, self.width), dtype=bool)
        flat = kernels.rle_decode(r.astype(np.int64), self.height * self.width)
        return flat.reshape(self.height, self.width).astype(bool)

    def is_empty(self, t):
        return self._runs[t] is None

    def dense(self):
        out = np.zeros((len(self), self.height, self.width), dtype=bool)
        for t in range(len(self)):
            if self._runs[t] is not None:
                out[t] = self.frame(t)
        return out

    def areas(self):
        return np.array([0 if r is None else int(r[1::2].sum()) for r in self._runs])

    def __eq__(self, other):
        if not isinstance(other, MaskSequence):
            return NotImplemented
        if (self.height, self.width, len(self)) != (other.height, other.width, len(other)):
            return False
        return all(self.runs(t) == other.runs(t) for t in range(len(self)))

    def __repr__(self):
        return f"MaskSequence({self.height}x{self.width}, frames={len(self)})"


@dataclass
class GTInstance:
    instance_id: int
    category: int
    masks: MaskSequence


@dataclass
class VideoAnnotation:
    """Ground truth of one video. Absent frames of an instance are empty masks.

    ``annotated[t]`` is False for frames whose labels were dropped by
    sub-sampling; their images are kept.
    """

    video_id: str
    height: int
    width: int
    num_frames: int
    instances: list
    annotated: np.ndarray = None
    images: np.ndarray = None
    num_classes: int = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.annotated is None:
            self.annotated = np.ones(self.num_frames, dtype=bool)
        self.annotated = np.asarray(self.annotated, dtype=bool)
        ids = [inst.instance_id for inst in self.instances]
        if len(set(ids)) != len(ids):
            raise InputError(f"duplicate instance ids in video {self.video_id}")

    def frame_masks(self, t):
        """(ids, categories, L×H×W masks) of instances visible in frame t."""
        ids, cats, masks = [], [], []
        for inst in self.instances:
            if not inst.masks.is_empty(t):
                ids.append(inst.instance_id)
                cats.append(inst.category)
                masks.append(inst.masks.frame(t))
        stack = np.array(masks, dtype=bool).reshape(len(masks), self.height, self.width)
        return ids, cats, stack


@dataclass
class ResultInstance:
    category: int
    confidence: float
    masks: MaskSequence
    slot: int = -1


@dataclass
class VideoResult:
    video_id: str
    height: int
    width: int
    num_frames: int
    instances: list = field(default_factory=list)
