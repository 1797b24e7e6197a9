"""Video-level AP/AR with spatio-temporal mask IoU.

The protocol is COCO's: per class and IoU threshold, detections from all
videos are ranked by confidence, each is greedily matched to the unmatched
same-video ground-truth track with highest IoU, and precision is sampled
at 101 recall points. Scores are averaged over thresholds, then classes.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, InputError
from .structures import MaskSequence


@dataclass
class EvalConfig:
    iou_thresholds: tuple = tuple(np.round(np.linspace(0.5, 0.95, 10), 2))
    recall_caps: tuple = (1, 10)
    num_recall_points: int = 101
    max_dets: int = 100

    def __post_init__(self):
        thr = np.asarray(self.iou_thresholds, dtype=np.float64)
        if thr.size != 10 or np.any(np.diff(thr) <= 0):
            raise InputError("need exactly 10 strictly increasing IoU thresholds")

    @property
    def recall_points(self):
        return np.linspace(0.0, 1.0, self.num_recall_points)


@dataclass
class EvalReport:
    AP: float
    AP50: float
    AP75: float
    AR1: float
    AR10: float
    per_class: dict = field(default_factory=dict)
    per_threshold: list = field(default_factory=list)

    def scaled(self):
        """Values ×100, the way result tables print them."""
        out = {k: 100.0 * getattr(self, k) for k in ("AP", "AP50", "AP75", "AR1", "AR10")}
        out["per_class"] = {str(c): 100.0 * v for c, v in self.per_class.items()}
        return out


def _dense(track):
    if isinstance(track, MaskSequence):
        return track.dense()
    return np.asarray(track, dtype=bool)


def st_iou(pred_track, gt_track):
    """Σ_t |P_t ∩ G_t| / Σ_t |P_t ∪ G_t|, 0 when both tracks are empty."""
    p = _dense(pred_track)
    g = _dense(gt_track)
    if p.shape[0] != g.shape[0]:
        raise InputError(f"track lengths differ: {p.shape[0]} vs {g.shape[0]}")
    if p.shape != g.shape:
        raise InputError(f"frame sizes differ: {p.shape[1:]} vs {g.shape[1:]}")
    union = np.logical_or(p, g).sum()
    if union == 0:
        return 0.0
    return float(np.logical_and(p, g).sum() / union)


def st_iou_matrix(pred_tracks, gt_tracks):
    p = [_dense(t).reshape(-1) for t in pred_tracks]
    g = [_dense(t).reshape(-1) for t in gt_tracks]
    out = np.zeros((len(p), len(g)))
    if not p or not g:
        return out
    a = np.array(p, dtype=np.float64)
    b = np.array(g, dtype=np.float64)
    inter = a @ b.T
    union = a.sum(1)[:, None] + b.sum(1)[None, :] - inter
    return np.divide(inter, union, out=out, where=union > 0)


def greedy_match(ious, threshold):
    """Match detections (rows, already in rank order) to GT columns.

    Returns, per detection, the matched GT index or -1.
    """
    n_d, n_g = ious.shape
    taken = np.zeros(n_g, dtype=bool)
    out = np.full(n_d, -1)
    for d in range(n_d):
        best, best_iou = -1, threshold
        for g in range(n_g):
            if taken[g]:
                continue
            v = ious[d, g]
            if v >= best_iou and (best < 0 or v > best_iou):
                best, best_iou = g, v
        if best >= 0:
            taken[best] = True
            out[d] = best
    return out


def interpolated_ap(scores, tp, num_gt, recall_points):
    """101-point interpolated AP from ranked detections across videos."""
    if num_gt == 0:
        return 0.0
    if len(scores) == 0:
        return 0.0
    order = np.argsort(-np.asarray(scores), kind="mergesort")
    tp = np.asarray(tp, dtype=bool)[order]
    tps = np.cumsum(tp)
    fps = np.cumsum(~tp)
    rc = tps / num_gt
    pr = tps / (tps + fps)
    pr = np.maximum.accumulate(pr[::-1])[::-1]
    idx = np.searchsorted(rc, recall_points, side="left")
    q = np.where(idx < len(pr), pr[np.minimum(idx, len(pr) - 1)], 0.0)
    return float(np.mean(q))


def _prepare(predictions, gts):
    for vid in predictions:
        if vid not in gts:
            raise DataError(f"prediction for unknown video {vid!r}")
    by_class = {}
    for vid, ann in gts.items():
        for inst in ann.instances:
            by_class.setdefault(inst.category, {}).setdefault(vid, ([], []))[1].append(inst)
    for vid, res in predictions.items():
        ann = gts[vid]
        if res.num_frames != ann.num_frames or (res.height, res.width) != (ann.height, ann.width):
            raise DataError(f"video {vid!r}: result dimensions do not match the annotation")
        for inst in res.instances:
            by_class.setdefault(inst.category, {}).setdefault(vid, ([], []))[0].append(inst)
    return by_class


def evaluate(predictions, gts, cfg=None):
    """AP/AR report.

    ``predictions`` and ``gts`` map video id -> VideoResult / VideoAnnotation.
    Videos without predictions count as having none.
    """
    cfg = cfg or EvalConfig()
    thresholds = np.asarray(cfg.iou_thresholds, dtype=np.float64)
    rp = cfg.recall_points
    by_class = _prepare(predictions, gts)
    per_class_ap, per_class_thr, recalls = {}, {}, {k: [] for k in cfg.recall_caps}
    for cat in sorted(by_class):
        videos = by_class[cat]
        num_gt = sum(len(g) for _, g in videos.values())
        ap_thr = np.zeros(len(thresholds))
        rec_thr = {k: np.zeros(len(thresholds)) for k in cfg.recall_caps}
        for ti, thr in enumerate(thresholds):
            scores, tps = [], []
            hits = {k: 0 for k in cfg.recall_caps}
            for vid in sorted(videos):
                dts, gs = videos[vid]
                dts = sorted(dts, key=lambda d: -d.confidence)[: cfg.max_dets]
                ious = st_iou_matrix([d.masks for d in dts], [g.masks for g in gs])
                match = greedy_match(ious, thr)
                scores.extend(d.confidence for d in dts)
                tps.extend(match >= 0)
                for k in cfg.recall_caps:
                    hits[k] += int(np.sum(match[:k] >= 0))
            ap_thr[ti] = interpolated_ap(scores, tps, num_gt, rp)
            for k in cfg.recall_caps:
                rec_thr[k][ti] = hits[k] / num_gt if num_gt else np.nan
        per_class_ap[cat] = float(ap_thr.mean())
        per_class_thr[cat] = ap_thr
        if num_gt:
            for k in cfg.recall_caps:
                recalls[k].append(rec_thr[k].mean())
    if not per_class_ap:
        return EvalReport(0.0, 0.0, 0.0, 0.0, 0.0)
    stack = np.array([per_class_thr[c] for c in sorted(per_class_thr)])
    mean_thr = stack.mean(axis=0)
    ar = {k: float(np.mean(v)) if v else 0.0 for k, v in recalls.items()}
    i50 = int(np.argmin(np.abs(thresholds - 0.5)))
    i75 = int(np.argmin(np.abs(thresholds - 0.75)))
    return EvalReport(
        AP=float(mean_thr.mean()),
        AP50=float(mean_thr[i50]),
        AP75=float(mean_thr[i75]),
        AR1=ar.get(1, 0.0),
        AR10=ar.get(10, 0.0),
        per_class=per_class_ap,
        per_threshold=mean_thr.tolist(),
    )
