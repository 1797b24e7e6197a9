"""Tiny hand-built objects behind the files in tests/golden/.

Run this module directly to rewrite the golden files after an intentional
format change (and bump the format version when the change is breaking).
"""
import os

import numpy as np

from querytrack import datio, seghead
from querytrack.metrics import EvalReport
from querytrack.structures import GTInstance, MaskSequence, ResultInstance, VideoAnnotation, VideoResult

GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "golden")


def _seq(*frames):
    return MaskSequence.from_dense(np.array(frames, dtype=bool))


def dataset():
    # 2×3 grid, 2 frames; instance 7 in both frames, instance 9 only in frame 1;
    # clip-b's single frame was dropped by the sub-sampler, so it has no labels
    a = VideoAnnotation(
        "clip-a", 2, 3, 2,
        [
            GTInstance(7, 0, _seq([[1, 1, 0], [0, 0, 0]], [[0, 1, 1], [0, 0, 0]])),
            GTInstance(9, 1, _seq([[0, 0, 0], [0, 0, 0]], [[0, 0, 0], [1, 0, 0]])),
        ],
        annotated=[True, True],
        images=np.arange(2 * 2 * 3 * 1, dtype=float).reshape(2, 2, 3, 1) / 4,
        num_classes=2,
        meta={"note": "golden"},
    )
    b = VideoAnnotation("clip-b", 1, 2, 1, [GTInstance(1, 0, _seq([[0, 0]]))], annotated=[False], num_classes=2)
    return [a, b], {"command": "golden"}


def results():
    r = VideoResult("clip-a", 2, 3, 2, [
        ResultInstance(0, 0.75, _seq([[1, 1, 0], [0, 0, 0]], [[0, 1, 1], [0, 0, 0]]), slot=3),
        ResultInstance(1, 0.5, _seq([[0, 0, 0], [0, 0, 0]], [[0, 0, 0], [1, 1, 1]]), slot=0),
    ])
    return [r, VideoResult("clip-b", 1, 2, 1, [])], {"command": "golden"}


def report():
    rep = EvalReport(0.5, 0.75, 0.25, 0.5, 0.625, per_class={0: 1.0, 1: 0.0}, per_threshold=[0.5] * 10)
    return rep, {"command": "golden"}


def checkpoint():
    p = seghead.init_params(2, 2, 1, 2, seed=0)
    return p, 3, [1.5, 1.25, 1.0], {"command": "golden"}


def write_all(directory=GOLDEN_DIR):
    os.makedirs(directory, exist_ok=True)
    videos, cfg = dataset()
    datio.write_dataset(os.path.join(directory, "dataset.json"), videos, cfg)
    res, cfg = results()
    datio.write_results(os.path.join(directory, "results.json"), res, cfg)
    rep, cfg = report()
    datio.write_report(os.path.join(directory, "report.json"), rep, cfg)
    p, it, losses, cfg = checkpoint()
    datio.write_checkpoint(os.path.join(directory, "checkpoint.json"), p, it, losses, cfg)


if __name__ == "__main__":
    write_all()
