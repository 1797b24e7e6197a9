import time

import numpy as np
import pytest

from querytrack import seghead, synth

_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per criterion; printed in the terminal summary."""

    def record(number, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
        _ACCEPTANCE.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE, key=lambda x: x[0]):
        terminalreporter.write_line(line)


def annotations_equal(a, b):
    if (a.video_id, a.height, a.width, a.num_frames, a.num_classes) != (b.video_id, b.height, b.width, b.num_frames, b.num_classes):
        return False
    if not np.array_equal(a.annotated, b.annotated) or a.meta != b.meta:
        return False
    if (a.images is None) != (b.images is None):
        return False
    if a.images is not None and (a.images.shape != b.images.shape or a.images.tobytes() != b.images.tobytes()):
        return False
    if len(a.instances) != len(b.instances):
        return False
    return all(
        (x.instance_id, x.category) == (y.instance_id, y.category) and x.masks == y.masks
        for x, y in zip(a.instances, b.instances)
    )


def results_equal(a, b):
    if (a.video_id, a.height, a.width, a.num_frames, len(a.instances)) != (b.video_id, b.height, b.width, b.num_frames, len(b.instances)):
        return False
    return all(
        (x.category, x.confidence, x.slot) == (y.category, y.confidence, y.slot) and x.masks == y.masks
        for x, y in zip(a.instances, b.instances)
    )


TOY = synth.ScenarioSpec(motion="linear", num_instances=3, num_queries=8, speed=1.0)


def toy_videos(count, seed_start, **overrides):
    base = synth.replace(TOY, **overrides)
    return [synth.generate(s).annotation for s in synth.family(base, count, seed_start, prefix="toy")]


@pytest.fixture(scope="session")
def trained_toy():
    """Head trained for 2000 iterations on 50 toy videos; 10 held-out videos."""
    start = time.perf_counter()
    train = toy_videos(50, 0)
    held_out = toy_videos(10, 1000)
    frames = synth.training_frames(train)
    p0 = seghead.init_params(TOY.num_queries, 16, TOY.num_classes, TOY.in_channels, seed=0)
    result = seghead.train(p0, frames, seghead.TrainConfig(lr=0.05, iters=2000, seed=0))
    seconds = time.perf_counter() - start
    return dict(init=p0, result=result, train=train, held_out=held_out, frames=frames, seconds=seconds)
