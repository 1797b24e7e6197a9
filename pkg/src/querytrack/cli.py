"""Command-line driver: generate, train, track, eval, ablate.

Exit codes: 0 success, 2 usage or invalid input, 3 bad or inconsistent
data files, 4 numeric failure (divergence, non-finite values).
"""
import argparse
import csv
import io
import json
import logging
import os
import struct
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace

import numpy as np

from . import datio, kernels, metrics, seghead, synth, tracker
from .errors import DataError, FormatError, GenerationError, InputError, NumericError

log = logging.getLogger("querytrack")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(InputError):
    pass


# ---------------------------------------------------------------- helpers


def _need_file(path, what):
    if not os.path.isfile(path):
        raise UsageError(f"{what} {path!r} does not exist")
    return path


def _need_out(path):
    d = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(d):
        raise UsageError(f"output directory {d!r} does not exist")
    return path


def _run_config(args, **extra):
    cfg = {"command": args.command}
    for k, v in sorted(vars(args).items()):
        # parallelism and destinations do not change outputs, so they are not provenance
        if k in ("command", "func", "verbose", "jobs", "output", "csv"):
            continue
        cfg[k] = v
    cfg.update(extra)
    return cfg


def _load_scenario(args):
    """(base ScenarioSpec, count, seed_start, prefix) from --spec / --preset flags."""
    count, seed_start, prefix = args.count, args.seed_start, args.prefix
    if args.spec:
        _need_file(args.spec, "spec file")
        try:
            with open(args.spec, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise UsageError(f"{args.spec}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        if not isinstance(doc, dict):
            raise UsageError(f"{args.spec}: expected a JSON object")
        if "scenario" in doc:
            count = doc.get("count", count)
            seed_start = doc.get("seed_start", seed_start)
            prefix = doc.get("prefix", prefix)
            fields = doc["scenario"]
        else:
            fields = doc
        base = synth.ScenarioSpec.from_dict(fields)
    elif args.preset:
        base = synth.preset(args.preset)
    else:
        raise UsageError("give --spec or --preset")
    for item in args.set or []:
        key, _, value = item.partition("=")
        if key not in synth.ScenarioSpec.__dataclass_fields__:
            raise UsageError(f"--set: unknown scenario field {key!r}")
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            parsed = value
        base = replace(base, **{key: parsed})
    if type(count) is not int or count < 1:
        raise UsageError("count must be a positive integer")
    base.validate()
    return base, count, seed_start, prefix


def _add_scenario_flags(p):
    p.add_argument("--spec", help="JSON scenario file (fields of ScenarioSpec, or {scenario, count, seed_start, prefix})")
    p.add_argument("--preset", choices=sorted(synth.PRESETS), help="named scenario")
    p.add_argument("--set", action="append", metavar="FIELD=VALUE", help="override one scenario field (repeatable)")
    p.add_argument("--count", type=int, default=1, help="number of videos (seeds seed-start, seed-start+1, ...)")
    p.add_argument("--seed-start", type=int, default=0)
    p.add_argument("--prefix", default="video", help="video id prefix")


def _write_csv(path, header, rows, config):
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    datio._atomic_write(path, buf.getvalue())


# ---------------------------------------------------------------- generate


def cmd_generate(args):
    _need_out(args.output)
    if args.annotate_fraction is not None and not 0.0 < args.annotate_fraction <= 1.0:
        raise UsageError(f"--annotate-fraction must lie in (0, 1], got {args.annotate_fraction}")
    base, count, seed_start, prefix = _load_scenario(args)
    specs = synth.family(base, count, seed_start, prefix)
    videos = []
    for spec in specs:
        try:
            videos.append(synth.generate(spec, keep_images=not args.no_images).annotation)
        except GenerationError as exc:
            raise UsageError(f"scenario {spec.video_id}: {exc}") from None
    if args.annotate_fraction is not None:
        videos = synth.subsample_annotations(videos, args.annotate_fraction, seed=args.subsample_seed)
    config = _run_config(args, scenario=base.to_dict(), version=datio.VERSION)
    datio.write_dataset(args.output, videos, config)
    annotated = sum(int(v.annotated.sum()) for v in videos)
    print(f"wrote {len(videos)} videos ({annotated} annotated frames) to {args.output}")
    return EXIT_OK


# ---------------------------------------------------------------- train


def _train_config(args, saved=None):
    if saved is not None:
        cfg = seghead.TrainConfig(**saved)
        cfg.iters = args.iters
        return cfg
    return seghead.TrainConfig(
        lr=args.lr,
        iters=args.iters,
        seed=args.seed,
        batch_size=args.batch_size,
        hinge_weight=args.hinge_weight,
        hinge_margin=args.hinge_margin,
        limited_range=not args.full_range,
    )


def cmd_train(args):
    _need_file(args.dataset, "dataset")
    _need_out(args.output)
    if args.resume:
        _need_file(args.resume, "checkpoint")
    if args.loss_log:
        _need_out(args.loss_log)
    if args.iters < 0:
        raise UsageError("--iters must be >= 0")
    videos, _ = datio.read_dataset(args.dataset)
    for v in videos:
        if v.images is None:
            raise DataError(f"video {v.video_id} carries no images")
    frames = synth.training_frames(videos)
    if not frames:
        raise DataError("dataset has no annotated frames")
    num_classes = max(v.num_classes or 1 for v in videos)
    in_channels = videos[0].images.shape[-1]
    if args.resume:
        params, start, losses, saved = datio.read_checkpoint(args.resume)
        cfg = _train_config(args, saved.get("train"))
        model = saved.get("model", {})
        if start > cfg.iters:
            raise UsageError(f"checkpoint is at iteration {start}, beyond --iters {cfg.iters}")
    else:
        model = {
            "num_queries": args.num_queries,
            "dim": args.dim,
            "num_classes": num_classes,
            "in_channels": in_channels,
            "seed": args.init_seed,
        }
        params = seghead.init_params(**model)
        cfg = _train_config(args)
        start, losses = 0, []
    if params.num_classes != num_classes or params.encoder.weight.shape[0] != in_channels:
        raise DataError("dataset class count or channels do not match the model")
    hinge_videos = synth.training_videos(videos) if cfg.hinge_weight > 0 else None
    result = seghead.train(params, frames, cfg, videos=hinge_videos, start_iter=start, losses=losses)
    config = {"command": "train", "dataset": args.dataset, "train": asdict(cfg), "model": model}
    datio.write_checkpoint(args.output, result.params, result.iterations, result.losses, config)
    if args.loss_log:
        _write_csv(args.loss_log, ["iteration", "loss"], [(i, repr(l)) for i, l in enumerate(result.losses)], config)
    if result.losses:
        print(f"iterations {result.iterations}: loss {result.losses[0]:.4f} -> {result.losses[-1]:.4f}")
    else:
        print("iterations 0: parameters unchanged")
    return EXIT_OK


# ---------------------------------------------------------------- track


class _SlotSpool:
    """Per-slot files of length-prefixed int32 run lists, one record per frame."""

    def __init__(self, directory):
        self.dir = directory
        self.files = None

    def __call__(self, t, masks):
        if self.files is None:
            self.files = [open(os.path.join(self.dir, f"slot{s}.bin"), "w+b") for s in range(masks.shape[0])]
        for fh, m in zip(self.files, masks):
            runs = np.asarray(kernels.rle_encode(m), dtype="<i4")
            fh.write(struct.pack("<i", runs.size))
            fh.write(runs.tobytes())

    def replay(self, slot):
        fh = self.files[slot]
        fh.flush()
        fh.seek(0)
        while True:
            head = fh.read(4)
            if not head:
                return
            (n,) = struct.unpack("<i", head)
            yield np.frombuffer(fh.read(4 * n), dtype="<i4").tolist()

    def close(self):
        for fh in self.files or []:
            fh.close()


def _oracle_frames(spec):
    for frame in synth.iter_frames(spec):
        yield frame.prediction


def _track_one(job):
    """Track one video and write its results object to ``job['out']``."""
    if job["source"] == "oracle":
        spec = synth.ScenarioSpec.from_dict(job["scenario"])
        frames = _oracle_frames(spec)
    else:
        params, _, _, _ = datio.read_checkpoint(job["checkpoint"])
        frames = seghead.predict_video(params, job["images"])
    with tempfile.TemporaryDirectory(prefix="qt-spool-") as tmp:
        spool = _SlotSpool(tmp)
        tr = tracker.OnlineTracker(job["scorer"], spool)
        try:
            for frame in frames:
                tr.push(frame)
            if tr.num_frames != job["num_frames"]:
                raise DataError(f"video {job['video_id']}: {tr.num_frames} frames, expected {job['num_frames']}")
            kept = tr.select(job["top_k"], job["conf_threshold"])
            items = ((label, conf, s, spool.replay(s)) for s, label, conf in kept)
            with open(job["out"], "w", encoding="utf-8") as fh:
                datio.stream_video(fh, job["video_id"], job["height"], job["width"], job["num_frames"], items)
        finally:
            spool.close()
    return job["out"]


def _jobs_from_args(args):
    """One job per video, in video-id order."""
    common = {"scorer": args.scorer, "top_k": args.top_k, "conf_threshold": args.conf_threshold}
    jobs = []
    if args.dataset:
        _need_file(args.dataset, "dataset")
        if args.checkpoint:
            _need_file(args.checkpoint, "checkpoint")
        videos, _ = datio.read_dataset(args.dataset)
        for v in videos:
            job = dict(common, video_id=v.video_id, height=v.height, width=v.width, num_frames=v.num_frames)
            if args.checkpoint:
                if v.images is None:
                    raise DataError(f"video {v.video_id} carries no images")
                job.update(source="model", checkpoint=args.checkpoint, images=v.images)
            else:
                scen = v.meta.get("scenario")
                if scen is None:
                    raise DataError(f"video {v.video_id} has no embedded scenario; pass --checkpoint")
                spec = synth.ScenarioSpec.from_dict(scen)
                if (spec.height, spec.width, spec.num_frames) != (v.height, v.width, v.num_frames):
                    raise DataError(f"video {v.video_id}: embedded scenario does not match its dimensions")
                job.update(source="oracle", scenario=spec.to_dict())
            jobs.append(job)
    else:
        base, count, seed_start, prefix = _load_scenario(args)
        for spec in synth.family(base, count, seed_start, prefix):
            jobs.append(dict(common, source="oracle", scenario=spec.to_dict(), video_id=spec.video_id,
                             height=spec.height, width=spec.width, num_frames=spec.num_frames))
    ids = [j["video_id"] for j in jobs]
    if len(set(ids)) != len(ids):
        raise DataError("duplicate video ids")
    return sorted(jobs, key=lambda j: j["video_id"])


def _run_jobs(jobs, num_jobs):
    if num_jobs <= 1 or len(jobs) <= 1:
        return [_track_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=num_jobs) as pool:
        return list(pool.map(_track_one, jobs))


def cmd_track(args):
    _need_out(args.output)
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    if args.checkpoint and not args.dataset:
        raise UsageError("--checkpoint needs --dataset for the images")
    if args.dataset and (args.spec or args.preset):
        raise UsageError("give either --dataset or a scenario, not both")
    jobs = _jobs_from_args(args)
    config = _run_config(args)
    with tempfile.TemporaryDirectory(prefix="qt-track-") as tmp:
        for k, job in enumerate(jobs):
            job["out"] = os.path.join(tmp, f"{k:06d}.json")
        paths = _run_jobs(jobs, args.jobs)
        with datio.ResultsWriter(args.output, config) as w:
            for p in paths:
                w.write_fragment(p)
    print(f"tracked {len(jobs)} videos with scorer={args.scorer} -> {args.output}")
    return EXIT_OK


# ---------------------------------------------------------------- eval / ablate


def _evaluate(results, videos):
    gts = {v.video_id: v for v in videos}
    return metrics.evaluate({r.video_id: r for r in results}, gts)


def _metric_row(report):
    s = report.scaled()
    return [repr(float(s[k])) for k in ("AP", "AP50", "AP75", "AR1", "AR10")]


def cmd_eval(args):
    _need_file(args.results, "results")
    _need_file(args.dataset, "dataset")
    _need_out(args.output)
    if args.csv:
        _need_out(args.csv)
    results, _ = datio.read_results(args.results)
    videos, _ = datio.read_dataset(args.dataset)
    report = _evaluate(results, videos)
    config = _run_config(args)
    datio.write_report(args.output, report, config)
    if args.csv:
        rows = [(c, repr(100.0 * ap)) for c, ap in sorted(report.per_class.items())]
        _write_csv(args.csv, ["category", "AP"], rows, config)
    s = report.scaled()
    print("  ".join(f"{k} {s[k]:.1f}" for k in ("AP", "AP50", "AP75", "AR1", "AR10")))
    return EXIT_OK


def cmd_ablate(args):
    _need_file(args.dataset, "dataset")
    _need_out(args.output)
    videos, _ = datio.read_dataset(args.dataset)
    rows = []
    with tempfile.TemporaryDirectory(prefix="qt-ablate-") as tmp:
        for scorer in tracker.SCORERS:
            ns = argparse.Namespace(**vars(args))
            ns.scorer, ns.checkpoint, ns.spec, ns.preset = scorer, None, None, None
            jobs = _jobs_from_args(ns)
            for k, job in enumerate(jobs):
                job["out"] = os.path.join(tmp, f"{scorer}-{k:06d}.json")
            out = os.path.join(tmp, f"{scorer}.json")
            with datio.ResultsWriter(out) as w:
                for p in _run_jobs(jobs, args.jobs):
                    w.write_fragment(p)
            results, _ = datio.read_results(out)
            rows.append([scorer] + _metric_row(_evaluate(results, videos)))
    _write_csv(args.output, ["scorer", "AP", "AP50", "AP75", "AR1", "AR10"], rows, _run_config(args))
    for r in rows:
        print(f"{r[0]:<10} AP {float(r[1]):.1f}")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser():
    p = argparse.ArgumentParser(prog="querytrack", description="Query-matching video instance tracking toolkit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic dataset")
    _add_scenario_flags(g)
    g.add_argument("--annotate-fraction", type=float, help="keep this share of annotated frames per video (min 1)")
    g.add_argument("--subsample-seed", type=int, default=0)
    g.add_argument("--no-images", action="store_true", help="omit images (oracle tracking only)")
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train the segmentation head on annotated frames")
    t.add_argument("--dataset", required=True)
    t.add_argument("-o", "--output", required=True, help="checkpoint path")
    t.add_argument("--resume", help="continue from this checkpoint with its stored settings")
    t.add_argument("--loss-log", help="CSV of per-iteration losses")
    t.add_argument("--iters", type=int, default=2000)
    t.add_argument("--lr", type=float, default=0.05)
    t.add_argument("--seed", type=int, default=0, help="batch sampling seed")
    t.add_argument("--init-seed", type=int, default=0, help="parameter initialization seed")
    t.add_argument("--batch-size", type=int, default=8)
    t.add_argument("--num-queries", type=int, default=8)
    t.add_argument("--dim", type=int, default=16)
    t.add_argument("--hinge-weight", type=float, default=0.0, help="weight of the supervised matching loss")
    t.add_argument("--hinge-margin", type=float, default=0.5)
    t.add_argument("--full-range", action="store_true", help="sample hinge frame pairs beyond adjacent annotated frames")
    t.set_defaults(func=cmd_train)

    k = sub.add_parser("track", help="track videos and write results")
    _add_scenario_flags(k)
    k.add_argument("--dataset", help="dataset file; oracle predictions are rebuilt from its embedded scenarios")
    k.add_argument("--checkpoint", help="predict with a trained head instead of the oracle")
    k.add_argument("--scorer", choices=tracker.SCORERS, default="query")
    k.add_argument("--top-k", type=int, default=10)
    k.add_argument("--conf-threshold", type=float, default=0.05)
    k.add_argument("--jobs", type=int, default=1, help="videos processed in parallel")
    k.add_argument("-o", "--output", required=True)
    k.set_defaults(func=cmd_track)

    e = sub.add_parser("eval", help="score results against a dataset")
    e.add_argument("--results", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("-o", "--output", required=True, help="report JSON")
    e.add_argument("--csv", help="per-class AP rows")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", help="compare the three scorers on a dataset's oracle predictions")
    a.add_argument("--dataset", required=True)
    a.add_argument("--top-k", type=int, default=10)
    a.add_argument("--conf-threshold", type=float, default=0.05)
    a.add_argument("--jobs", type=int, default=1)
    a.add_argument("-o", "--output", required=True, help="CSV table")
    a.set_defaults(func=cmd_ablate)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (FormatError, DataError) as exc:
        print(f"querytrack: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"querytrack: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, GenerationError) as exc:
        print(f"querytrack: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
