"""JSON containers for datasets, results, reports and checkpoints.

Every file is a single JSON object with a ``format`` name and an integer
``version``. Masks are run-length lists over row-major pixels, starting
with a background run. Float arrays (images, parameters) are stored as
base64 of little-endian float64 with an explicit shape, so they survive a
round-trip bit for bit. The byte layout is documented in docs/formats.md.

Writers go through a temporary file and an atomic rename; readers either
return a complete object or raise FormatError naming the offending
location.
"""
import base64
import json
import os
import shutil
import tempfile

import numpy as np

from . import kernels
from .errors import FormatError, InputError
from .metrics import EvalReport
from .seghead import LEARNABLE, Encoder, HeadParams
from .structures import GTInstance, MaskSequence, ResultInstance, VideoAnnotation, VideoResult

VERSION = 1
DATASET = "querytrack-dataset"
RESULTS = "querytrack-results"
REPORT = "querytrack-report"
CHECKPOINT = "querytrack-checkpoint"

_DUMP = dict(separators=(",", ":"), sort_keys=False, allow_nan=False)


# ---------------------------------------------------------------- RLE


def encode_rle(mask):
    """Background-first run lengths of a binary H×W mask, row-major."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise InputError(f"mask must be 2-D, got shape {mask.shape}")
    if mask.dtype != bool and not np.isin(mask, (0, 1)).all():
        raise InputError("mask must be binary")
    return [int(x) for x in kernels.rle_encode(mask)]


def decode_rle(runs, h, w):
    """Inverse of ``encode_rle``; a run list not summing to h·w is a FormatError."""
    return kernels.rle_decode(runs, int(h) * int(w)).reshape(int(h), int(w)).astype(bool)


def _check_runs(runs, total, loc):
    arr = _run_array(runs, loc)
    if arr.size and arr.min() < 0:
        raise FormatError(f"{loc}: negative run length")
    if int(arr.sum()) != total:
        raise FormatError(f"{loc}: runs sum to {int(arr.sum())}, expected {total}")
    return arr


def _run_array(runs, loc):
    if not isinstance(runs, list) or not all(type(x) is int for x in runs):
        raise FormatError(f"{loc}: expected a list of integers")
    try:
        return kernels._as_run_array(runs)
    except FormatError as exc:
        raise FormatError(f"{loc}: {exc}") from None


# ---------------------------------------------------------------- arrays


def encode_array(a):
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"dtype": "<f8", "shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def decode_array(obj, loc):
    obj = _expect(obj, dict, loc)
    if obj.get("dtype") != "<f8":
        raise FormatError(f"{loc}.dtype: expected '<f8', got {obj.get('dtype')!r}")
    shape = _expect(obj.get("shape"), list, f"{loc}.shape")
    if not all(type(s) is int and s >= 0 for s in shape):
        raise FormatError(f"{loc}.shape: dimensions must be nonnegative integers")
    try:
        raw = base64.b64decode(_expect(obj.get("data"), str, f"{loc}.data"), validate=True)
    except ValueError as exc:
        raise FormatError(f"{loc}.data: bad base64 ({exc})") from None
    count = int(np.prod(shape)) if shape else 1
    if len(raw) != 8 * count:
        raise FormatError(f"{loc}.data: {len(raw)} bytes for shape {shape}")
    return np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)


# ---------------------------------------------------------------- container helpers


def _expect(value, typ, loc):
    if typ is int:
        ok = type(value) is int
    elif typ is float:
        ok = type(value) in (int, float)
    else:
        ok = isinstance(value, typ)
    if not ok:
        name = typ.__name__ if isinstance(typ, type) else "/".join(t.__name__ for t in typ)
        raise FormatError(f"{loc}: expected {name}, got {type(value).__name__}")
    return value


def _field(obj, key, typ, loc):
    if key not in obj:
        raise FormatError(f"{loc}: missing field {key!r}")
    return _expect(obj[key], typ, f"{loc}.{key}")


def _header(kind, config):
    return {"format": kind, "version": VERSION, "config": config if config is not None else {}}


def _umask_mode():
    mask = os.umask(0)
    os.umask(mask)
    return 0o666 & ~mask


def _temp_beside(path):
    """Temporary file next to ``path`` with ordinary (umask) permissions."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".json")
    os.chmod(tmp, _umask_mode())
    return fd, tmp


def _atomic_write(path, text):
    path = os.fspath(path)
    fd, tmp = _temp_beside(path)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load(path, kind):
    path = os.fspath(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: not UTF-8 text ({exc.reason} at byte {exc.start})") from None
    return check_header(doc, kind, path)


def check_header(doc, kind, where="<document>"):
    if not isinstance(doc, dict):
        raise FormatError(f"{where}: top level must be an object")
    if doc.get("format") != kind:
        raise FormatError(f"{where}: expected format {kind!r}, found {doc.get('format')!r}")
    version = doc.get("version")
    if version != VERSION:
        raise FormatError(f"{where}: unsupported {kind} version {version!r}; this build reads version {VERSION}")
    _field(doc, "config", dict, where)
    return doc


# ---------------------------------------------------------------- datasets


def annotation_to_json(ann):
    frames = []
    for t in range(ann.num_frames):
        items = []
        for inst in ann.instances:
            if not inst.masks.is_empty(t):
                items.append({"id": inst.instance_id, "rle": inst.masks.runs(t)})
        frames.append({"annotated": bool(ann.annotated[t]), "annotations": items})
    return {
        "id": ann.video_id,
        "height": ann.height,
        "width": ann.width,
        "num_frames": ann.num_frames,
        "num_classes": ann.num_classes,
        "meta": ann.meta,
        "instances": [{"id": inst.instance_id, "category": inst.category} for inst in ann.instances],
        "frames": frames,
        "images": None if ann.images is None else encode_array(ann.images),
    }


def annotation_from_json(obj, loc):
    obj = _expect(obj, dict, loc)
    vid = _field(obj, "id", str, loc)
    h = _field(obj, "height", int, loc)
    w = _field(obj, "width", int, loc)
    T = _field(obj, "num_frames", int, loc)
    if h < 1 or w < 1 or T < 1:
        raise FormatError(f"{loc}: dimensions must be positive")
    num_classes = obj.get("num_classes")
    if num_classes is not None:
        _expect(num_classes, int, f"{loc}.num_classes")
    meta = _expect(obj.get("meta", {}), dict, f"{loc}.meta")
    insts = _field(obj, "instances", list, loc)
    seqs, cats = {}, {}
    for k, item in enumerate(insts):
        il = f"{loc}.instances[{k}]"
        item = _expect(item, dict, il)
        gid = _field(item, "id", int, il)
        if gid in seqs:
            raise FormatError(f"{il}: duplicate instance id {gid}")
        cats[gid] = _field(item, "category", int, il)
        seqs[gid] = MaskSequence(h, w)
    frames = _field(obj, "frames", list, loc)
    if len(frames) != T:
        raise FormatError(f"{loc}.frames: {len(frames)} frames, expected {T}")
    annotated = np.zeros(T, dtype=bool)
    for t, fr in enumerate(frames):
        fl = f"{loc}.frames[{t}]"
        fr = _expect(fr, dict, fl)
        annotated[t] = _field(fr, "annotated", bool, fl)
        seen = set()
        for a, item in enumerate(_field(fr, "annotations", list, fl)):
            al = f"{fl}.annotations[{a}]"
            item = _expect(item, dict, al)
            gid = _field(item, "id", int, al)
            if gid not in seqs:
                raise FormatError(f"{al}: unknown instance id {gid}")
            if gid in seen:
                raise FormatError(f"{al}: instance {gid} annotated twice")
            seen.add(gid)
            runs = _check_runs(_field(item, "rle", list, al), h * w, f"{al}.rle")
            seqs[gid].append_runs(runs)
        for gid in seqs:
            if gid not in seen:
                seqs[gid].append_runs([h * w])
    images = obj.get("images")
    if images is not None:
        images = decode_array(images, f"{loc}.images")
        if images.ndim != 4 or images.shape[:3] != (T, h, w):
            raise FormatError(f"{loc}.images: shape {images.shape} does not match {T}×{h}×{w}×C")
    return VideoAnnotation(
        video_id=vid,
        height=h,
        width=w,
        num_frames=T,
        instances=[GTInstance(gid, cats[gid], seqs[gid]) for gid in seqs],
        annotated=annotated,
        images=images,
        num_classes=num_classes,
        meta=meta,
    )


def dumps_dataset(videos, config=None):
    lines = [json.dumps(annotation_to_json(v), **_DUMP) for v in videos]
    head = json.dumps(_header(DATASET, config), **_DUMP)[:-1]
    return head + ',"videos":[\n' + ",\n".join(lines) + "\n]}\n"


def write_dataset(path, videos, config=None):
    ids = [v.video_id for v in videos]
    if len(set(ids)) != len(ids):
        raise InputError("video ids must be unique")
    _atomic_write(path, dumps_dataset(videos, config))


def read_dataset(path):
    """Returns ``(videos, config)``."""
    doc = _load(path, DATASET)
    videos = [annotation_from_json(v, f"videos[{i}]") for i, v in enumerate(_field(doc, "videos", list, "document"))]
    ids = [v.video_id for v in videos]
    if len(set(ids)) != len(ids):
        raise FormatError(f"{os.fspath(path)}: duplicate video ids")
    return videos, doc["config"]


# ---------------------------------------------------------------- results


def instance_to_json(inst):
    seq = inst.masks
    return {
        "category": int(inst.category),
        "confidence": float(inst.confidence),
        "slot": int(inst.slot),
        "masks": [seq.runs(t) for t in range(len(seq))],
    }


def result_to_json(res):
    return {
        "id": res.video_id,
        "height": res.height,
        "width": res.width,
        "num_frames": res.num_frames,
        "instances": [instance_to_json(i) for i in res.instances],
    }


def result_from_json(obj, loc):
    obj = _expect(obj, dict, loc)
    vid = _field(obj, "id", str, loc)
    h = _field(obj, "height", int, loc)
    w = _field(obj, "width", int, loc)
    T = _field(obj, "num_frames", int, loc)
    res = VideoResult(vid, h, w, T)
    for k, item in enumerate(_field(obj, "instances", list, loc)):
        il = f"{loc}.instances[{k}]"
        item = _expect(item, dict, il)
        conf = _field(item, "confidence", float, il)
        if not 0.0 <= conf <= 1.0:
            raise FormatError(f"{il}.confidence: {conf} outside [0, 1]")
        masks = _field(item, "masks", list, il)
        if len(masks) != T:
            raise FormatError(f"{il}.masks: {len(masks)} frames, expected {T}")
        seq = MaskSequence(h, w)
        for t, runs in enumerate(masks):
            seq.append_runs(_check_runs(runs, h * w, f"{il}.masks[{t}]"))
        res.instances.append(
            ResultInstance(
                category=_field(item, "category", int, il),
                confidence=conf,
                masks=seq,
                slot=int(item.get("slot", -1)),
            )
        )
    return res


def stream_video(fh, video_id, height, width, num_frames, instances):
    """Serialize one results video to ``fh`` without materializing it.

    ``instances`` yields ``(category, confidence, slot, frame_runs)`` where
    ``frame_runs`` is any iterable of per-frame run lists. The bytes equal
    ``json.dumps(result_to_json(...))`` in the compact layout.
    """
    head = {"id": video_id, "height": int(height), "width": int(width), "num_frames": int(num_frames)}
    fh.write(json.dumps(head, **_DUMP)[:-1] + ',"instances":[')
    for k, (category, confidence, slot, frame_runs) in enumerate(instances):
        head = {"category": int(category), "confidence": float(confidence), "slot": int(slot)}
        fh.write(("," if k else "") + json.dumps(head, **_DUMP)[:-1] + ',"masks":[')
        for t, runs in enumerate(frame_runs):
            fh.write(("," if t else "") + json.dumps([int(x) for x in runs], **_DUMP))
        fh.write("]}")
    fh.write("]}")


def _result_items(res):
    for inst in res.instances:
        seq = inst.masks
        yield inst.category, inst.confidence, inst.slot, (seq.runs(t) for t in range(len(seq)))


class ResultsWriter:
    """Write a results file one video at a time.

    Nothing is visible at ``path`` until ``close`` succeeds.
    """

    def __init__(self, path, config=None):
        self.path = os.fspath(path)
        fd, self._tmp = _temp_beside(self.path)
        self._fh = os.fdopen(fd, "w", encoding="utf-8")
        self._fh.write(json.dumps(_header(RESULTS, config), **_DUMP)[:-1] + ',"videos":[')
        self._videos = 0

    def _sep(self):
        self._fh.write("\n" if self._videos == 0 else ",\n")
        self._videos += 1

    def write_video(self, res):
        self._sep()
        stream_video(self._fh, res.video_id, res.height, res.width, res.num_frames, _result_items(res))

    def write_stream(self, video_id, height, width, num_frames, instances):
        self._sep()
        stream_video(self._fh, video_id, height, width, num_frames, instances)

    def write_fragment(self, path, chunk=1 << 16):
        """Append a video object previously written by ``stream_video`` to its own file."""
        self._sep()
        with open(path, "r", encoding="utf-8") as src:
            shutil.copyfileobj(src, self._fh, chunk)

    def close(self):
        self._fh.write("\n]}\n")
        self._fh.close()
        os.replace(self._tmp, self.path)

    def abort(self):
        self._fh.close()
        if os.path.exists(self._tmp):
            os.unlink(self._tmp)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.close()
        else:
            self.abort()
        return False


def write_results(path, results, config=None):
    with ResultsWriter(path, config) as w:
        for res in results:
            w.write_video(res)


def read_results(path):
    """Returns ``(results, config)`` with results in file order."""
    doc = _load(path, RESULTS)
    out = [result_from_json(v, f"videos[{i}]") for i, v in enumerate(_field(doc, "videos", list, "document"))]
    ids = [r.video_id for r in out]
    if len(set(ids)) != len(ids):
        raise FormatError(f"{os.fspath(path)}: duplicate video ids")
    return out, doc["config"]


# ---------------------------------------------------------------- reports

_METRICS = ("AP", "AP50", "AP75", "AR1", "AR10")


def report_to_json(report, config=None):
    doc = _header(REPORT, config)
    doc["scaled"] = {k: 100.0 * getattr(report, k) for k in _METRICS}
    doc["raw"] = {k: float(getattr(report, k)) for k in _METRICS}
    doc["per_class"] = [{"category": int(c), "AP": float(v)} for c, v in sorted(report.per_class.items())]
    doc["per_threshold"] = [float(x) for x in report.per_threshold]
    return doc


def write_report(path, report, config=None):
    _atomic_write(path, json.dumps(report_to_json(report, config), indent=2, allow_nan=False) + "\n")


def read_report(path):
    """Returns ``(report, config)``; values are the unscaled fractions."""
    doc = _load(path, REPORT)
    raw = _field(doc, "raw", dict, "document")
    vals = {k: float(_field(raw, k, float, "raw")) for k in _METRICS}
    per_class = {}
    for i, row in enumerate(_field(doc, "per_class", list, "document")):
        loc = f"per_class[{i}]"
        row = _expect(row, dict, loc)
        per_class[_field(row, "category", int, loc)] = float(_field(row, "AP", float, loc))
    thr = [float(_expect(x, float, f"per_threshold[{i}]")) for i, x in enumerate(_field(doc, "per_threshold", list, "document"))]
    return EvalReport(per_class=per_class, per_threshold=thr, **vals), doc["config"]


# ---------------------------------------------------------------- checkpoints


def write_checkpoint(path, params, iteration=0, losses=(), config=None):
    doc = _header(CHECKPOINT, config)
    doc["iteration"] = int(iteration)
    doc["losses"] = [float(x) for x in losses]
    doc["attn_temperature"] = float(params.attn_temperature)
    doc["blocks"] = {name: encode_array(getattr(params, name)) for name in LEARNABLE}
    doc["encoder"] = {"weight": encode_array(params.encoder.weight), "bias": encode_array(params.encoder.bias)}
    _atomic_write(path, json.dumps(doc, indent=1, allow_nan=False) + "\n")


def read_checkpoint(path):
    """Returns ``(params, iteration, losses, config)``."""
    doc = _load(path, CHECKPOINT)
    iteration = _field(doc, "iteration", int, "document")
    losses = [float(_expect(x, float, f"losses[{i}]")) for i, x in enumerate(_field(doc, "losses", list, "document"))]
    blocks = _field(doc, "blocks", dict, "document")
    arrays = {name: decode_array(_field(blocks, name, dict, "blocks"), f"blocks.{name}") for name in LEARNABLE}
    enc = _field(doc, "encoder", dict, "document")
    encoder = Encoder(decode_array(_field(enc, "weight", dict, "encoder"), "encoder.weight"),
                      decode_array(_field(enc, "bias", dict, "encoder"), "encoder.bias"))
    params = HeadParams(encoder=encoder, attn_temperature=float(_field(doc, "attn_temperature", float, "document")), **arrays)
    _check_param_shapes(params)
    return params, iteration, losses, doc["config"]


def _check_param_shapes(p):
    n, c = p.query_init.shape if p.query_init.ndim == 2 else (None, None)
    k1 = p.wc.shape[0] if p.wc.ndim == 2 else None
    want = {
        "w1": (c, c), "b1": (c,), "w2": (c, c), "b2": (c,), "wc": (k1, c), "bc": (k1,),
    }
    if n is None or k1 is None:
        raise FormatError("checkpoint: query_init and wc must be matrices")
    for name, shape in want.items():
        if getattr(p, name).shape != shape:
            raise FormatError(f"checkpoint: blocks.{name} has shape {getattr(p, name).shape}, expected {shape}")
    if p.encoder.weight.ndim != 2 or p.encoder.weight.shape[1] != c or p.encoder.bias.shape != (c,):
        raise FormatError("checkpoint: encoder shapes do not match the query dimension")
