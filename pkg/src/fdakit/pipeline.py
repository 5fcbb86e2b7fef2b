"""Batch orchestration: manifests, seeded pairing, image I/O, adapt jobs.

Everything a job produces is a pure function of (manifests, seed, config):
pairing and crop offsets come from named Philox streams, work items are
independent, and per-item results are merged in item order, so outputs are
byte-identical for any worker count.

PRNG scheme ("philox-v1"): the pairing stream is a numpy Philox generator
keyed by the job seed; the per-item stream for item ``i`` is a Philox
generator built from ``SeedSequence(entropy=seed, spawn_key=(1, i))``.
"""

from __future__ import annotations

import json
import os
import threading
import time
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .spectral import as_image_array
from .transfer import multi_beta_transfer, prepare_target

__all__ = [
    "AdaptJob",
    "DatasetManifest",
    "ItemRecord",
    "JobReport",
    "ManifestEntry",
    "PAIRING_FIXED_CYCLE",
    "PAIRING_RANDOM",
    "PRNG_SCHEME",
    "bilinear_resize",
    "build_manifest",
    "decode_image",
    "encode_png",
    "output_name",
    "pair_stream",
    "preprocess",
    "quantize_u8",
    "read_tensor",
    "run_adapt_job",
    "tensor_sidecar",
    "write_tensor",
]

PRNG_SCHEME = "philox-v1"
PAIRING_RANDOM = "random"
PAIRING_FIXED_CYCLE = "fixed-cycle"
FORMAT_PNG = "png"
FORMAT_TENSOR = "tensor"


# ---------------------------------------------------------------------------
# manifests and pairing

@dataclass(frozen=True)
class ManifestEntry:
    path: str  # relative to the manifest root, POSIX separators
    label: str | None = None


@dataclass(frozen=True)
class DatasetManifest:
    """Ordered image list rooted at a directory.

    Entry order is the lexicographic order of relative paths, fixed at
    build time; indices into a manifest are therefore stable identifiers.
    """

    root: str
    entries: tuple[ManifestEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def abspath(self, index: int) -> Path:
        return Path(self.root) / self.entries[index].path


def build_manifest(root, pattern: str = "*.png", labels_root=None) -> DatasetManifest:
    """Scan ``root`` recursively for files matching ``pattern``.

    When ``labels_root`` is given, an entry gets a label path if a file
    with the same relative path exists under it.
    """
    rootp = Path(root)
    if not rootp.is_dir():
        raise ValueError(f"manifest root is not a readable directory: {root}")
    rels = sorted(p.relative_to(rootp).as_posix() for p in rootp.rglob(pattern) if p.is_file())
    if not rels:
        raise ValueError(f"no files under {root} match pattern {pattern!r}")
    entries = []
    for rel in rels:
        label = None
        if labels_root is not None and (Path(labels_root) / rel).is_file():
            label = (Path(labels_root) / rel).as_posix()
        entries.append(ManifestEntry(rel, label))
    return DatasetManifest(str(rootp), tuple(entries))


@dataclass
class AdaptJob:
    """Manifest of one batch adaptation run.

    ``resize`` is the (H, W) working size applied to sources; the target
    of each pair is always brought to the source's working dims. ``crop``
    is an (H, W) random crop applied to source and target with shared
    offsets. ``workers=0`` means use the available parallelism.
    """

    source: DatasetManifest
    target: DatasetManifest
    out_dir: str
    betas: tuple[float, ...] = (0.09,)
    seed: int = 0
    pairing: str = PAIRING_RANDOM
    out_format: str = FORMAT_PNG
    resize: tuple[int, int] | None = None
    crop: tuple[int, int] | None = None
    repeats: int = 1
    workers: int = 0
    strict_zero: bool = False
    png_compress_level: int = 1
    # prepared target spectra to keep in memory; targets usually style many
    # sources, so reusing their forward transforms saves a decode+FFT per
    # item without changing a single output bit (0 disables)
    target_cache: int = 4

    def validate(self) -> None:
        if len(self.betas) == 0:
            raise ValueError("betas must be non-empty")
        for b in self.betas:
            if not (0.0 <= float(b) <= 1.0):
                raise ValueError(f"beta must lie in [0, 1], got {b}")
        if self.pairing not in (PAIRING_RANDOM, PAIRING_FIXED_CYCLE):
            raise ValueError(f"unknown pairing mode {self.pairing!r}")
        if self.out_format not in (FORMAT_PNG, FORMAT_TENSOR):
            raise ValueError(f"unknown output format {self.out_format!r}")
        if self.repeats < 1:
            raise ValueError(f"repeats must be at least 1, got {self.repeats}")
        if self.workers < 0:
            raise ValueError(f"workers must be non-negative, got {self.workers}")
        if self.target_cache < 0:
            raise ValueError(f"target_cache must be non-negative, got {self.target_cache}")

    def config_dict(self) -> dict:
        return {
            "source_root": self.source.root,
            "source_count": len(self.source),
            "target_root": self.target.root,
            "target_count": len(self.target),
            "out_dir": str(self.out_dir),
            "betas": [float(b) for b in self.betas],
            "seed": int(self.seed),
            "pairing": self.pairing,
            "out_format": self.out_format,
            "resize": list(self.resize) if self.resize else None,
            "crop": list(self.crop) if self.crop else None,
            "repeats": self.repeats,
            "workers": self.workers,
            "strict_zero": self.strict_zero,
            "png_compress_level": self.png_compress_level,
            "target_cache": self.target_cache,
            "prng_scheme": PRNG_SCHEME,
        }


def pair_stream(job: AdaptJob) -> list[tuple[int, int]]:
    """Source/target index pairs, one per source position per repeat.

    Random mode draws the target index for each position from the
    seed-keyed Philox stream, uniform over the target set; fixed-cycle
    uses position mod target count. Same (seed, manifests) gives the same
    sequence on every platform.
    """
    n_s, n_t = len(job.source), len(job.target)
    if n_s == 0 or n_t == 0:
        raise ValueError("both manifests must be non-empty")
    total = n_s * job.repeats
    if job.pairing == PAIRING_RANDOM:
        rng = np.random.Generator(np.random.Philox(key=job.seed))
        targets = rng.integers(0, n_t, size=total)
    elif job.pairing == PAIRING_FIXED_CYCLE:
        targets = np.arange(total) % n_t
    else:
        raise ValueError(f"unknown pairing mode {job.pairing!r}")
    return [(pos % n_s, int(targets[pos])) for pos in range(total)]


def item_rng(seed: int, index: int) -> np.random.Generator:
    """Independent per-item stream (crop offsets etc.) under philox-v1."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(1, index))
    return np.random.Generator(np.random.Philox(ss))


# ---------------------------------------------------------------------------
# decoding, resizing, encoding

def decode_image(path) -> np.ndarray:
    """Decode a PNG or JPEG file to (H, W, C) float64 in [0, 255]."""
    with Image.open(path) as im:
        mode = "L" if im.mode in ("1", "L", "I", "I;16", "F") else "RGB"
        arr = np.asarray(im.convert(mode), dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr


def quantize_u8(image) -> np.ndarray:
    """Encode-time quantization: round to integers and clip to [0, 255]."""
    return np.clip(np.rint(np.asarray(image, dtype=np.float64)), 0, 255).astype(np.uint8)


def encode_png(path, image, compress_level: int = 1) -> None:
    u8 = quantize_u8(image)
    if u8.ndim == 3 and u8.shape[2] == 1:
        pil = Image.fromarray(u8[:, :, 0], mode="L")
    else:
        pil = Image.fromarray(u8)
    pil.save(path, format="PNG", compress_level=compress_level)


def bilinear_resize(image, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling with half-pixel centers and clamped edges.

    Output values are convex combinations of input samples, so a [0, 255]
    image stays in [0, 255]. Resizing to the input size returns the input
    unchanged.
    """
    arr = as_image_array(image)
    h, w = arr.shape[:2]
    if out_h < 1 or out_w < 1:
        raise ValueError(f"resize dims must be at least 1x1, got {out_h}x{out_w}")
    if (out_h, out_w) == (h, w):
        return arr.copy()
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    y0 = np.floor(ys)
    x0 = np.floor(xs)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]
    y0c = np.clip(y0.astype(np.int64), 0, h - 1)
    y1c = np.clip(y0.astype(np.int64) + 1, 0, h - 1)
    x0c = np.clip(x0.astype(np.int64), 0, w - 1)
    x1c = np.clip(x0.astype(np.int64) + 1, 0, w - 1)
    top = arr[y0c][:, x0c] * (1 - wx) + arr[y0c][:, x1c] * wx
    bot = arr[y1c][:, x0c] * (1 - wx) + arr[y1c][:, x1c] * wx
    return top * (1 - wy) + bot * wy


def preprocess(image, resize: tuple[int, int] | None = None,
               crop: tuple[int, int] | None = None,
               rng: np.random.Generator | None = None) -> np.ndarray:
    """Optional bilinear resize then optional crop, values kept in [0, 255].

    Crop offsets are drawn from ``rng`` when given; without an rng the
    crop is centered. Adaptation operates on raw [0, 255] intensities, so
    no mean subtraction or scaling happens here.
    """
    arr = as_image_array(image)
    if resize is not None:
        arr = bilinear_resize(arr, int(resize[0]), int(resize[1]))
    if crop is not None:
        ch, cw = int(crop[0]), int(crop[1])
        h, w = arr.shape[:2]
        if ch < 1 or cw < 1:
            raise ValueError(f"crop dims must be at least 1x1, got {ch}x{cw}")
        if ch > h or cw > w:
            raise ValueError(f"crop {ch}x{cw} exceeds image dims {h}x{w}")
        if rng is not None:
            top = int(rng.integers(0, h - ch + 1))
            left = int(rng.integers(0, w - cw + 1))
        else:
            top, left = (h - ch) // 2, (w - cw) // 2
        arr = arr[top:top + ch, left:left + cw].copy()
    return arr


# ---------------------------------------------------------------------------
# raw tensor interchange files

TENSOR_FORMAT = "fdakit-tensor-v1"
_TENSOR_DTYPES = {"float32": "<f4", "int32": "<i4"}


def tensor_sidecar(path) -> Path:
    return Path(str(path) + ".json")


def write_tensor(path, array) -> None:
    """Write a raw little-endian row-major payload plus a JSON header sidecar.

    Float arrays are stored as float32, integer arrays as int32; dims of
    2 (label maps) or 3 (probability maps / float images) are accepted.
    """
    arr = np.asarray(array)
    if arr.dtype.kind == "f":
        arr, dtype = arr.astype("<f4"), "float32"
    elif arr.dtype.kind in "iu":
        arr, dtype = arr.astype("<i4"), "int32"
    else:
        raise ValueError(f"unsupported dtype {arr.dtype}")
    if arr.ndim not in (2, 3) or min(arr.shape) < 1:
        raise ValueError(f"expected a 2D or 3D array with positive dims, got shape {arr.shape}")
    header = {
        "format": TENSOR_FORMAT,
        "dims": list(arr.shape),
        "dtype": dtype,
        "endianness": "little",
        "layout": "row-major channel-last",
    }
    Path(path).write_bytes(np.ascontiguousarray(arr).tobytes())
    tensor_sidecar(path).write_text(json.dumps(header, sort_keys=True) + "\n")


def read_tensor(path) -> np.ndarray:
    """Read a tensor file back; raises on any header/payload inconsistency."""
    sidecar = tensor_sidecar(path)
    if not sidecar.is_file():
        raise ValueError(f"missing header sidecar {sidecar}")
    try:
        header = json.loads(sidecar.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"header sidecar {sidecar} is not valid JSON: {exc}") from exc
    dims = header.get("dims")
    dtype = header.get("dtype")
    if dtype not in _TENSOR_DTYPES:
        raise ValueError(f"{sidecar}: dtype must be one of {sorted(_TENSOR_DTYPES)}, got {dtype!r}")
    if header.get("endianness") != "little":
        raise ValueError(f"{sidecar}: endianness must be 'little'")
    if (not isinstance(dims, list) or len(dims) not in (2, 3)
            or any(not isinstance(d, int) or d < 1 for d in dims)):
        raise ValueError(f"{sidecar}: dims must be 2 or 3 positive integers, got {dims!r}")
    payload = Path(path).read_bytes()
    expected = int(np.prod(dims)) * 4
    if len(payload) != expected:
        raise ValueError(
            f"{path}: payload length {len(payload)} does not match dims {dims} ({expected} bytes)"
        )
    arr = np.frombuffer(payload, dtype=_TENSOR_DTYPES[dtype]).reshape(dims).copy()
    if dtype == "float32" and not np.isfinite(arr).all():
        raise ValueError(f"{path}: payload contains non-finite values")
    return arr


# ---------------------------------------------------------------------------
# adapt jobs

def _stem(rel_path: str) -> str:
    return Path(rel_path).with_suffix("").as_posix().replace("/", "_")


def output_name(source_rel: str, target_rel: str, beta: float, ext: str) -> str:
    return f"{_stem(source_rel)}__b{format(float(beta), 'g')}__t{_stem(target_rel)}.{ext}"


@dataclass
class ItemRecord:
    index: int
    source: str
    target: str
    beta: float
    output: str
    status: str  # "ok" or "failed"
    seconds: float
    imag_residual: float
    clamp_count: int
    error: str = ""


@dataclass
class JobReport:
    config: dict
    items: list[ItemRecord] = field(default_factory=list)
    wall_seconds: float = 0.0

    @property
    def n_ok(self) -> int:
        return sum(1 for it in self.items if it.status == "ok")

    @property
    def n_failed(self) -> int:
        return sum(1 for it in self.items if it.status == "failed")

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "summary": {
                "items": len(self.items),
                "ok": self.n_ok,
                "failed": self.n_failed,
                "wall_seconds": self.wall_seconds,
                "busy_seconds": sum(it.seconds for it in self.items),
                "max_imag_residual": max((it.imag_residual for it in self.items
                                          if it.status == "ok"), default=0.0),
            },
            "items": [vars(it) for it in self.items],
        }


class _LruCache:
    """Tiny thread-safe LRU. Values must be pure functions of their key, so
    concurrent duplicate builds and eviction order cannot affect results."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._data: OrderedDict = OrderedDict()
        self._lock = threading.Lock()

    def get(self, key, build):
        with self._lock:
            if key in self._data:
                self._data.move_to_end(key)
                return self._data[key]
        value = build()  # built outside the lock; a racing miss is benign
        with self._lock:
            self._data[key] = value
            self._data.move_to_end(key)
            while len(self._data) > self.capacity:
                self._data.popitem(last=False)
        return value


def _match_target_dims(tgt: np.ndarray, shape: tuple) -> np.ndarray:
    """Bring a target image to the source's working dims and channel count."""
    if tgt.shape == shape:
        return tgt
    if tgt.shape[2] != shape[2]:
        tgt = tgt[:, :, :1] if shape[2] == 1 else np.repeat(tgt[:, :, :1], 3, axis=2)
    if tgt.shape[:2] != shape[:2]:
        tgt = bilinear_resize(tgt, shape[0], shape[1])
    return tgt


def _process_pair(job: AdaptJob, pos: int, src_idx: int, tgt_idx: int,
                  cache: _LruCache | None) -> list[ItemRecord]:
    src_rel = job.source.entries[src_idx].path
    tgt_rel = job.target.entries[tgt_idx].path
    ext = "png" if job.out_format == FORMAT_PNG else "bin"
    base = pos * len(job.betas)
    t0 = time.perf_counter()
    try:
        src = decode_image(job.source.abspath(src_idx))
        src = preprocess(src, resize=job.resize)
        if job.crop is not None:
            tgt = _match_target_dims(decode_image(job.target.abspath(tgt_idx)), src.shape)
            rng = item_rng(job.seed, pos)
            ch, cw = job.crop
            h, w = src.shape[:2]
            if ch > h or cw > w:
                raise ValueError(f"crop {ch}x{cw} exceeds working dims {h}x{w}")
            top = int(rng.integers(0, h - ch + 1))
            left = int(rng.integers(0, w - cw + 1))
            src = src[top:top + ch, left:left + cw]
            tgt = tgt[top:top + ch, left:left + cw]
        elif cache is not None:
            tgt = cache.get(
                (tgt_idx, src.shape),
                lambda: prepare_target(
                    _match_target_dims(decode_image(job.target.abspath(tgt_idx)), src.shape)),
            )
        else:
            tgt = _match_target_dims(decode_image(job.target.abspath(tgt_idx)), src.shape)
        results = multi_beta_transfer(src, tgt, job.betas, strict_zero=job.strict_zero)
        records = []
        for k, res in enumerate(results):
            name = output_name(src_rel, tgt_rel, res.beta, ext)
            out_path = Path(job.out_dir) / name
            if job.out_format == FORMAT_PNG:
                encode_png(out_path, res.adapted, compress_level=job.png_compress_level)
            else:
                write_tensor(out_path, res.adapted.astype(np.float32))
            records.append(ItemRecord(base + k, src_rel, tgt_rel, res.beta, name, "ok",
                                      0.0, res.imag_residual, res.clamp_count))
        elapsed = time.perf_counter() - t0
        for rec in records:
            rec.seconds = elapsed / len(records)
        return records
    except Exception as exc:  # isolate per-item failures; the job continues
        elapsed = time.perf_counter() - t0
        return [
            ItemRecord(base + k, src_rel, tgt_rel, float(beta), "", "failed",
                       elapsed / len(job.betas), 0.0, 0, f"{type(exc).__name__}: {exc}")
            for k, beta in enumerate(job.betas)
        ]


def run_adapt_job(job: AdaptJob) -> JobReport:
    """Adapt every (source, target, beta) work item and write the outputs.

    Output files are named ``<source-stem>__b<beta>__t<target-stem>.<ext>``.
    Items fail individually without aborting the job; the job itself fails
    only if every item failed. Outputs are byte-identical for any worker
    count.
    """
    job.validate()
    Path(job.out_dir).mkdir(parents=True, exist_ok=True)
    pairs = pair_stream(job)
    workers = job.workers or os.cpu_count() or 1
    cache = _LruCache(job.target_cache) if job.target_cache > 0 else None
    t0 = time.perf_counter()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        chunks = list(pool.map(
            lambda args: _process_pair(job, *args, cache),
            [(pos, si, ti) for pos, (si, ti) in enumerate(pairs)],
        ))
    report = JobReport(config=job.config_dict())
    for chunk in chunks:
        report.items.extend(chunk)
    report.wall_seconds = time.perf_counter() - t0
    if report.items and report.n_ok == 0:
        first = report.items[0].error
        raise RuntimeError(f"all {len(report.items)} items failed; first error: {first}")
    return report
