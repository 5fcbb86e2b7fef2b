"""Command-line surface: batch adaptation, band sweeps, pseudo-label
ensembling, loss evaluation, IoU scoring, and artifact validation.

Exit codes: 0 success, 1 runtime/I-O failure, 2 usage or validation
failure. Every run echoes its fully resolved configuration (seed included)
to stdout, and report-producing commands also write it into a
machine-readable report file next to their outputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import ensemble as ens
from . import figures, losses, pipeline
from .transfer import amplitude_shift_energy, multi_beta_transfer

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


# ---------------------------------------------------------------------------
# shared helpers

def _resolve_seed(seed):
    if seed is None:
        seed = int.from_bytes(os.urandom(8), "little") % (2 ** 63)
        print(f"seed: {seed} (chosen randomly; pass --seed {seed} to reproduce)")
    return int(seed)


def _parse_size(text: str) -> tuple[int, int]:
    """Parse a WxH size string like 1280x720 into (height, width)."""
    try:
        w, h = (int(p) for p in text.lower().split("x"))
    except Exception:
        raise ValueError(f"expected a WxH size like 1280x720, got {text!r}") from None
    if w < 1 or h < 1:
        raise ValueError(f"size dims must be positive, got {text!r}")
    return h, w


def _collect_betas(ns) -> list[float] | None:
    betas: list[float] = list(ns.beta or [])
    if ns.betas:
        betas.extend(float(p) for p in ns.betas.split(","))
    return betas or None


def _echo_config(cfg: dict) -> None:
    print("config: " + json.dumps(cfg, sort_keys=True))


def _write_csv(path, fieldnames, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)


def _tensor_files(path, pattern: str) -> list[Path]:
    p = Path(path)
    if p.is_dir():
        files = sorted(f for f in p.glob(pattern) if f.is_file() and not f.name.endswith(".json"))
        if not files:
            raise ValueError(f"no tensor files under {p} match {pattern!r}")
        return files
    if p.is_file():
        return [p]
    raise ValueError(f"no such file or directory: {p}")


# ---------------------------------------------------------------------------
# adapt

_ADAPT_DEFAULTS = {
    "src": None,
    "tgt": None,
    "out": None,
    "betas": [0.09],
    "seed": None,
    "pairing": pipeline.PAIRING_RANDOM,
    "format": pipeline.FORMAT_PNG,
    "resize": None,
    "crop": None,
    "workers": 0,
    "repeats": 1,
    "strict_zero": False,
    "png_compress_level": 1,
    "target_cache": 4,
    "pattern": "*.png",
}


def _merge_adapt_config(ns) -> dict:
    cfg = dict(_ADAPT_DEFAULTS)
    if ns.config:
        file_cfg = json.loads(Path(ns.config).read_text())
        unknown = sorted(set(file_cfg) - set(cfg))
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        cfg.update(file_cfg)
    overrides = {
        "src": ns.src, "tgt": ns.tgt, "out": ns.out,
        "betas": _collect_betas(ns), "seed": ns.seed, "pairing": ns.pairing,
        "format": ns.format, "resize": ns.resize, "crop": ns.crop,
        "workers": ns.workers, "repeats": ns.repeats, "strict_zero": ns.strict_zero,
        "png_compress_level": ns.png_compress_level, "target_cache": ns.target_cache,
        "pattern": ns.pattern,
    }
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    for key in ("src", "tgt", "out"):
        if cfg[key] is None:
            raise ValueError(f"missing required option --{key}")
    for b in cfg["betas"]:
        if not (0.0 <= float(b) <= 1.0):
            raise ValueError(f"beta must lie in [0, 1], got {b}")
    cfg["seed"] = _resolve_seed(cfg["seed"])
    for key in ("resize", "crop"):
        if isinstance(cfg[key], str):
            cfg[key] = _parse_size(cfg[key])
    return cfg


def cmd_adapt(ns) -> int:
    cfg = _merge_adapt_config(ns)
    source = pipeline.build_manifest(cfg["src"], cfg["pattern"])
    target = pipeline.build_manifest(cfg["tgt"], cfg["pattern"])
    job = pipeline.AdaptJob(
        source=source, target=target, out_dir=cfg["out"],
        betas=tuple(float(b) for b in cfg["betas"]), seed=cfg["seed"],
        pairing=cfg["pairing"], out_format=cfg["format"],
        resize=tuple(cfg["resize"]) if cfg["resize"] else None,
        crop=tuple(cfg["crop"]) if cfg["crop"] else None,
        repeats=int(cfg["repeats"]), workers=int(cfg["workers"]),
        strict_zero=bool(cfg["strict_zero"]),
        png_compress_level=int(cfg["png_compress_level"]),
        target_cache=int(cfg["target_cache"]),
    )
    job.validate()
    _echo_config(job.config_dict())
    report = pipeline.run_adapt_job(job)

    out_dir = Path(cfg["out"])
    data = report.to_dict()
    (out_dir / "report.json").write_text(json.dumps(data, indent=2) + "\n")
    _write_csv(out_dir / "report.csv",
               ["index", "source", "target", "beta", "output", "status",
                "seconds", "imag_residual", "clamp_count", "error"],
               data["items"])
    if ns.figures:
        ok = [it for it in report.items if it.status == "ok"]
        figures.adapt_report_figure([it.imag_residual for it in ok],
                                    [it.clamp_count for it in ok],
                                    out_dir / "adapt_report.png")
    summary = data["summary"]
    rate = summary["ok"] / report.wall_seconds if report.wall_seconds > 0 else float("inf")
    print(f"items: {summary['items']}  ok: {summary['ok']}  failed: {summary['failed']}")
    print(f"wall: {report.wall_seconds:.2f}s  throughput: {rate:.2f} images/s  "
          f"max residual: {summary['max_imag_residual']:.3g}")
    print(f"report: {out_dir / 'report.json'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep

def cmd_sweep(ns) -> int:
    betas = _collect_betas(ns) or [0.09]
    seed = _resolve_seed(ns.seed)
    out_dir = Path(ns.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = {
        "src": str(ns.src), "tgt": str(ns.tgt), "out": str(out_dir),
        "betas": betas, "seed": seed, "strict_zero": bool(ns.strict_zero),
    }
    _echo_config(cfg)

    src = pipeline.decode_image(ns.src)
    tgt = pipeline.decode_image(ns.tgt)
    if tgt.shape != src.shape:
        if tgt.shape[2] != src.shape[2]:
            tgt = tgt[:, :, :1] if src.shape[2] == 1 else np.repeat(tgt[:, :, :1], 3, axis=2)
        tgt = pipeline.bilinear_resize(tgt, src.shape[0], src.shape[1])
    results = multi_beta_transfer(src, tgt, betas, strict_zero=bool(ns.strict_zero))

    src_stem = Path(ns.src).stem
    tgt_stem = Path(ns.tgt).stem
    panels = []
    rows = []
    for res in results:
        u8 = pipeline.quantize_u8(res.adapted)
        name = pipeline.output_name(src_stem + ".png", tgt_stem + ".png", res.beta, "png")
        pipeline.encode_png(out_dir / name, u8)
        panels.append(u8)
        rows.append({
            "beta": res.beta,
            "output": name,
            "imag_residual": res.imag_residual,
            "clamp_count": res.clamp_count,
            "amp_shift_energy": amplitude_shift_energy(u8.astype(np.float64), src),
        })
        print(f"beta={res.beta:g}  ->  {name}  (clamped {res.clamp_count} px)")

    strip = figures.concat_strip(panels)
    pipeline.encode_png(out_dir / "strip.png", strip)
    _write_csv(out_dir / "sweep_metrics.csv",
               ["beta", "output", "imag_residual", "clamp_count", "amp_shift_energy"], rows)
    if ns.figures:
        figures.sweep_energy_figure([r["beta"] for r in rows],
                                    [r["amp_shift_energy"] for r in rows],
                                    out_dir / "sweep_energy.png")
    (out_dir / "report.json").write_text(
        json.dumps({"config": cfg, "metrics": rows}, indent=2) + "\n")
    print(f"strip: {out_dir / 'strip.png'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# ensemble

def cmd_ensemble(ns) -> int:
    cfg_obj = ens.EnsembleConfig(top_fraction=ns.top_fraction,
                                 confidence_floor=ns.confidence_floor,
                                 scope=ns.scope)
    out_dir = Path(ns.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = {
        "pred_dirs": [str(d) for d in ns.preds], "out": str(out_dir),
        "top_fraction": cfg_obj.top_fraction, "confidence_floor": cfg_obj.confidence_floor,
        "scope": cfg_obj.scope, "pattern": ns.pattern,
    }
    _echo_config(cfg)

    per_dir = [_tensor_files(d, ns.pattern) for d in ns.preds]
    name_sets = [[f.name for f in files] for files in per_dir]
    if any(names != name_sets[0] for names in name_sets[1:]):
        raise ValueError(
            "prediction directories must contain the same file names; got "
            + "; ".join(f"{d}: {len(n)} files" for d, n in zip(ns.preds, name_sets))
        )

    means = []
    for row in zip(*per_dir):
        maps = [pipeline.read_tensor(f) for f in row]
        for f, m in zip(row, maps):
            if m.ndim != 3:
                raise ValueError(f"{f}: expected an (H, W, K) probability tensor, got dims {m.shape}")
        means.append(ens.mean_prediction(maps))
    result = ens.pseudo_labels(means, cfg_obj)

    for f, lab in zip(per_dir[0], result.labels):
        pipeline.write_tensor(out_dir / f.name, lab.astype(np.int32))
    k = result.kept_fraction.size
    rows = [{"class": i, "kept_fraction": result.kept_fraction[i],
             "mean_confidence": result.mean_confidence[i]} for i in range(k)]
    _write_csv(out_dir / "kept_fractions.csv",
               ["class", "kept_fraction", "mean_confidence"], rows)
    if ns.figures:
        figures.kept_fraction_figure(result.kept_fraction, out_dir / "kept_fractions.png")
    (out_dir / "ensemble_report.json").write_text(json.dumps({
        "config": cfg,
        "images": len(result.labels),
        "kept_fraction": result.kept_fraction.tolist(),
        "mean_confidence": result.mean_confidence.tolist(),
    }, indent=2) + "\n")
    for i in range(k):
        print(f"class {i:2d}  kept {result.kept_fraction[i]:.4f}  "
              f"mean confidence {result.mean_confidence[i]:.4f}")
    print(f"pseudo labels: {len(result.labels)} files in {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# loss

def cmd_loss(ns) -> int:
    cfg_obj = losses.LossConfig(eta=ns.eta, lambda_ent=ns.lambda_ent,
                                epsilon=ns.epsilon, reduction=ns.reduction)
    cfg = {
        "pred": str(ns.pred), "labels": str(ns.labels) if ns.labels else None,
        "pseudo_labels": str(ns.pseudo_labels) if ns.pseudo_labels else None,
        "eta": cfg_obj.eta, "lambda_ent": cfg_obj.lambda_ent,
        "epsilon": cfg_obj.epsilon, "reduction": cfg_obj.reduction,
    }
    _echo_config(cfg)
    pred = pipeline.read_tensor(ns.pred)
    if pred.ndim != 3:
        raise ValueError(f"{ns.pred}: expected an (H, W, K) probability tensor, got dims {pred.shape}")
    pred = pred.astype(np.float64)

    ent = losses.robust_entropy(pred, cfg_obj)
    print(f"robust_entropy = {ent!r}")
    ce = None
    if ns.labels:
        lab = pipeline.read_tensor(ns.labels)
        ce = losses.cross_entropy(pred, lab, cfg_obj)
        print(f"cross_entropy = {ce!r}")
        print(f"combined_loss = {losses.combined_loss(ce, ent, cfg_obj)!r}")
    if ns.pseudo_labels:
        pseudo = pipeline.read_tensor(ns.pseudo_labels)
        pseudo_ce = losses.cross_entropy(pred, pseudo, cfg_obj)
        print(f"pseudo_cross_entropy = {pseudo_ce!r}")
        if ce is not None:
            print(f"sst_loss = {losses.sst_loss(ce, ent, pseudo_ce, cfg_obj)!r}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# miou

def cmd_miou(ns) -> int:
    pred_files = [f for p in ns.preds for f in _tensor_files(p, ns.pattern)]
    gt_files = [f for p in ns.gts for f in _tensor_files(p, ns.pattern)]
    if len(pred_files) != len(gt_files):
        raise ValueError(f"got {len(pred_files)} prediction files but {len(gt_files)} ground truths")
    cfg = {
        "preds": [str(f) for f in pred_files], "gts": [str(f) for f in gt_files],
        "classes": ns.classes, "out": str(ns.out) if ns.out else None,
    }
    _echo_config(cfg)
    preds = [pipeline.read_tensor(f) for f in pred_files]
    gts = [pipeline.read_tensor(f) for f in gt_files]
    iou, mean = ens.compute_miou(preds, gts, ns.classes)

    rows = []
    for k, v in enumerate(iou):
        line = f"class {k:2d}  IoU " + ("   absent" if np.isnan(v) else f"{v:.6f}")
        print(line)
        rows.append({"class": k, "iou": "" if np.isnan(v) else v})
    print(f"mean IoU {mean:.6f}")
    if ns.out:
        out_dir = Path(ns.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_csv(out_dir / "miou.csv", ["class", "iou"], rows)
        if ns.figures:
            figures.iou_figure(iou, mean, out_dir / "miou.png")
        (out_dir / "miou.json").write_text(json.dumps({
            "config": cfg,
            "per_class": [None if np.isnan(v) else float(v) for v in iou],
            "mean": mean,
        }, indent=2) + "\n")
        print(f"report: {out_dir / 'miou.json'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# validate

def _validate_tensor(path, kind: str, classes: int | None) -> str:
    # auto only runs the generic header/payload checks: a 3D float tensor
    # may be a probability map or a float image, and only the caller knows
    arr = pipeline.read_tensor(path)
    if kind == "prediction":
        losses.as_prediction_map(arr.astype(np.float64))
        return f"prediction map dims {list(arr.shape)}"
    if kind == "labels":
        losses.as_label_map(arr, classes if classes else 255)
        return f"label map dims {list(arr.shape)}"
    return f"tensor dims {list(arr.shape)} dtype {arr.dtype}"


def cmd_validate(ns) -> int:
    path = Path(ns.path)
    kind = ns.kind
    if kind == "auto":
        if path.is_dir():
            kind = "manifest"
    try:
        if kind == "manifest":
            manifest = pipeline.build_manifest(path, ns.pattern)
            for i in range(len(manifest)):
                from PIL import Image
                with Image.open(manifest.abspath(i)) as im:
                    im.verify()
            detail = f"manifest of {len(manifest)} entries"
        else:
            detail = _validate_tensor(path, kind, ns.classes)
    except Exception as exc:
        print(f"INVALID {path}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"OK {path}: {detail}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fdakit",
        description="Frequency-domain image adaptation, loss kernels, and pseudo-label tooling.",
    )
    parser.add_argument("--version", action="version", version=f"fdakit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_betas(p):
        p.add_argument("--beta", type=float, action="append",
                       help="band size in [0, 1]; repeatable")
        p.add_argument("--betas", help="comma-separated band sizes, e.g. 0.01,0.05,0.09")

    def add_figures(p):
        p.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True,
                       help="render report figures (default on)")

    p = sub.add_parser("adapt", help="adapt a source dataset toward a target dataset")
    p.add_argument("--src", help="source image directory")
    p.add_argument("--tgt", help="target image directory")
    p.add_argument("--out", help="output directory")
    add_betas(p)
    p.add_argument("--seed", type=int, help="PRNG seed; random (and printed) when omitted")
    p.add_argument("--pairing", choices=[pipeline.PAIRING_RANDOM, pipeline.PAIRING_FIXED_CYCLE])
    p.add_argument("--format", choices=[pipeline.FORMAT_PNG, pipeline.FORMAT_TENSOR])
    p.add_argument("--resize", help="working size as WxH, e.g. 1280x720")
    p.add_argument("--crop", help="random crop size as WxH, e.g. 1024x512")
    p.add_argument("--workers", type=int, help="worker threads; 0 = available parallelism")
    p.add_argument("--repeats", type=int, help="times to re-pair the full source set")
    p.add_argument("--strict-zero", action=argparse.BooleanOptionalAction, default=None,
                   help="make beta=0 an exact identity instead of a DC swap")
    p.add_argument("--png-compress-level", type=int, help="PNG compression level 0-9")
    p.add_argument("--target-cache", type=int,
                   help="prepared target spectra kept in memory (0 disables)")
    p.add_argument("--pattern", help="manifest glob pattern (default *.png)")
    p.add_argument("--config", help="JSON config file; flags override its values")
    add_figures(p)
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("sweep", help="adapt one pair at several band sizes and build a strip")
    p.add_argument("--src", required=True, help="source image file")
    p.add_argument("--tgt", required=True, help="target image file")
    p.add_argument("--out", required=True, help="output directory")
    add_betas(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--strict-zero", action=argparse.BooleanOptionalAction, default=False)
    add_figures(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ensemble", help="average prediction tensors and emit filtered pseudo-labels")
    p.add_argument("--preds", nargs="+", required=True,
                   help="one directory of prediction tensors per model")
    p.add_argument("--out", required=True)
    p.add_argument("--top-fraction", type=float, default=0.66)
    p.add_argument("--confidence-floor", type=float, default=0.9)
    p.add_argument("--scope", choices=[ens.SCOPE_BATCH, ens.SCOPE_IMAGE], default=ens.SCOPE_BATCH)
    p.add_argument("--pattern", default="*.bin")
    add_figures(p)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("loss", help="evaluate loss kernels over tensor files")
    p.add_argument("--pred", required=True, help="prediction tensor (H, W, K float32)")
    p.add_argument("--labels", help="label tensor (H, W int32)")
    p.add_argument("--pseudo-labels", help="pseudo-label tensor (H, W int32)")
    p.add_argument("--eta", type=float, default=2.0)
    p.add_argument("--lambda-ent", type=float, default=0.005)
    p.add_argument("--epsilon", type=float, default=0.001)
    p.add_argument("--reduction", choices=["mean", "sum"], default="mean")
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("miou", help="score predicted label maps against ground truth")
    p.add_argument("--preds", nargs="+", required=True, help="label tensor files or directories")
    p.add_argument("--gts", nargs="+", required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--pattern", default="*.bin")
    p.add_argument("--out", help="directory for the csv/json/figure report")
    add_figures(p)
    p.set_defaults(func=cmd_miou)

    p = sub.add_parser("validate", help="check a tensor file or image manifest, exit 2 on violation")
    p.add_argument("path")
    p.add_argument("--kind", choices=["auto", "tensor", "prediction", "labels", "manifest"],
                   default="auto")
    p.add_argument("--classes", type=int)
    p.add_argument("--pattern", default="*.png")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        return ns.func(ns)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
