"""Operator surface: preprocessing, synthesis, training, inference, reports.

Exit codes: 0 success, 1 usage error, 2 validation error, 3 runtime failure.
Failures emit one machine-parseable JSON line on stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .config import ConfigError, PipelineConfig, load_config
from .head import GaitClass, Prediction
from .model import init_fusion_params, predict
from .params import load_checkpoint, save_checkpoint
from .preprocess import Box, RawFramePair, align_sequence
from .report import GaitMetadata, report_for
from .synthetic import SynthConfig, gen_dataset, load_dataset, load_features, \
    split_dataset, write_dataset
from .tensor import Tensor, ValidationError, read_gft, write_gft
from .train import train_head
from .viz import export_heatmap

__all__ = ["main"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's default 2
        raise UsageError(message)


def _shared_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON pipeline config file")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--workers", type=int, help="parallel workers for frame-level work")
    p.add_argument("--llm-url", help="chat-completions endpoint base URL")
    p.add_argument("--dims", choices=["standard", "reduced"], help="dimension preset")


def _build_parser() -> _Parser:
    parser = _Parser(prog="gaitfuse", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="align raw RGB-D sequences into model inputs")
    _shared_flags(p)
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--size", type=int, default=640)
    p.add_argument("--scope", choices=["frame", "sequence"], default=None)

    p = sub.add_parser("gen-synthetic", help="write a synthetic labeled feature dataset")
    _shared_flags(p)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-per-class", type=int, default=300)
    p.add_argument("--noise-sigma", type=float, default=0.3)

    p = sub.add_parser("train", help="train the fusion stack on a feature dataset")
    _shared_flags(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--val-fraction", type=float, default=0.2)

    p = sub.add_parser("infer", help="classify every frame of a feature dataset")
    _shared_flags(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="predictions JSON path")
    p.add_argument("--ckpt", help="checkpoint directory; seeded init when omitted")

    p = sub.add_parser("report", help="generate clinical reports for predictions")
    _shared_flags(p)
    p.add_argument("--predictions", required=True)
    p.add_argument("--meta", required=True, help="gait metadata JSON")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("heatmap", help="dump fusion-stage activation maps as PGM")
    _shared_flags(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--ckpt")
    p.add_argument("--frame", type=int, default=0)

    p = sub.add_parser("bench", help="time the standard-dims forward pass")
    _shared_flags(p)
    p.add_argument("--frames", type=int, default=3)

    p = sub.add_parser("selftest", help="run the built-in oracle and gradient suites")
    _shared_flags(p)
    return parser


def _config_from(args: argparse.Namespace) -> PipelineConfig:
    overrides = {
        "seed": getattr(args, "seed", None),
        "workers": getattr(args, "workers", None),
        "llm_url": getattr(args, "llm_url", None),
        "dims": getattr(args, "dims", None),
    }
    for flag, key in (("epochs", "train.epochs"), ("lr", "train.lr"),
                      ("batch_size", "train.batch_size")):
        if getattr(args, flag, None) is not None:
            overrides[key] = getattr(args, flag)
    return load_config(getattr(args, "config", None), overrides)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _load_raw_sequence(seq_dir: Path) -> list[RawFramePair]:
    rgb_dir, depth_dir = seq_dir / "rgb", seq_dir / "depth"
    if not rgb_dir.is_dir() or not depth_dir.is_dir():
        raise ValidationError(f"{seq_dir}: expected rgb/ and depth/ subdirectories")
    regions = {}
    regions_path = seq_dir / "regions.json"
    if regions_path.exists():
        regions = {int(k): Box(*v) for k, v in
                   json.loads(regions_path.read_text()).items()}
    pairs = []
    for i, rgb_file in enumerate(sorted(rgb_dir.glob("*.gft"))):
        depth_file = depth_dir / rgb_file.name
        if not depth_file.exists():
            raise ValidationError(f"missing depth frame for {rgb_file.name}")
        pairs.append(RawFramePair(
            rgb=read_gft(rgb_file), depth_m=read_gft(depth_file),
            timestamp_us=i, subject_region=regions.get(i),
        ))
    if not pairs:
        raise ValidationError(f"{seq_dir}: no GFT frames found")
    return pairs


def _cmd_preprocess(args, cfg: PipelineConfig) -> int:
    from .preprocess import Scope
    scope = Scope(args.scope) if args.scope else cfg.preprocess_scope
    in_dir, out_dir = Path(args.in_dir), Path(args.out_dir)
    seq_dirs = [d for d in sorted(in_dir.iterdir()) if (d / "rgb").is_dir()] \
        if in_dir.is_dir() else []
    if not seq_dirs:
        raise ValidationError(f"{in_dir}: no sequence directories with rgb/ found")
    for seq in seq_dirs:
        aligned = align_sequence(_load_raw_sequence(seq), args.size, scope)
        for i, frame in enumerate(aligned):
            write_gft(out_dir / seq.name / "rgb" / f"{i:06d}.gft", frame.rgb)
            write_gft(out_dir / seq.name / "disparity" / f"{i:06d}.gft", frame.disparity)
        meta = seq / "meta.json"
        if meta.exists():
            (out_dir / seq.name / "meta.json").write_text(meta.read_text())
        print(f"aligned {len(aligned)} frames: {seq.name}")
    return 0


def _cmd_gen_synthetic(args, cfg: PipelineConfig) -> int:
    synth = SynthConfig(dims=cfg.dims, n_per_class=args.n_per_class,
                        noise_sigma=args.noise_sigma, seed=cfg.seed)
    samples = gen_dataset(synth)
    root = write_dataset(samples, args.out_dir)
    print(f"wrote {len(samples)} samples to {root}")
    return 0


def _cmd_train(args, cfg: PipelineConfig) -> int:
    samples = load_dataset(args.data)
    train_set, val_set = split_dataset(samples, args.val_fraction, seed=cfg.seed)
    params = init_fusion_params(cfg.dims, d_e=cfg.d_e, reduction=cfg.reduction,
                                seed=cfg.seed)
    out_dir = Path(args.out_dir)
    trained, log = train_head(train_set, val_set, params, cfg.train,
                              log_path=out_dir / "train_log.jsonl")
    save_checkpoint(out_dir / "checkpoint", trained)
    last_train = [r for r in log if r["split"] == "train"][-1]
    last_val = [r for r in log if r["split"] == "val"]
    print(f"trained {last_train['epoch'] + 1} epochs: "
          f"train acc {last_train['accuracy']:.3f}"
          + (f", val acc {last_val[-1]['accuracy']:.3f}" if last_val else ""))
    return 0


def _params_for(args, cfg: PipelineConfig):
    params = init_fusion_params(cfg.dims, d_e=cfg.d_e, reduction=cfg.reduction,
                                seed=cfg.seed)
    ckpt = getattr(args, "ckpt", None)
    if ckpt:
        params = load_checkpoint(ckpt, params)
    return params


def _prediction_record(index: int, pred: Prediction) -> dict:
    return {
        "frame_index": index,
        "class_label": pred.class_label.name.lower(),
        "probs": [float(p) for p in pred.probs],
        "confidence": float(pred.confidence),
        "embedding": [float(v) for v in pred.embedding.data],
    }


def _cmd_infer(args, cfg: PipelineConfig) -> int:
    samples = load_features(args.data)
    params = _params_for(args, cfg)

    def run_one(item):
        i, sample = item
        f4r, f4d, f5r, f5d = sample
        return _prediction_record(i, predict(f4r, f4d, f5r, f5d, params))

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            records = list(pool.map(run_one, enumerate(samples)))
    else:
        records = [run_one(item) for item in enumerate(samples)]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    payload = {"dims": cfg.dims_name, "seed": cfg.seed, "frames": records}
    out.write_text(json.dumps(payload, indent=2))
    print(f"wrote {len(records)} predictions to {out}")
    return 0


def _prediction_from_record(rec: dict) -> Prediction:
    return Prediction(
        class_label=GaitClass[rec["class_label"].upper()],
        probs=tuple(rec["probs"]),
        confidence=rec["confidence"],
        embedding=Tensor(np.asarray(rec["embedding"], dtype=np.float32)),
    )


def _cmd_report(args, cfg: PipelineConfig) -> int:
    payload = json.loads(Path(args.predictions).read_text())
    base_meta = GaitMetadata.load(args.meta)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def run_one(rec: dict) -> tuple[int, dict, str]:
        i = rec["frame_index"]
        pred = _prediction_from_record(rec)
        meta = GaitMetadata(subject_id=base_meta.subject_id,
                            symptoms=base_meta.symptoms,
                            capture=base_meta.capture, frame_index=i)
        rep = report_for(pred, meta, cfg.llm)
        doc = {"prediction": rec, "metadata": meta.to_json_dict(),
               "report": rep.to_json_dict()}
        return i, doc, rep.render_text()

    frames = payload["frames"]
    if cfg.workers > 1 and cfg.llm is not None:
        with ThreadPoolExecutor(max_workers=min(cfg.workers,
                                                cfg.llm.max_concurrency)) as pool:
            results = list(pool.map(run_one, frames))
    else:
        results = [run_one(rec) for rec in frames]
    for i, doc, text in results:
        (out_dir / f"report_{i:06d}.json").write_text(json.dumps(doc, indent=2))
        (out_dir / f"report_{i:06d}.txt").write_text(text)
    sources = {doc["report"]["source"] for _i, doc, _t in results}
    print(f"wrote {len(results)} reports to {out_dir} (sources: {sorted(sources)})")
    return 0


def _cmd_heatmap(args, cfg: PipelineConfig) -> int:
    from .model import forward_features
    samples = load_features(args.data)
    if not 0 <= args.frame < len(samples):
        raise ValidationError(f"frame {args.frame} out of range 0..{len(samples) - 1}")
    params = _params_for(args, cfg)
    f4r, f4d, f5r, f5d = samples[args.frame]
    trace: dict = {}
    forward_features(f4r, f4d, f5r, f5d, params, trace=trace)
    out_dir = Path(args.out_dir)
    exported = []
    for key in ("mlge.local.out", "mlge.global.out", "neck.c2psa.attention",
                "neck.f40", "neck.f20"):
        pgm, _csv = export_heatmap(trace[key], out_dir / f"{key.replace('.', '_')}.pgm")
        exported.append(pgm.name)
    print(f"wrote {len(exported)} heatmaps to {out_dir}: {', '.join(exported)}")
    return 0


def _cmd_bench(args, cfg: PipelineConfig) -> int:
    from .config import DIM_PRESETS
    dims = DIM_PRESETS["standard"] if getattr(args, "dims", None) is None else cfg.dims
    params = init_fusion_params(dims, d_e=cfg.d_e, seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    f4 = Tensor(rng.normal(size=dims.f4_shape).astype(np.float32))
    f5 = Tensor(rng.normal(size=dims.f5_shape).astype(np.float32))
    predict(f4, f4, f5, f5, params)  # warm-up
    start = time.perf_counter()
    for _ in range(args.frames):
        predict(f4, f4, f5, f5, params)
    ms = (time.perf_counter() - start) / args.frames * 1000.0
    print(f"forward pass at {dims.h4}x{dims.w4}x{dims.c4} / "
          f"{dims.h5}x{dims.w5}x{dims.c5}: {ms:.1f} ms/frame")
    return 0


def _cmd_selftest(args, cfg: PipelineConfig) -> int:
    from . import selftest
    return selftest.run()


_COMMANDS = {
    "preprocess": _cmd_preprocess,
    "gen-synthetic": _cmd_gen_synthetic,
    "train": _cmd_train,
    "infer": _cmd_infer,
    "report": _cmd_report,
    "heatmap": _cmd_heatmap,
    "bench": _cmd_bench,
    "selftest": _cmd_selftest,
}


def _fail(category: str, message: str, code: int) -> int:
    print(json.dumps({"error": message, "category": category}), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        return _fail("usage", str(e), 1)
    try:
        cfg = _config_from(args)
    except (ConfigError, ValidationError) as e:
        return _fail("validation", str(e), 2)
    try:
        return _COMMANDS[args.command](args, cfg)
    except (ConfigError, ValidationError) as e:
        return _fail("validation", str(e), 2)
    except UsageError as e:
        return _fail("usage", str(e), 1)
    except Exception as e:  # noqa: BLE001 - CLI boundary
        return _fail("runtime", f"{type(e).__name__}: {e}", 3)


if __name__ == "__main__":
    sys.exit(main())
