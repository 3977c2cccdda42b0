"""Command-line entry points for the capture/align/split/train/bench/serve pipeline."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path


def _cmd_capture(args) -> int:
    from .frames import SessionMeta
    from .sources import capture_pair, open_source, save_pair

    thermal = open_source(args.thermal, "thermal")
    rgb = open_source(args.rgb, "rgb")
    meta = SessionMeta(session_id=args.session_id, room=args.room,
                       liquid=args.liquid, class_label=args.label)
    try:
        for _ in range(args.count):
            pair = capture_pair(thermal, rgb, args.max_skew_ms, session_id=args.session_id)
            t_path, r_path = save_pair(pair, meta, args.out)
            print(f"saved {t_path} + {r_path} (skew {pair.skew_ms:.1f} ms)")
    finally:
        thermal.close()
        rgb.close()
    return 0


def _cmd_calibrate(args) -> int:
    from .geometry import Calibration, CropRect, PointPair, estimate_perspective

    pairs = []
    for line in Path(args.pairs).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        sx, sy, dx, dy = (float(v) for v in line.split(","))
        pairs.append(PointPair(src=(sx, sy), dst=(dx, dy)))
    hg = estimate_perspective(pairs)
    if args.crop:
        x, y, w, h = (int(v) for v in args.crop.split(","))
        crop = CropRect(x, y, w, h)
    else:
        crop = CropRect(0, 0, 640, 360)
    Calibration(hg, crop).save(args.out)
    print(f"wrote calibration to {args.out}")
    return 0


def _cmd_fuse(args) -> int:
    from .frames import load_png
    from .geometry import Calibration, align_rgb, fuse_side_by_side

    thermal = load_png(args.thermal, "thermal")
    rgb = load_png(args.rgb, "rgb")
    calib = Calibration.load(args.calib)
    fused = fuse_side_by_side(thermal, align_rgb(rgb, calib))
    fused.save_png(args.out)
    print(f"wrote fused frame to {args.out}")
    return 0


def _cmd_split(args) -> int:
    from .dataset import SplitRatios, build_manifest, split_manifest

    manifest = build_manifest(args.root)
    if manifest.ignored:
        print(f"ignored {len(manifest.ignored)} files outside the layout:")
        for p in manifest.ignored:
            print(f"  {p}")
    ratios = SplitRatios(*(float(v) for v in args.ratios.split(",")))
    manifest = split_manifest(manifest, ratios, seed=args.seed)
    if args.paired_split:
        thermal_split = {(e.pair_index, e.class_label): e.split
                         for e in manifest.entries if e.modality == "thermal"}
        entries = tuple(
            replace(e, split=thermal_split.get((e.pair_index, e.class_label), e.split))
            if e.modality == "rgb" else e
            for e in manifest.entries
        )
        manifest = type(manifest)(root=manifest.root, entries=entries,
                                  seed=manifest.seed, ignored=manifest.ignored)
    out = Path(args.root) / "manifest.jsonl"
    manifest.save(out)
    counts = manifest.split_counts()
    print(f"wrote {out}: {counts['train']} train / {counts['val']} val / {counts['test']} test")
    return 0


def _cmd_validate(args) -> int:
    from .dataset import DatasetManifest, validate_dataset

    manifest = DatasetManifest.load(args.manifest)
    report = validate_dataset(manifest)
    print(report.summary())
    return 0 if report.balanced and not report.orphans else 1


def _cmd_subset(args) -> int:
    from .dataset import DatasetManifest, select_subset

    manifest = DatasetManifest.load(args.manifest)
    sub = select_subset(manifest, args.modality, room=args.room, liquid=args.liquid)
    sub.save(args.out)
    print(f"wrote {len(sub)} entries to {args.out}")
    return 0


def _cmd_train(args) -> int:
    from .backbones import get_backbone
    from .dataset import DatasetManifest, select_subset
    from .training import TrainConfig, train

    manifest = DatasetManifest.load(args.manifest)
    manifest = select_subset(manifest, args.modality, room=args.room, liquid=args.liquid)
    config = TrainConfig(
        backbone=get_backbone(args.backbone),
        learning_rate=args.lr,
        patience=args.patience,
        max_epochs=args.max_epochs,
        seed=args.seed,
    )
    trained, history = train(config, manifest, args.out)
    print(f"trained {trained.backbone_name}: stopped at epoch {history.stopped_epoch}, "
          f"restored epoch {history.restored_epoch}, "
          f"final val_acc {history.val_acc[-1]:.3f}")
    print(f"artifacts in {args.out}")
    return 0


def _cmd_eval(args) -> int:
    from .bench import evaluate_accuracy
    from .dataset import DatasetManifest
    from .training import LoadedModel

    model = LoadedModel.load(args.model)
    manifest = DatasetManifest.load(args.manifest)
    report = evaluate_accuracy(model, manifest, batch=args.batch)
    payload = {"accuracy": report.accuracy, "n_test": report.n_test,
               "confusion": report.confusion}
    out = Path(args.out or (Path(args.model) / "eval.json"))
    out.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(payload))
    return 0


def _cmd_bench(args) -> int:
    from .bench import make_infer_fn, measure_latency, model_size_mb, save_timing_log
    from .frames import load_png
    from .training import MODEL_FILENAME, LoadedModel

    model = LoadedModel.load(args.model)
    frame_dir = Path(args.frames)
    frames = [load_png(p, model.modality)
              for p in sorted(frame_dir.glob("*.png"))]
    stats, samples = measure_latency(make_infer_fn(model), frames,
                                     warmup=args.warmup, iterations=args.iters)
    save_timing_log(samples, Path(args.model) / "latency.csv")
    size = model_size_mb(Path(args.model) / MODEL_FILENAME)
    print(f"mean {stats.mean_ms:.1f} ms  p50 {stats.p50_ms:.1f}  p95 {stats.p95_ms:.1f}  "
          f"std {stats.std_ms:.1f}  ({stats.iterations} iters after {stats.warmup} warmup)")
    print(f"model size {size:.1f} MB  hardware: {stats.hardware_label}")
    return 0


def _cmd_report(args) -> int:
    import csv as _csv

    from .bench import BenchmarkRow, render_report

    rows = []
    with open(args.rows, newline="", encoding="utf-8") as f:
        for rec in _csv.DictReader(f):
            demo = rec.get("demo_accuracy", "")
            rows.append(BenchmarkRow(
                label=rec["label"],
                test_accuracy=float(rec["test_accuracy"]),
                demo_accuracy=float(demo) if demo not in ("", "-", None) else None,
                model_size_mb=float(rec["model_size_mb"]),
                inference_ms=float(rec["inference_ms"]),
            ))
    doc = render_report(rows, fmt=args.format, label_header=args.label_header)
    if args.out:
        Path(args.out).write_text(doc, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        print(doc, end="")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import InferenceService, ServiceConfig, create_app
    from .sources import open_source

    config = ServiceConfig(
        model_dir=args.model,
        modality=args.modality,
        session_root=args.session_root,
        calib_path=args.calib,
        listen_address=args.listen,
        max_skew_ms=args.max_skew_ms,
    )
    thermal = open_source(args.thermal, "thermal")
    rgb = open_source(args.rgb, "rgb")
    service = InferenceService(config, thermal_src=thermal, rgb_src=rgb).start()
    app = create_app(service)
    host, _, port = args.listen.partition(":")
    uvicorn.run(app, host=host, port=int(port or 8750))
    return 0


def _cmd_synth(args) -> int:
    from .dataset import validate_dataset
    from .synth import gen_dataset, hard_spec, separable_spec

    spec = separable_spec(args.seed) if args.profile == "separable" else hard_spec(args.seed)
    manifest = gen_dataset(spec, args.n, args.out)
    report = validate_dataset(manifest)
    print(f"generated {len(manifest)} images under {args.out}")
    print(report.summary())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spillscope",
        description="RGB+thermal spill detection pipeline",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("capture", help="capture paired frames into a session layout")
    p.add_argument("--thermal", required=True, help="sim:<seed> | replay:<dir> | dev:<id>")
    p.add_argument("--rgb", required=True)
    p.add_argument("--room", default="unknown")
    p.add_argument("--liquid", default="unknown")
    p.add_argument("--label", required=True, choices=["spill", "no_spill"])
    p.add_argument("--out", required=True)
    p.add_argument("--max-skew-ms", type=float, default=50.0)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--session-id", default="cli")
    p.set_defaults(fn=_cmd_capture)

    p = sub.add_parser("calibrate", help="fit a homography from a point-pair CSV")
    p.add_argument("--pairs", required=True, help="CSV: src_x,src_y,dst_x,dst_y per line")
    p.add_argument("--crop", help="x,y,w,h in warped-canvas coords (default full frame)")
    p.add_argument("--out", default="calibration.json")
    p.set_defaults(fn=_cmd_calibrate)

    p = sub.add_parser("fuse", help="fuse a thermal/RGB image pair side by side")
    p.add_argument("--thermal", required=True)
    p.add_argument("--rgb", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_fuse)

    p = sub.add_parser("split", help="index a capture root and assign 70-20-10 splits")
    p.add_argument("--root", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ratios", default="0.7,0.2,0.1")
    p.add_argument("--paired-split", action="store_true",
                   help="force RGB frames into their thermal partner's split")
    p.set_defaults(fn=_cmd_split)

    p = sub.add_parser("validate", help="report class/modality balance and orphans")
    p.add_argument("--manifest", required=True)
    p.set_defaults(fn=_cmd_validate)

    p = sub.add_parser("subset", help="select a room/liquid/modality subset")
    p.add_argument("--manifest", required=True)
    p.add_argument("--modality", required=True, choices=["thermal", "rgb", "combined"])
    p.add_argument("--room")
    p.add_argument("--liquid")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_subset)

    p = sub.add_parser("train", help="fine-tune a pretrained backbone")
    p.add_argument("--manifest", required=True)
    p.add_argument("--modality", required=True, choices=["thermal", "rgb", "combined"])
    p.add_argument("--room")
    p.add_argument("--liquid")
    p.add_argument("--backbone", default="VGG19")
    p.add_argument("--lr", type=float, default=1e-5)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--max-epochs", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="test-split accuracy and confusion matrix")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--batch", type=int, default=2)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("bench", help="single-image inference latency")
    p.add_argument("--model", required=True)
    p.add_argument("--frames", required=True)
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("--iters", type=int, default=100)
    p.set_defaults(fn=_cmd_bench)

    p = sub.add_parser("report", help="render a benchmark table")
    p.add_argument("--rows", required=True,
                   help="CSV: label,test_accuracy,demo_accuracy,model_size_mb,inference_ms")
    p.add_argument("--format", default="markdown", choices=["text", "csv", "markdown"])
    p.add_argument("--label-header", default="Label")
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_report)

    p = sub.add_parser("serve", help="run the live inference service")
    p.add_argument("--model", required=True)
    p.add_argument("--modality", required=True, choices=["thermal", "rgb", "combined"])
    p.add_argument("--listen", default="127.0.0.1:8750")
    p.add_argument("--session-root", required=True)
    p.add_argument("--calib")
    p.add_argument("--thermal", default="sim:0", help="thermal source descriptor")
    p.add_argument("--rgb", default="sim:1", help="rgb source descriptor")
    p.add_argument("--max-skew-ms", type=float, default=50.0)
    p.set_defaults(fn=_cmd_serve)

    p = sub.add_parser("synth", help="generate a synthetic paired dataset")
    p.add_argument("--profile", default="separable", choices=["separable", "hard"])
    p.add_argument("--n", type=int, default=100, help="pairs per class")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_synth)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
