#!/usr/bin/env python3
"""Train every registry backbone with cached weights on one modality and
tabulate accuracy; size/latency are filled in only for the shortlisted
models (pass --bench to measure them all).

Usage:
    python scripts/run_backbone_sweep.py --root data/session --out runs/sweep
"""

import argparse
import os
import sys
from pathlib import Path

os.environ.setdefault("TF_CPP_MIN_LOG_LEVEL", "2")
sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from spillscope.backbones import list_backbones, weights_cached
from spillscope.bench import (
    BenchmarkRow,
    evaluate_accuracy,
    make_infer_fn,
    measure_latency,
    model_size_mb,
    render_report,
)
from spillscope.dataset import DatasetManifest, build_manifest, select_subset, split_manifest
from spillscope.frames import load_png
from spillscope.training import MODEL_FILENAME, LoadedModel, TrainConfig, train


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--root", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--modality", default="thermal")
    parser.add_argument("--lr", type=float, default=1e-5)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--bench", action="store_true",
                        help="measure size/latency for every backbone")
    args = parser.parse_args()

    manifest_path = Path(args.root) / "manifest.jsonl"
    if manifest_path.exists():
        manifest = DatasetManifest.load(manifest_path, root=args.root)
    else:
        manifest = split_manifest(build_manifest(args.root), seed=args.seed)
        manifest.save(manifest_path)
    subset = select_subset(manifest, args.modality)

    rows = []
    for spec in list_backbones():
        if not weights_cached(spec):
            print(f"-- skipping {spec.name}: pretrained weights not cached")
            continue
        out_dir = Path(args.out) / spec.name
        config = TrainConfig(backbone=spec, learning_rate=args.lr, seed=args.seed)
        print(f"== {spec.name} ==")
        train(config, subset, out_dir)
        model = LoadedModel.load(out_dir)
        report = evaluate_accuracy(model, subset, batch=config.batch_test)
        if args.bench:
            frames = [load_png(Path(subset.root) / e.path, e.modality)
                      for e in subset.only_split("test")[:8]]
            stats, _ = measure_latency(make_infer_fn(model), frames)
            size, ms = model_size_mb(out_dir / MODEL_FILENAME), stats.mean_ms
        else:
            size, ms = 0.0, 0.0
        rows.append(BenchmarkRow(
            label=spec.name,
            test_accuracy=report.accuracy,
            demo_accuracy=None,
            model_size_mb=size,
            inference_ms=ms,
        ))

    doc = render_report(rows, fmt="markdown", label_header="Model")
    out = Path(args.out) / "report.md"
    out.write_text(doc, encoding="utf-8")
    print(doc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
