#!/usr/bin/env python3
"""Train one thermal model per room-liquid combination plus the pooled
"Both/All" row, mirroring the per-combination accuracy table.

Usage:
    python scripts/run_room_liquid_grid.py --root data/session --out runs/grid
"""

import argparse
import os
import sys
from pathlib import Path

os.environ.setdefault("TF_CPP_MIN_LOG_LEVEL", "2")
sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from spillscope.backbones import get_backbone
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


def bench_row(label, subset, out_dir, config):
    train(config, subset, out_dir)
    model = LoadedModel.load(out_dir)
    report = evaluate_accuracy(model, subset, batch=config.batch_test)
    frames = [load_png(Path(subset.root) / e.path, e.modality)
              for e in subset.only_split("test")[:8]]
    stats, _ = measure_latency(make_infer_fn(model), frames)
    return BenchmarkRow(
        label=label,
        test_accuracy=report.accuracy,
        demo_accuracy=None,
        model_size_mb=model_size_mb(out_dir / MODEL_FILENAME),
        inference_ms=stats.mean_ms,
    )


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--root", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--backbone", default="VGG19")
    parser.add_argument("--modality", default="thermal")
    parser.add_argument("--lr", type=float, default=1e-5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    manifest_path = Path(args.root) / "manifest.jsonl"
    if manifest_path.exists():
        manifest = DatasetManifest.load(manifest_path, root=args.root)
    else:
        manifest = split_manifest(build_manifest(args.root), seed=args.seed)
        manifest.save(manifest_path)

    config = TrainConfig(backbone=get_backbone(args.backbone),
                         learning_rate=args.lr, seed=args.seed)
    all_entries = select_subset(manifest, args.modality)
    combos = sorted({(e.room, e.liquid) for e in all_entries.entries})

    rows = []
    for room, liquid in combos:
        subset = select_subset(manifest, args.modality, room=room, liquid=liquid)
        label = f"{room} / {liquid}"
        print(f"== {label}: {len(subset)} images ==")
        rows.append(bench_row(label, subset,
                              Path(args.out) / f"{room}_{liquid}", config))
    print(f"== Both / All: {len(all_entries)} images ==")
    rows.append(bench_row("Both / All", all_entries, Path(args.out) / "all", config))

    doc = render_report(rows, fmt="markdown", label_header="Room / Liquid")
    out = Path(args.out) / "report.md"
    out.write_text(doc, encoding="utf-8")
    print(doc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
