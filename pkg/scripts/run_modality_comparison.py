#!/usr/bin/env python3
"""Train one backbone per modality on a captured dataset and render the
accuracy/size/latency comparison table.

Usage:
    python scripts/run_modality_comparison.py --root data/session --out runs/modality
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
    save_timing_log,
)
from spillscope.dataset import DatasetManifest, build_manifest, select_subset, split_manifest
from spillscope.frames import load_png
from spillscope.training import MODEL_FILENAME, LoadedModel, TrainConfig, train


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--root", required=True, help="capture root (frame layout)")
    parser.add_argument("--out", required=True)
    parser.add_argument("--backbone", default="VGG19")
    parser.add_argument("--modalities", default="thermal,rgb,combined")
    parser.add_argument("--lr", type=float, default=1e-5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    manifest_path = Path(args.root) / "manifest.jsonl"
    if manifest_path.exists():
        manifest = DatasetManifest.load(manifest_path, root=args.root)
    else:
        manifest = split_manifest(build_manifest(args.root), seed=args.seed)
        manifest.save(manifest_path)

    rows = []
    for modality in args.modalities.split(","):
        subset = select_subset(manifest, modality)
        out_dir = Path(args.out) / modality
        config = TrainConfig(backbone=get_backbone(args.backbone),
                             learning_rate=args.lr, seed=args.seed)
        print(f"== training {args.backbone} on {modality} "
              f"({subset.split_counts()}) ==")
        train(config, subset, out_dir)

        model = LoadedModel.load(out_dir)
        report = evaluate_accuracy(model, subset, batch=config.batch_test)
        sample_entries = subset.only_split("test")[:8]
        frames = [load_png(Path(subset.root) / e.path, e.modality)
                  for e in sample_entries]
        stats, samples = measure_latency(make_infer_fn(model), frames)
        save_timing_log(samples, out_dir / "latency.csv")
        rows.append(BenchmarkRow(
            label=modality.capitalize(),
            test_accuracy=report.accuracy,
            demo_accuracy=None,     # filled by a live session's verdict log
            model_size_mb=model_size_mb(out_dir / MODEL_FILENAME),
            inference_ms=stats.mean_ms,
        ))

    doc = render_report(rows, fmt="markdown", label_header="Image Type")
    out = Path(args.out) / "report.md"
    out.write_text(doc, encoding="utf-8")
    print(doc)
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
