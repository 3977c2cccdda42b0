"""Accuracy, latency, and size measurement plus benchmark-table rendering."""

from __future__ import annotations

import csv
import io
import logging
import platform
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import DatasetManifest
from .frames import Frame, load_png
from .training import POSITIVE_CLASS, LoadedModel

logger = logging.getLogger(__name__)

DECISION_THRESHOLD = 0.5
REPORT_COLUMNS = ("% Test", "Demo Accuracy", "Model Size", "Inference Time")


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    n_test: int
    confusion: dict          # tp, tn, fp, fn

    def __post_init__(self):
        c = self.confusion
        if c["tp"] + c["tn"] + c["fp"] + c["fn"] != self.n_test:
            raise ValueError("confusion matrix does not sum to n_test")


@dataclass(frozen=True)
class LatencyStats:
    mean_ms: float
    std_ms: float
    p50_ms: float
    p95_ms: float
    iterations: int
    warmup: int
    hardware_label: str

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.p50_ms > self.p95_ms:
            raise ValueError("p50 cannot exceed p95")


@dataclass(frozen=True)
class BenchmarkRow:
    label: str
    test_accuracy: float
    demo_accuracy: float | None
    model_size_mb: float
    inference_ms: float

    def __post_init__(self):
        values = [self.test_accuracy, self.model_size_mb, self.inference_ms]
        if self.demo_accuracy is not None:
            values.append(self.demo_accuracy)
        if any(v < 0 for v in values):
            raise ValueError("benchmark row fields must be non-negative")


def evaluate_accuracy(model: LoadedModel, manifest: DatasetManifest,
                      batch: int = 2) -> EvalReport:
    """Score the manifest's test split at threshold 0.5."""
    entries = sorted(manifest.only_split("test"), key=lambda e: e.path)
    if not entries:
        raise ValueError("manifest has an empty test split")
    modalities = {e.modality for e in entries}
    if modalities != {model.modality}:
        raise ValueError(
            f"modality mismatch: model is {model.modality!r}, test set has {modalities}"
        )

    frames = [load_png(Path(manifest.root) / e.path, e.modality) for e in entries]
    y_true = np.array([e.class_label == POSITIVE_CLASS for e in entries])
    scores = model.score_frames(frames, batch=batch)
    y_pred = scores >= DECISION_THRESHOLD

    tp = int(np.sum(y_pred & y_true))
    tn = int(np.sum(~y_pred & ~y_true))
    fp = int(np.sum(y_pred & ~y_true))
    fn = int(np.sum(~y_pred & y_true))
    return EvalReport(
        accuracy=(tp + tn) / len(entries),
        n_test=len(entries),
        confusion={"tp": tp, "tn": tn, "fp": fp, "fn": fn},
    )


def default_hardware_label() -> str:
    cpu = platform.processor() or platform.machine()
    try:
        with open("/proc/cpuinfo") as f:
            for line in f:
                if line.lower().startswith("model name"):
                    cpu = line.split(":", 1)[1].strip()
                    break
    except OSError:
        pass
    return f"{platform.system()} {cpu}"


def make_infer_fn(model: LoadedModel):
    """Full single-image pipeline: preprocess + forward + threshold."""

    def infer(frame: Frame) -> tuple[str, float]:
        score = model.score_frame(frame)
        label = "spill" if score >= DECISION_THRESHOLD else "no_spill"
        return label, score

    return infer


def measure_latency(infer_fn, frames: list[Frame], warmup: int = 10,
                    iterations: int = 100,
                    hardware_label: str | None = None) -> tuple[LatencyStats, list[float]]:
    """Time single-image inference; warmup runs are discarded.

    Returns the stats plus the raw per-iteration log (exactly
    `iterations` entries) so the mean is independently recomputable.
    """
    if iterations < 10:
        raise ValueError("iterations must be >= 10")
    if not frames:
        raise ValueError("need at least one sample frame")
    samples: list[float] = []
    for i in range(warmup + iterations):
        frame = frames[i % len(frames)]
        t0 = time.perf_counter()
        infer_fn(frame)
        dt_ms = (time.perf_counter() - t0) * 1000.0
        if i >= warmup:
            samples.append(dt_ms)
    arr = np.array(samples)
    stats = LatencyStats(
        mean_ms=float(arr.mean()),
        std_ms=float(arr.std()),
        p50_ms=float(np.percentile(arr, 50)),
        p95_ms=float(np.percentile(arr, 95)),
        iterations=iterations,
        warmup=warmup,
        hardware_label=hardware_label or default_hardware_label(),
    )
    return stats, samples


def save_timing_log(samples: list[float], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["iteration", "ms"])
        for i, ms in enumerate(samples):
            writer.writerow([i, ms])


def model_size_mb(weights_path) -> float:
    """On-disk size in MB (10^6 bytes)."""
    p = Path(weights_path)
    if not p.exists():
        raise FileNotFoundError(f"weights file not found: {p}")
    size = p.stat().st_size
    if size == 0:
        logger.warning("weights file %s is empty", p)
    return size / 1e6


def _fmt_pct(x: float | None) -> str:
    if x is None:
        return "-"
    pct = x * 100.0
    if abs(pct - round(pct)) < 1e-9:
        return f"{int(round(pct))}%"
    return f"{pct:.2f}%"


def _fmt_cells(row: BenchmarkRow) -> list[str]:
    return [
        row.label,
        _fmt_pct(row.test_accuracy),
        _fmt_pct(row.demo_accuracy),
        f"{row.model_size_mb:.1f} MB",
        f"{int(round(row.inference_ms))} ms",
    ]


def render_report(rows: list[BenchmarkRow], fmt: str = "markdown",
                  label_header: str = "Label") -> str:
    """Benchmark table; columns are label, % Test, Demo Accuracy,
    Model Size, Inference Time. Missing demo accuracy renders as "-".
    """
    if not rows:
        raise ValueError("need at least one row")
    header = [label_header, *REPORT_COLUMNS]
    body = [_fmt_cells(r) for r in rows]

    if fmt == "markdown":
        lines = ["| " + " | ".join(header) + " |",
                 "|" + "|".join(" --- " for _ in header) + "|"]
        lines += ["| " + " | ".join(cells) + " |" for cells in body]
        return "\n".join(lines) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(header)
        writer.writerows(body)
        return buf.getvalue()
    if fmt == "text":
        widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]
        lines = ["  ".join(h.ljust(w) for h, w in zip(r, widths)).rstrip()
                 for r in [header, *body]]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")
