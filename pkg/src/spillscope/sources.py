"""Pluggable frame sources and paired capture/persistence.

Source kinds: simulated (deterministic noise under a seed), directory
replay, and live device. Descriptor grammar: ``sim:<seed>``,
``replay:<dir>``, ``dev:<id>``.
"""

from __future__ import annotations

import json
import os
import re
import time
from pathlib import Path

import numpy as np

from .frames import (
    RGB_RAW_SIZE,
    THERMAL_SIZE,
    Frame,
    FramePair,
    SessionMeta,
    load_png,
)

DEFAULT_MAX_SKEW_MS = 50.0
DEFAULT_PERIOD_MS = 100.0

_PAIR_NAME_RE = re.compile(r"^pair_(\d{6})_(thermal|rgb)\.png$")


class EndOfStream(Exception):
    """Raised when a finite source has no more frames."""


class DeviceUnavailable(Exception):
    """Raised when a live device cannot be opened."""


class SkewExceeded(Exception):
    """Raised when the two halves of a pair are too far apart in time."""


def _modality_size(modality: str) -> tuple[int, int]:
    return THERMAL_SIZE if modality == "thermal" else RGB_RAW_SIZE


class SimulatedSource:
    """Deterministic noise frames; frame i is a pure function of (seed, i)."""

    def __init__(self, seed: int, modality: str,
                 period_ms: float = DEFAULT_PERIOD_MS, start_ms: float = 0.0):
        if modality not in ("thermal", "rgb"):
            raise ValueError("simulated sources produce thermal or rgb frames")
        self.seed = int(seed)
        self.modality = modality
        self.period_ms = period_ms
        self.start_ms = start_ms
        self._index = 0

    def read(self) -> Frame:
        w, h = _modality_size(self.modality)
        rng = np.random.default_rng([self.seed, self._index])
        px = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
        ts = self.start_ms + self._index * self.period_ms
        self._index += 1
        return Frame(px, self.modality, ts, f"sim:{self.seed}")

    def close(self) -> None:
        pass


class ReplaySource:
    """Replays PNG files from a directory in lexicographic order."""

    def __init__(self, directory, modality: str,
                 period_ms: float = DEFAULT_PERIOD_MS, start_ms: float = 0.0,
                 timestamps_ms=None):
        self.directory = Path(directory)
        self.modality = modality
        self.period_ms = period_ms
        self.start_ms = start_ms
        self.timestamps_ms = list(timestamps_ms) if timestamps_ms is not None else None
        if not self.directory.is_dir():
            raise FileNotFoundError(f"replay directory not found: {self.directory}")
        self.files = sorted(p for p in self.directory.iterdir() if p.suffix.lower() == ".png")
        if not self.files:
            raise ValueError(f"replay directory has no PNG files: {self.directory}")
        self._index = 0

    def read(self) -> Frame:
        if self._index >= len(self.files):
            raise EndOfStream(f"replay source exhausted after {len(self.files)} frames")
        path = self.files[self._index]
        if self.timestamps_ms is not None:
            ts = self.timestamps_ms[self._index]
        else:
            ts = self.start_ms + self._index * self.period_ms
        self._index += 1
        return load_png(path, self.modality, ts, f"replay:{self.directory}")

    def close(self) -> None:
        pass


class DeviceSource:
    """Live camera via OpenCV. Timestamps are wall-clock ms since open."""

    def __init__(self, identifier: str, modality: str):
        import cv2

        self.modality = modality
        self.identifier = identifier
        cam_index = int(identifier) if identifier.isdigit() else identifier
        self._cap = cv2.VideoCapture(cam_index)
        if not self._cap.isOpened():
            raise DeviceUnavailable(f"cannot open device {identifier!r}")
        w, h = _modality_size(modality)
        self._cap.set(cv2.CAP_PROP_FRAME_WIDTH, w)
        self._cap.set(cv2.CAP_PROP_FRAME_HEIGHT, h)
        self._t0 = time.monotonic()

    def read(self) -> Frame:
        import cv2

        ok, bgr = self._cap.read()
        if not ok:
            raise EndOfStream(f"device {self.identifier!r} stopped producing frames")
        w, h = _modality_size(self.modality)
        if (bgr.shape[1], bgr.shape[0]) != (w, h):
            bgr = cv2.resize(bgr, (w, h), interpolation=cv2.INTER_AREA)
        ts = (time.monotonic() - self._t0) * 1000.0
        return Frame(bgr[:, :, ::-1].copy(), self.modality, ts, f"dev:{self.identifier}")

    def close(self) -> None:
        self._cap.release()


def parse_descriptor(text: str) -> tuple[str, str]:
    kind, _, arg = text.partition(":")
    if kind not in ("sim", "replay", "dev") or not arg:
        raise ValueError(f"bad source descriptor {text!r} (want sim:<seed>, replay:<dir>, dev:<id>)")
    return kind, arg


def open_source(descriptor: str, modality: str):
    """Open a source from its descriptor string."""
    kind, arg = parse_descriptor(descriptor)
    if kind == "sim":
        return SimulatedSource(int(arg), modality)
    if kind == "replay":
        return ReplaySource(arg, modality)
    return DeviceSource(arg, modality)


def capture_pair(thermal_src, rgb_src, max_skew_ms: float = DEFAULT_MAX_SKEW_MS,
                 session_id: str = "") -> FramePair:
    """Read one frame from each source back-to-back and pair them."""
    if max_skew_ms <= 0:
        raise ValueError("max_skew_ms must be > 0")
    thermal = thermal_src.read()
    rgb = rgb_src.read()
    skew = abs(thermal.timestamp_ms - rgb.timestamp_ms)
    if skew > max_skew_ms:
        raise SkewExceeded(f"frame skew {skew:.1f} ms exceeds max {max_skew_ms:.1f} ms")
    return FramePair(thermal=thermal, rgb=rgb, skew_ms=skew, session_id=session_id)


def next_pair_index(root) -> int:
    """Next free pair index under a capture root (global across classes)."""
    root = Path(root)
    highest = 0
    for modality in ("thermal", "rgb"):
        for label in ("spill", "no_spill"):
            d = root / modality / label
            if not d.is_dir():
                continue
            for p in d.iterdir():
                m = _PAIR_NAME_RE.match(p.name)
                if m:
                    highest = max(highest, int(m.group(1)))
    return highest + 1


def save_pair(pair: FramePair, meta: SessionMeta, root) -> tuple[Path, Path]:
    """Persist both halves of a pair under root/<modality>/<class>/.

    Writes are atomic as a unit: both files appear (tmp + rename) or,
    on any failure, neither does.
    """
    root = Path(root)
    index = next_pair_index(root)
    paths = {}
    for modality in ("thermal", "rgb"):
        d = root / modality / meta.class_label
        d.mkdir(parents=True, exist_ok=True)
        final = d / f"pair_{index:06d}_{modality}.png"
        if final.exists():
            raise FileExistsError(f"pair index collision at {final}")
        paths[modality] = final

    tmp_paths = {}
    try:
        for modality, frame in (("thermal", pair.thermal), ("rgb", pair.rgb)):
            tmp = paths[modality].with_suffix(".png.tmp")
            frame.save_png(tmp)
            tmp_paths[modality] = tmp
        for modality in ("thermal", "rgb"):
            os.replace(tmp_paths[modality], paths[modality])
    except OSError:
        for tmp in tmp_paths.values():
            try:
                tmp.unlink(missing_ok=True)
            except OSError:
                pass
        for final in paths.values():
            try:
                final.unlink(missing_ok=True)
            except OSError:
                pass
        raise

    record = {
        "index": index,
        "session_id": meta.session_id,
        "room": meta.room,
        "liquid": meta.liquid,
        "class_label": meta.class_label,
        "skew_ms": pair.skew_ms,
    }
    with open(root / "meta.jsonl", "a", encoding="utf-8") as f:
        f.write(json.dumps(record) + "\n")

    return paths["thermal"], paths["rgb"]


def read_meta_sidecar(root) -> dict[int, dict]:
    """Index -> capture metadata from root/meta.jsonl, if present."""
    path = Path(root) / "meta.jsonl"
    table: dict[int, dict] = {}
    if not path.exists():
        return table
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                rec = json.loads(line)
                table[int(rec["index"])] = rec
    return table
