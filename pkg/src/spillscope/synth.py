"""Synthetic paired datasets with known labels.

Thermal no-spill frames are near-uniform noise; spills add a soft-edged
elliptical offset, so the class signal is a local break in thermal
homogeneity. The generator's own labels (and masks) are the oracle the
acceptance tests score models against.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .dataset import DatasetManifest, build_manifest
from .frames import RGB_RAW_SIZE, THERMAL_SIZE, Frame, FramePair, SessionMeta
from .sources import save_pair

EDGE_RAMP_PX = 3.0


@dataclass(frozen=True)
class SynthSpec:
    background_mean: float = 120.0
    background_noise_sigma: float = 5.0
    blob_delta: float = 60.0
    blob_radius_px: tuple[float, float] = (8.0, 60.0)
    rgb_texture: str = "tile"
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.background_mean <= 255:
            raise ValueError("background_mean must be in [0, 255]")
        if self.rgb_texture not in ("tile", "concrete"):
            raise ValueError("rgb_texture must be 'tile' or 'concrete'")
        lo, hi = self.blob_radius_px
        if not (0 < lo <= hi):
            raise ValueError("blob_radius_px must be an increasing positive range")

    @property
    def separable(self) -> bool:
        return abs(self.blob_delta) >= 3 * self.background_noise_sigma


def separable_spec(seed: int = 0) -> SynthSpec:
    """Profile whose spill contrast dwarfs the noise; acceptance oracle."""
    return SynthSpec(background_mean=120, background_noise_sigma=5,
                     blob_delta=60, blob_radius_px=(20, 55), seed=seed)


def hard_spec(seed: int = 0) -> SynthSpec:
    """Near-noise contrast, for exercising imperfect-accuracy paths."""
    return SynthSpec(background_mean=120, background_noise_sigma=8,
                     blob_delta=10, blob_radius_px=(8, 24), seed=seed)


def _thermal_background(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    w, h = THERMAL_SIZE
    field_ = rng.normal(spec.background_mean, spec.background_noise_sigma, size=(h, w))
    gray = np.clip(np.rint(field_), 0, 255).astype(np.uint8)
    return np.repeat(gray[:, :, None], 3, axis=2)


def _rgb_floor(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    w, h = RGB_RAW_SIZE
    base = rng.normal(150, 6, size=(h, w))
    if spec.rgb_texture == "tile":
        ys, xs = np.mgrid[0:h, 0:w]
        grout = ((xs % 64 < 2) | (ys % 64 < 2))
        base[grout] -= 35
    else:
        blur = cv2.GaussianBlur(rng.normal(0, 25, size=(h, w)).astype(np.float32), (0, 0), 9)
        base += blur
    gray = np.clip(np.rint(base), 0, 255).astype(np.uint8)
    return np.repeat(gray[:, :, None], 3, axis=2)


def gen_no_spill(spec: SynthSpec, rng: np.random.Generator) -> FramePair:
    thermal = Frame(_thermal_background(spec, rng), "thermal", 0.0, "synth")
    rgb = Frame(_rgb_floor(spec, rng), "rgb", 0.0, "synth")
    return FramePair(thermal=thermal, rgb=rgb, skew_ms=0.0, session_id="synth")


def _blob_weights(shape_hw: tuple[int, int], cx: float, cy: float,
                  rx: float, ry: float, theta: float) -> np.ndarray:
    """Per-pixel blob intensity in [0, 1] with a linear edge ramp."""
    h, w = shape_hw
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    dx, dy = xs - cx, ys - cy
    ct, st = np.cos(theta), np.sin(theta)
    xr = dx * ct + dy * st
    yr = -dx * st + dy * ct
    d = np.sqrt((xr / rx) ** 2 + (yr / ry) ** 2)   # 1.0 at the ellipse boundary
    inside_px = (1.0 - d) * min(rx, ry)            # approx px to the boundary
    return np.clip(inside_px / EDGE_RAMP_PX, 0.0, 1.0)


def gen_spill(spec: SynthSpec, rng: np.random.Generator) -> tuple[FramePair, np.ndarray]:
    """A spill pair plus its ground-truth mask (thermal geometry).

    The mask marks pixels at >= half blob intensity. If the sampled
    ellipse does not fit the frame it is clipped and flagged via the
    returned pair's source_id suffix.
    """
    w, h = THERMAL_SIZE
    lo, hi = spec.blob_radius_px
    rx = rng.uniform(lo, hi)
    ry = rx * rng.uniform(0.6, 1.0)
    theta = rng.uniform(0, np.pi)
    r_max = max(rx, ry)
    clipped = r_max * 2 >= min(w, h) / 2
    cx = rng.uniform(r_max, w - r_max) if not clipped else w / 2
    cy = rng.uniform(r_max, h - r_max) if not clipped else h / 2

    weights = _blob_weights((h, w), cx, cy, rx, ry, theta)
    mask = weights >= 0.5

    thermal_px = _thermal_background(spec, rng).astype(np.float64)
    thermal_px += spec.blob_delta * weights[:, :, None]
    thermal_px = np.clip(np.rint(thermal_px), 0, 255).astype(np.uint8)

    rgb_px = _rgb_floor(spec, rng).astype(np.float64)
    rw, rh = RGB_RAW_SIZE
    sx, sy = rw / w, rh / h
    rgb_weights = _blob_weights((rh, rw), cx * sx, cy * sy, rx * sx, ry * sy, theta)
    rgb_px *= 1.0 - 0.15 * rgb_weights[:, :, None]
    rgb_px = np.clip(np.rint(rgb_px), 0, 255).astype(np.uint8)

    source_id = "synth-clipped" if clipped else "synth"
    pair = FramePair(
        thermal=Frame(thermal_px, "thermal", 0.0, source_id),
        rgb=Frame(rgb_px, "rgb", 0.0, source_id),
        skew_ms=0.0,
        session_id="synth",
    )
    return pair, mask


def pair_rng(seed: int, index: int) -> np.random.Generator:
    """Independent per-index stream so generation order never matters."""
    return np.random.default_rng([seed, index])


def gen_dataset(spec: SynthSpec, n_per_class: int, out_root,
                room: str = "synthlab", liquid: str = "water") -> DatasetManifest:
    """Write n_per_class pairs of each class in the capture layout."""
    if n_per_class < 2:
        raise ValueError("need at least 2 pairs per class")
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    for i in range(n_per_class):
        pair = gen_no_spill(spec, pair_rng(spec.seed, 2 * i))
        meta = SessionMeta(session_id=f"synth{spec.seed}", room=room,
                           liquid=liquid, class_label="no_spill")
        save_pair(pair, meta, out_root)
        pair, _ = gen_spill(spec, pair_rng(spec.seed, 2 * i + 1))
        meta = SessionMeta(session_id=f"synth{spec.seed}", room=room,
                           liquid=liquid, class_label="spill")
        save_pair(pair, meta, out_root)
    return build_manifest(out_root)
