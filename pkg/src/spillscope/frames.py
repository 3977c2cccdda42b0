"""Frame and frame-pair types shared by the whole pipeline."""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np
from PIL import Image

THERMAL_SIZE = (256, 192)   # (w, h)
RGB_RAW_SIZE = (640, 360)
COMBINED_SIZE = (512, 192)

MODALITIES = ("thermal", "rgb", "combined")
CLASS_LABELS = ("spill", "no_spill")

_SESSION_ID_RE = re.compile(r"^[A-Za-z0-9_-]+$")


@dataclass(frozen=True)
class Frame:
    """One image plus capture metadata.

    pixels is always a (h, w, 3) uint8 array. Thermal frames are the
    color-mapped 3-channel output of the camera, not radiometric data.
    """

    pixels: np.ndarray
    modality: str
    timestamp_ms: float = 0.0
    source_id: str = ""

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"pixels must be (h, w, 3), got {px.shape}")
        if px.dtype != np.uint8:
            raise ValueError(f"pixels must be uint8, got {px.dtype}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("frame must be at least 1x1")
        if self.modality not in MODALITIES:
            raise ValueError(f"unknown modality {self.modality!r}")
        if self.modality == "thermal" and (self.width, self.height) != THERMAL_SIZE:
            raise ValueError(
                f"thermal frames are {THERMAL_SIZE}, got {(self.width, self.height)}"
            )
        if self.modality == "combined" and (self.width, self.height) != COMBINED_SIZE:
            raise ValueError(
                f"combined frames are {COMBINED_SIZE}, got {(self.width, self.height)}"
            )
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def save_png(self, path) -> None:
        Image.fromarray(self.pixels, mode="RGB").save(path, format="PNG")


def load_png(path, modality: str, timestamp_ms: float = 0.0, source_id: str = "") -> Frame:
    with Image.open(path) as im:
        px = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return Frame(px, modality, timestamp_ms, source_id)


@dataclass(frozen=True)
class FramePair:
    """A thermal frame and an RGB frame captured near-simultaneously."""

    thermal: Frame
    rgb: Frame
    skew_ms: float
    session_id: str = ""

    def __post_init__(self):
        if self.thermal.modality != "thermal":
            raise ValueError("pair.thermal must have thermal modality")
        if self.rgb.modality != "rgb":
            raise ValueError("pair.rgb must have rgb modality")
        if self.skew_ms < 0:
            raise ValueError("skew_ms must be >= 0")


@dataclass(frozen=True)
class SessionMeta:
    """Where and what a capture session recorded."""

    session_id: str
    room: str = "unknown"
    liquid: str = "unknown"
    class_label: str = "no_spill"

    def __post_init__(self):
        if not self.session_id or not _SESSION_ID_RE.match(self.session_id):
            raise ValueError(
                f"session_id must be non-empty and filesystem-safe, got {self.session_id!r}"
            )
        if self.class_label not in CLASS_LABELS:
            raise ValueError(f"class_label must be one of {CLASS_LABELS}")
