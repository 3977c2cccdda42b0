"""Perspective alignment of the RGB view onto the thermal view.

The calibration for a camera rig is a 3x3 homography plus a crop
rectangle; applying both and downscaling to 256x192 registers an RGB
frame against its thermal partner, after which the two can be fused
side by side into the 512x192 combined modality.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .frames import COMBINED_SIZE, THERMAL_SIZE, Frame

ALIGNED_W, ALIGNED_H = THERMAL_SIZE


class DegenerateGeometry(ValueError):
    """Point configuration cannot determine a homography."""


@dataclass(frozen=True)
class Homography:
    """Invertible 3x3 pixel-coordinate map, normalized so h[2][2] = 1."""

    h: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h, dtype=np.float64)
        if h.shape != (3, 3):
            raise ValueError(f"homography must be 3x3, got {h.shape}")
        if abs(np.linalg.det(h)) < 1e-12:
            raise DegenerateGeometry("homography is not invertible")
        if abs(h[2, 2]) < 1e-12:
            raise DegenerateGeometry("cannot normalize: h[2][2] is zero")
        object.__setattr__(self, "h", h / h[2, 2])

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.h))

    def map_points(self, pts: np.ndarray) -> np.ndarray:
        """Apply to an (n, 2) array of (x, y) points."""
        pts = np.asarray(pts, dtype=np.float64)
        ones = np.ones((pts.shape[0], 1))
        proj = np.hstack([pts, ones]) @ self.h.T
        return proj[:, :2] / proj[:, 2:3]


@dataclass(frozen=True)
class PointPair:
    """A correspondence: src in the RGB frame, dst in the thermal frame."""

    src: tuple[float, float]
    dst: tuple[float, float]

    def __post_init__(self):
        for p in (self.src, self.dst):
            if not all(np.isfinite(p)):
                raise ValueError(f"point coordinates must be finite, got {p}")


@dataclass(frozen=True)
class CropRect:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError("crop rectangle must be at least 1x1")
        if self.x < 0 or self.y < 0:
            raise ValueError("crop origin must be non-negative")


def _normalization(pts: np.ndarray) -> np.ndarray:
    """Hartley normalization: centroid to origin, mean distance sqrt(2)."""
    centroid = pts.mean(axis=0)
    d = np.sqrt(((pts - centroid) ** 2).sum(axis=1)).mean()
    if d < 1e-12:
        raise DegenerateGeometry("all points coincide")
    s = np.sqrt(2.0) / d
    return np.array([
        [s, 0.0, -s * centroid[0]],
        [0.0, s, -s * centroid[1]],
        [0.0, 0.0, 1.0],
    ])


def _check_not_collinear(pts: np.ndarray, what: str) -> None:
    # any 3 of the first 4 points collinear -> no unique homography
    n = min(len(pts), 4)
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                a, b, c = pts[i], pts[j], pts[k]
                area2 = abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
                scale = max(np.abs(pts[:n]).max(), 1.0)
                if area2 < 1e-9 * scale * scale:
                    raise DegenerateGeometry(f"collinear {what} points {i},{j},{k}")


def estimate_perspective(pairs: list[PointPair]) -> Homography:
    """Fit a homography to >= 4 correspondences by normalized DLT.

    Exact for 4 pairs; least-squares over the normalized linear system
    for more.
    """
    if len(pairs) < 4:
        raise ValueError(f"need at least 4 point pairs, got {len(pairs)}")
    src = np.array([p.src for p in pairs], dtype=np.float64)
    dst = np.array([p.dst for p in pairs], dtype=np.float64)
    _check_not_collinear(src, "source")
    _check_not_collinear(dst, "destination")

    t_src = _normalization(src)
    t_dst = _normalization(dst)
    src_n = (np.hstack([src, np.ones((len(src), 1))]) @ t_src.T)[:, :2]
    dst_n = (np.hstack([dst, np.ones((len(dst), 1))]) @ t_dst.T)[:, :2]

    rows = []
    for (x, y), (u, v) in zip(src_n, dst_n):
        rows.append([-x, -y, -1, 0, 0, 0, u * x, u * y, u])
        rows.append([0, 0, 0, -x, -y, -1, v * x, v * y, v])
    a = np.array(rows)
    _, _, vt = np.linalg.svd(a)
    h_norm = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_dst) @ h_norm @ t_src
    if abs(h[2, 2]) < 1e-12 or abs(np.linalg.det(h)) < 1e-12:
        raise DegenerateGeometry("estimated homography is degenerate")
    return Homography(h)


def reprojection_errors(hg: Homography, pairs: list[PointPair]) -> np.ndarray:
    src = np.array([p.src for p in pairs], dtype=np.float64)
    dst = np.array([p.dst for p in pairs], dtype=np.float64)
    mapped = hg.map_points(src)
    return np.sqrt(((mapped - dst) ** 2).sum(axis=1))


def warp_frame(frame: Frame, hg: Homography, out_w: int, out_h: int) -> Frame:
    """Perspective-warp a frame onto an out_w x out_h canvas.

    Each output pixel samples the input at H^-1 (x, y) with bilinear
    interpolation; samples falling outside the input are black.
    """
    if (out_w, out_h) == (frame.width, frame.height) and np.array_equal(hg.h, np.eye(3)):
        return Frame(frame.pixels.copy(), frame.modality,
                     frame.timestamp_ms, frame.source_id)

    hinv = np.linalg.inv(hg.h)
    xs = np.arange(out_w, dtype=np.float64)
    ys = np.arange(out_h, dtype=np.float64)[:, None]
    denom = hinv[2, 0] * xs + hinv[2, 1] * ys + hinv[2, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = (hinv[0, 0] * xs + hinv[0, 1] * ys + hinv[0, 2]) / denom
        v = (hinv[1, 0] * xs + hinv[1, 1] * ys + hinv[1, 2]) / denom

    h_in, w_in = frame.pixels.shape[:2]
    valid = np.isfinite(u) & np.isfinite(v)
    valid &= (u >= 0) & (u <= w_in - 1) & (v >= 0) & (v <= h_in - 1)
    u = np.where(valid, u, 0.0).ravel()
    v = np.where(valid, v, 0.0).ravel()

    x0 = np.floor(u).astype(np.int64)
    y0 = np.floor(v).astype(np.int64)
    x1 = np.minimum(x0 + 1, w_in - 1)
    y1 = np.minimum(y0 + 1, h_in - 1)
    fx = (u - x0).astype(np.float32)[:, None]
    fy = (v - y0).astype(np.float32)[:, None]

    flat = frame.pixels.reshape(-1, 3).astype(np.float32)
    stride = w_in
    top = flat[y0 * stride + x0] * (1 - fx) + flat[y0 * stride + x1] * fx
    bot = flat[y1 * stride + x0] * (1 - fx) + flat[y1 * stride + x1] * fx
    out = top * (1 - fy) + bot * fy
    out[~valid.ravel()] = 0.0
    out = np.clip(np.rint(out), 0, 255).astype(np.uint8).reshape(out_h, out_w, 3)
    return Frame(out, frame.modality, frame.timestamp_ms, frame.source_id)


def crop_frame(frame: Frame, rect: CropRect) -> Frame:
    if rect.x + rect.w > frame.width or rect.y + rect.h > frame.height:
        raise ValueError(
            f"crop {rect} exceeds frame bounds {frame.width}x{frame.height}"
        )
    px = frame.pixels[rect.y:rect.y + rect.h, rect.x:rect.x + rect.w].copy()
    return Frame(px, frame.modality, frame.timestamp_ms, frame.source_id)


def resize_frame(frame: Frame, w: int, h: int) -> Frame:
    """Area-averaging for downscale, bilinear for upscale."""
    if w < 1 or h < 1:
        raise ValueError("target size must be at least 1x1")
    if (w, h) == (frame.width, frame.height):
        return frame
    if w <= frame.width and h <= frame.height:
        interp = cv2.INTER_AREA
    else:
        interp = cv2.INTER_LINEAR
    px = cv2.resize(frame.pixels, (w, h), interpolation=interp)
    return Frame(px, frame.modality, frame.timestamp_ms, frame.source_id)


@dataclass(frozen=True)
class Calibration:
    """Per-rig alignment: homography into the warped canvas plus a crop."""

    hg: Homography
    crop: CropRect

    def save(self, path) -> None:
        payload = {
            "h": self.hg.h.tolist(),
            "crop": {"x": self.crop.x, "y": self.crop.y,
                     "w": self.crop.w, "h": self.crop.h},
        }
        Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Calibration":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        crop = payload["crop"]
        return cls(
            hg=Homography(np.array(payload["h"], dtype=np.float64)),
            crop=CropRect(int(crop["x"]), int(crop["y"]), int(crop["w"]), int(crop["h"])),
        )

    @classmethod
    def full_frame_identity(cls, w: int = 640, h: int = 360) -> "Calibration":
        return cls(Homography.identity(), CropRect(0, 0, w, h))


def align_rgb(rgb: Frame, calib: Calibration) -> Frame:
    """Warp, crop, then downscale a raw RGB frame to the thermal view."""
    if rgb.modality != "rgb":
        raise ValueError("align_rgb expects an rgb frame")
    warped = warp_frame(rgb, calib.hg, rgb.width, rgb.height)
    cropped = crop_frame(warped, calib.crop)
    return resize_frame(cropped, ALIGNED_W, ALIGNED_H)


def fuse_side_by_side(thermal: Frame, rgb_aligned: Frame) -> Frame:
    """Concatenate thermal (left) and aligned RGB (right) into 512x192."""
    if thermal.modality != "thermal":
        raise ValueError("left half must be a thermal frame")
    if (rgb_aligned.width, rgb_aligned.height) != (ALIGNED_W, ALIGNED_H):
        raise ValueError(
            f"aligned rgb must be {ALIGNED_W}x{ALIGNED_H}, "
            f"got {rgb_aligned.width}x{rgb_aligned.height}"
        )
    px = np.concatenate([thermal.pixels, rgb_aligned.pixels], axis=1)
    assert (px.shape[1], px.shape[0]) == COMBINED_SIZE
    return Frame(px, "combined", thermal.timestamp_ms, thermal.source_id)
