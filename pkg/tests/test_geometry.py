import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spillscope.frames import Frame
from spillscope.geometry import (
    Calibration,
    CropRect,
    DegenerateGeometry,
    Homography,
    PointPair,
    align_rgb,
    crop_frame,
    estimate_perspective,
    fuse_side_by_side,
    reprojection_errors,
    resize_frame,
    warp_frame,
)

CORNERS = [(20.0, 20.0), (600.0, 30.0), (610.0, 340.0), (30.0, 350.0)]


def pairs_through(h: Homography, src_pts):
    dst = h.map_points(np.array(src_pts))
    return [PointPair(tuple(s), tuple(d)) for s, d in zip(src_pts, dst)]


def random_invertible_h(rng) -> Homography:
    while True:
        m = np.eye(3)
        m[0, 0], m[1, 1] = rng.uniform(0.8, 1.2, 2)
        m[0, 1], m[1, 0] = rng.uniform(-0.2, 0.2, 2)
        m[0, 2], m[1, 2] = rng.uniform(-30, 30, 2)
        m[2, 0], m[2, 1] = rng.uniform(-1e-4, 1e-4, 2)
        if abs(np.linalg.det(m)) > 1e-3:
            return Homography(m)


def test_identity_correspondence_gives_identity():
    pairs = [PointPair(p, p) for p in [(0, 0), (100, 0), (100, 100), (0, 100)]]
    h = estimate_perspective(pairs)
    assert np.allclose(h.h, np.eye(3), atol=1e-9)


def test_translation_recovered_within_1e6():
    h0 = Homography(np.array([[1, 0, 10], [0, 1, 5], [0, 0, 1]], dtype=float))
    h = estimate_perspective(pairs_through(h0, CORNERS))
    assert np.linalg.norm(h.h - h0.h) < 1e-6


def test_noiseless_random_recovery():
    rng = np.random.default_rng(42)
    for _ in range(25):
        h0 = random_invertible_h(rng)
        h = estimate_perspective(pairs_through(h0, CORNERS))
        assert np.linalg.norm(h.h - h0.h) < 1e-6


def test_noisy_overdetermined_mean_reprojection_under_1px():
    rng = np.random.default_rng(7)
    errors = []
    for _ in range(100):
        h0 = random_invertible_h(rng)
        src = np.column_stack([rng.uniform(0, 640, 12), rng.uniform(0, 360, 12)])
        dst = h0.map_points(src) + rng.normal(0, 0.5, (12, 2))
        pairs = [PointPair(tuple(s), tuple(d)) for s, d in zip(src, dst)]
        h = estimate_perspective(pairs)
        errors.append(reprojection_errors(h, pairs).mean())
    assert np.mean(errors) < 1.0


def test_degenerate_inputs_rejected():
    with pytest.raises(ValueError):
        estimate_perspective([PointPair((0, 0), (0, 0))] * 3)
    collinear = [(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (5.0, 0.0)]
    with pytest.raises(DegenerateGeometry):
        estimate_perspective([PointPair(p, p) for p in collinear])


def test_homography_type_invariants():
    with pytest.raises(DegenerateGeometry):
        Homography(np.zeros((3, 3)))
    h = Homography(np.diag([2.0, 2.0, 2.0]))
    assert h.h[2, 2] == 1.0    # stored normalized


@settings(max_examples=30, deadline=None)
@given(st.floats(min_value=0.1, max_value=10.0))
def test_estimation_scale_invariance(scale):
    rng = np.random.default_rng(99)
    h0 = random_invertible_h(rng)
    base_pairs = pairs_through(h0, CORNERS)
    h_base = estimate_perspective(base_pairs)
    scaled_pairs = [
        PointPair((p.src[0] * scale, p.src[1] * scale),
                  (p.dst[0] * scale, p.dst[1] * scale))
        for p in base_pairs
    ]
    h_scaled = estimate_perspective(scaled_pairs)
    probes = np.array([(50.0, 50.0), (300.0, 200.0), (500.0, 100.0)])
    expect = h_base.map_points(probes) * scale
    got = h_scaled.map_points(probes * scale)
    assert np.allclose(got, expect, atol=1e-6 * max(1.0, scale * 640))


def smooth_frame(w=64, h=64) -> Frame:
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    g = 100 + 60 * np.sin(xs / 17) + 50 * np.cos(ys / 13)
    px = np.clip(np.rint(np.stack([g, g * 0.8, 255 - g], axis=2)), 0, 255).astype(np.uint8)
    return Frame(px, "rgb")


def test_warp_identity_is_byte_identical(rgb_frame):
    out = warp_frame(rgb_frame, Homography.identity(), rgb_frame.width, rgb_frame.height)
    assert np.array_equal(out.pixels, rgb_frame.pixels)


def test_warp_pure_translation_moves_single_pixel():
    px = np.zeros((32, 32, 3), dtype=np.uint8)
    px[5, 5] = 255
    frame = Frame(px, "rgb")
    h = Homography(np.array([[1, 0, 8], [0, 1, 0], [0, 0, 1]], dtype=float))
    out = warp_frame(frame, h, 32, 32)
    assert tuple(out.pixels[5, 13]) == (255, 255, 255)
    out.pixels[5, 13] = 0
    assert out.pixels.sum() == 0


def test_warp_out_of_bounds_is_black(rgb_frame):
    h = Homography(np.array([[1, 0, 10000], [0, 1, 10000], [0, 0, 1]], dtype=float))
    out = warp_frame(rgb_frame, h, 64, 64)
    assert out.pixels.sum() == 0


@pytest.mark.parametrize("h", [
    np.array([[1, 0, 3.3], [0, 1, 1.7], [0, 0, 1]]),
    np.array([[np.cos(0.03), -np.sin(0.03), 2.0],
              [np.sin(0.03), np.cos(0.03), -1.5],
              [0, 0, 1]]),
])
def test_warp_round_trip_interior(h):
    # smooth content: the <=2 tolerance is an interpolation bound, not
    # a reconstruction guarantee for arbitrary high-frequency noise
    frame = smooth_frame()
    hg = Homography(h)
    back = warp_frame(warp_frame(frame, hg, 64, 64), hg.inverse(), 64, 64)
    xs, ys = np.meshgrid(np.arange(64), np.arange(64))
    pts = np.column_stack([xs.ravel(), ys.ravel()]).astype(float)
    fwd = hg.map_points(pts)
    interior = ((pts >= 2).all(axis=1) & (pts[:, 0] <= 61) & (pts[:, 1] <= 61)
                & (fwd >= 2).all(axis=1) & (fwd[:, 0] <= 61) & (fwd[:, 1] <= 61))
    diff = np.abs(back.pixels.astype(int) - frame.pixels.astype(int)).max(axis=2).ravel()
    assert diff[interior].max() <= 2


def test_crop_full_frame_is_identity(rgb_frame):
    out = crop_frame(rgb_frame, CropRect(0, 0, rgb_frame.width, rgb_frame.height))
    assert np.array_equal(out.pixels, rgb_frame.pixels)


def test_crop_out_of_bounds_rejected(rgb_frame):
    with pytest.raises(ValueError):
        crop_frame(rgb_frame, CropRect(600, 300, 100, 100))


def test_resize_to_thermal_dims(rgb_frame):
    out = resize_frame(rgb_frame, 256, 192)
    assert (out.width, out.height) == (256, 192)


def test_resize_area_average_checker():
    px = np.zeros((2, 2, 3), dtype=np.uint8)
    px[0, 0] = px[1, 1] = 255
    out = resize_frame(Frame(px, "rgb"), 1, 1)
    assert abs(int(out.pixels[0, 0, 0]) - 127) <= 1


def test_align_identity_equals_plain_resize(rgb_frame):
    calib = Calibration.full_frame_identity()
    out = align_rgb(rgb_frame, calib)
    assert np.array_equal(out.pixels, resize_frame(rgb_frame, 256, 192).pixels)


def test_calibration_round_trip_bit_identical(tmp_path, rgb_frame):
    h = Homography(np.array([[1.01, 0.003, -4.2], [0.001, 0.99, 2.7],
                             [1e-5, -2e-5, 1]]))
    calib = Calibration(h, CropRect(10, 8, 600, 330))
    path = tmp_path / "calib.json"
    calib.save(path)
    reloaded = Calibration.load(path)
    a = align_rgb(rgb_frame, calib)
    b = align_rgb(rgb_frame, reloaded)
    assert np.array_equal(a.pixels, b.pixels)


def _blob_centroid(px: np.ndarray) -> tuple[float, float]:
    mask = px[:, :, 0] > 128
    ys, xs = np.nonzero(mask)
    return xs.mean(), ys.mean()


def test_alignment_corrects_known_translation():
    # marker at thermal (128, 96); rgb sees the same scene at 2.5x/1.875x
    # scale but shifted by (12, -8); calibration undoes the shift
    rgb_px = np.zeros((360, 640, 3), dtype=np.uint8)
    ys, xs = np.mgrid[0:360, 0:640]
    rgb_px[(xs - (320 + 12)) ** 2 + (ys - (180 - 8)) ** 2 <= 15 ** 2] = 255
    rgb = Frame(rgb_px, "rgb")
    calib = Calibration(
        Homography(np.array([[1, 0, -12], [0, 1, 8], [0, 0, 1]], dtype=float)),
        CropRect(0, 0, 640, 360),
    )
    aligned = align_rgb(rgb, calib)
    cx, cy = _blob_centroid(aligned.pixels)
    assert abs(cx - 128) <= 2
    assert abs(cy - 96) <= 2


def test_fuse_dims_and_halves(thermal_frame, rng):
    aligned = Frame(rng.integers(0, 256, (192, 256, 3), dtype=np.uint8), "rgb")
    fused = fuse_side_by_side(thermal_frame, aligned)
    assert (fused.width, fused.height) == (512, 192)
    assert fused.modality == "combined"
    assert np.array_equal(fused.pixels[:, :256], thermal_frame.pixels)
    assert np.array_equal(fused.pixels[:, 256:], aligned.pixels)


def test_fuse_black_white_blocks():
    thermal = Frame(np.zeros((192, 256, 3), dtype=np.uint8), "thermal")
    white = Frame(np.full((192, 256, 3), 255, dtype=np.uint8), "rgb")
    fused = fuse_side_by_side(thermal, white)
    assert fused.pixels[:, :256].max() == 0
    assert fused.pixels[:, 256:].min() == 255


def test_fuse_rejects_dimension_mismatch(thermal_frame, rgb_frame):
    with pytest.raises(ValueError):
        fuse_side_by_side(thermal_frame, rgb_frame)   # raw 640x360 right half
