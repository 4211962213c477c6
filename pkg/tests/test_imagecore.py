import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image as PILImage

from tplreg.imagecore import (
    DistortionSpec,
    ExtractionError,
    Image,
    ImageFormatError,
    distort,
    encode_pgm,
    extract_template,
    gaussian_kernel,
    load_image,
    quantize,
    sample_bilinear,
    sample_grid,
    save_pgm,
    synthetic_scene,
)
from tplreg.objective import ObjectiveConfig, Pose, penalized_error, ParameterBounds


def bilinear_oracle(arr, px, py):
    """Scalar reference: weights of the four surrounding pixel centers."""
    h, w = arr.shape
    if not (0 <= px <= w - 1 and 0 <= py <= h - 1):
        return None
    x0 = min(int(math.floor(px)), max(w - 2, 0))
    y0 = min(int(math.floor(py)), max(h - 2, 0))
    x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
    fx, fy = px - x0, py - y0
    return ((1 - fx) * (1 - fy) * arr[y0, x0] + fx * (1 - fy) * arr[y0, x1]
            + (1 - fx) * fy * arr[y1, x0] + fx * fy * arr[y1, x1])


images = st.integers(2, 7).flatmap(
    lambda w: st.integers(2, 7).flatmap(
        lambda h: st.lists(st.floats(0, 1), min_size=w * h, max_size=w * h).map(
            lambda v: Image(w, h, v))))


# Image and file I/O


def test_image_rejects_bad_data():
    with pytest.raises(ValueError):
        Image(2, 2, [0.0, 0.5, 1.0])
    with pytest.raises(ValueError):
        Image(2, 1, [0.0, 1.5])
    with pytest.raises(ValueError):
        Image(0, 1, [])


def test_image_is_read_only():
    img = Image(2, 1, [0.0, 1.0])
    with pytest.raises(ValueError):
        img.data[0, 0] = 0.5


def test_p5_normalization(tmp_path):
    path = tmp_path / "a.pgm"
    path.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64]))
    img = load_image(path)
    assert (img.width, img.height) == (2, 2)
    assert img.data.ravel().tolist() == [0.0, 1.0, 128 / 255, 64 / 255]


def test_p5_header_comment(tmp_path):
    path = tmp_path / "a.pgm"
    path.write_bytes(b"P5\n# made by hand\n2 1 # inline\n255\n" + bytes([3, 4]))
    assert load_image(path).data.ravel().tolist() == [3 / 255, 4 / 255]


def test_p5_length_mismatch(tmp_path):
    path = tmp_path / "a.pgm"
    path.write_bytes(b"P5\n4 4\n255\n" + bytes(8))
    with pytest.raises(ImageFormatError):
        load_image(path)


@pytest.mark.parametrize("raw", [b"P2\n1 1\n255\n0\n", b"P5\n1 1\n65535\n\x00\x00", b"junk"])
def test_unsupported_pgm_variants(tmp_path, raw):
    path = tmp_path / "a.pgm"
    path.write_bytes(raw)
    with pytest.raises(ImageFormatError):
        load_image(path)


def test_png_rgb_rejected(tmp_path):
    path = tmp_path / "rgb.png"
    PILImage.new("RGB", (3, 2), (10, 20, 30)).save(path)
    with pytest.raises(ImageFormatError):
        load_image(path)


def test_png_gray_loaded(tmp_path):
    path = tmp_path / "g.png"
    arr = np.array([[0, 51], [204, 255]], dtype=np.uint8)
    PILImage.fromarray(arr, mode="L").save(path)
    img = load_image(path)
    assert np.array_equal(img.data, arr / 255.0)


def test_pgm_roundtrip_and_single_comment(tmp_path):
    img = quantize(synthetic_scene(16))
    path = tmp_path / "s.pgm"
    save_pgm(img, path, comment="made\nby test")
    raw = path.read_bytes()
    header = raw[: raw.index(b"255\n") + 4]
    assert header.count(b"#") == 1
    assert load_image(path) == img
    assert encode_pgm(img) == encode_pgm(load_image(path))


# Bilinear sampling


def test_bilinear_center_is_mean():
    img = Image(2, 2, np.array([0, 1, 2, 3]) / 3.0)
    assert sample_bilinear(img, 0.5, 0.5) * 3.0 == pytest.approx(1.5, abs=1e-12)


def test_bilinear_pixel_center_exact():
    img = Image(2, 2, np.array([0, 1, 2, 3]) / 3.0)
    assert sample_bilinear(img, 1.0, 0.0) == img.data[0, 1]


def test_bilinear_out_of_bounds():
    img = Image(2, 2, np.array([0, 1, 2, 3]) / 3.0)
    assert sample_bilinear(img, -0.001, 0.5) is None
    assert sample_bilinear(img, 0.5, 1.001) is None
    assert sample_bilinear(img, 1.0, 1.0) is not None


@given(images, st.data())
@settings(max_examples=60, deadline=None)
def test_bilinear_matches_scalar_oracle(img, data):
    px = data.draw(st.floats(-0.5, img.width - 0.5))
    py = data.draw(st.floats(-0.5, img.height - 0.5))
    got = sample_bilinear(img, px, py)
    want = bilinear_oracle(img.data, px, py)
    if want is None:
        assert got is None
    else:
        assert got == pytest.approx(want, abs=1e-12)


@given(images)
@settings(max_examples=40, deadline=None)
def test_bilinear_exact_on_all_pixel_centers(img):
    xs = np.arange(img.width, dtype=float)
    ys = np.arange(img.height, dtype=float)
    values, inside = sample_grid(img, xs, ys)
    assert inside.all()
    assert np.array_equal(values, img.data)


@given(images, st.data())
@settings(max_examples=60, deadline=None)
def test_bilinear_continuity(img, data):
    px = data.draw(st.floats(0, img.width - 1))
    py = data.draw(st.floats(0, img.height - 1))
    qx = min(max(px + data.draw(st.floats(-1e-9, 1e-9)), 0.0), img.width - 1)
    qy = min(max(py + data.draw(st.floats(-1e-9, 1e-9)), 0.0), img.height - 1)
    assert abs(sample_bilinear(img, px, py) - sample_bilinear(img, qx, qy)) < 1e-6


# Template extraction


def test_extract_full_scale_ground_truth_zero():
    scene = synthetic_scene(256)
    template = extract_template(scene, 151.5, 151.5, 2.0, 170, 138)
    assert template.shape == (138, 170)
    res = penalized_error(scene, template, Pose(151.5, 151.5, 0.5), 1000.0, ParameterBounds.for_scene(scene))
    assert (res.error_p, res.error_raw, res.out_pixels) == (0.0, 0.0, 0)


def test_extract_identity_copy():
    scene = synthetic_scene(32)
    copy = extract_template(scene, 15.5, 15.5, 1.0, 32, 32)
    assert copy == scene


def test_extract_past_border():
    scene = synthetic_scene(32)
    with pytest.raises(ExtractionError) as info:
        extract_template(scene, 3.0, 15.5, 1.0, 10, 10)
    x, _ = info.value.coordinate
    assert x < 0


@given(st.floats(4, 28), st.floats(4, 28), st.floats(0.8, 3.0))
@settings(max_examples=25, deadline=None)
def test_extracted_pose_scores_zero(cx, cy, sigma):
    scene = synthetic_scene(32)
    template = extract_template(scene, cx, cy, sigma, 6, 5)
    res = penalized_error(scene, template, Pose(cx, cy, 1.0 / sigma), 1000.0,
                          ObjectiveConfig(bounds=ParameterBounds(0, 31, 0, 31, 0.1, 2.0)).bounds)
    assert res.error_p <= 1e-9


# Distortions


def test_blur_of_constant():
    img = Image(9, 7, np.full(63, 0.37))
    out = distort(img, DistortionSpec("blur", 1.7))
    assert np.max(np.abs(out.data - 0.37)) < 1e-9


def test_gaussian_kernel_shape():
    for sigma in (0.4, 1.0, 2.5):
        k = gaussian_kernel(sigma)
        assert len(k) == 2 * math.ceil(3 * sigma) + 1
        assert k.sum() == pytest.approx(1.0, abs=1e-15)
        assert np.array_equal(k, k[::-1])


def test_blur_matches_direct_convolution():
    rng = np.random.default_rng(3)
    arr = rng.random((6, 8))
    sigma = 0.8
    k = gaussian_kernel(sigma)
    r = len(k) // 2
    ref = np.zeros_like(arr)
    for y in range(6):
        for x in range(8):
            acc = 0.0
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    yy = min(max(y + dy, 0), 5)
                    xx = min(max(x + dx, 0), 7)
                    acc += k[dy + r] * k[dx + r] * arr[yy, xx]
            ref[y, x] = acc
    out = distort(Image.from_array(arr), DistortionSpec("blur", sigma))
    assert np.allclose(out.data, ref, atol=1e-12)


def test_noise_determinism():
    img = synthetic_scene(32)
    a = distort(img, DistortionSpec("noise", 0.05, seed=11))
    b = distort(img, DistortionSpec("noise", 0.05, seed=11))
    c = distort(img, DistortionSpec("noise", 0.05, seed=12))
    assert a == b
    assert a != c


def test_noise_mean_bound():
    img = Image(256, 256, np.full(256 * 256, 0.5))
    out = distort(img, DistortionSpec("noise", 0.05, seed=0))
    assert abs(out.data.mean() - 0.5) <= 4 * 0.05 / 256


@given(st.sampled_from(["blur", "noise"]), st.floats(0.1, 3.0), st.integers(0, 2**32))
@settings(max_examples=25, deadline=None)
def test_distortion_preserves_shape_and_range(kind, sigma, seed):
    img = synthetic_scene(16)
    out = distort(img, DistortionSpec(kind, sigma, seed))
    assert out.shape == img.shape
    assert out.data.min() >= 0.0 and out.data.max() <= 1.0


def test_distortion_spec_validation():
    with pytest.raises(ValueError):
        DistortionSpec("blur", 0.0)
    with pytest.raises(ValueError):
        DistortionSpec("sharpen", 1.0)


def test_synthetic_scene_deterministic():
    a, b = synthetic_scene(48), synthetic_scene(48)
    assert a == b
    assert a.data.min() == 0.0 and a.data.max() == 1.0
    assert synthetic_scene(48, seed=3) != a
