"""Grayscale images, file I/O, bilinear sampling and template distortions.

Coordinates follow the pixel-center convention: pixel ``(i, j)`` (column
``i``, row ``j``) sits at continuous position ``(i, j)``, so the valid
sampling domain of a ``w x h`` image is ``[0, w-1] x [0, h-1]``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np


class ImageFormatError(ValueError):
    """Raised for malformed or unsupported image files."""


class ExtractionError(ValueError):
    """Raised when a template window leaves the scene's sampling domain."""

    def __init__(self, message, coordinate):
        super().__init__(message)
        self.coordinate = coordinate


@dataclass(frozen=True, eq=False)
class Image:
    """Immutable grayscale image with intensities in ``[0, 1]``.

    ``data`` is stored row-major as a read-only ``(height, width)`` float64
    array.
    """

    width: int
    height: int
    data: np.ndarray

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image dimensions must be >= 1, got {self.width}x{self.height}")
        arr = np.array(self.data, dtype=np.float64)
        if arr.size != self.width * self.height:
            raise ValueError(
                f"data length {arr.size} does not match {self.width}x{self.height}"
            )
        arr = arr.reshape(self.height, self.width)
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("intensities must lie in [0, 1]")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_array(cls, arr) -> "Image":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("expected a 2-D array")
        return cls(arr.shape[1], arr.shape[0], arr)

    @property
    def shape(self):
        return (self.height, self.width)

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.data, other.data)

    __hash__ = None


# --------------------------------------------------------------------------
# File I/O

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def _pgm_tokens(raw: bytes, count: int):
    """Read ``count`` whitespace-separated header tokens, skipping comments.

    Returns the tokens and the offset of the single whitespace byte that
    terminates the last one.
    """
    tokens = []
    pos = 0
    n = len(raw)
    while len(tokens) < count:
        while pos < n and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < n and raw[pos : pos + 1] == b"#":
            while pos < n and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not raw[pos : pos + 1].isspace() and raw[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated PGM header")
        tokens.append(raw[start:pos])
    if pos >= n or not raw[pos : pos + 1].isspace():
        raise ImageFormatError("PGM header must end with a single whitespace byte")
    return tokens, pos


def _parse_pgm(raw: bytes) -> Image:
    tokens, pos = _pgm_tokens(raw, 4)
    if tokens[0] != b"P5":
        raise ImageFormatError(f"unsupported PNM magic {tokens[0]!r}; only binary P5 is read")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise ImageFormatError("non-integer PGM header field") from None
    if width < 1 or height < 1:
        raise ImageFormatError(f"invalid PGM dimensions {width}x{height}")
    if maxval != 255:
        raise ImageFormatError(f"unsupported PGM maxval {maxval}; only 8-bit (255) is read")
    payload = raw[pos + 1 :]
    if len(payload) != width * height:
        raise ImageFormatError(
            f"PGM header declares {width}x{height}={width * height} bytes "
            f"but payload has {len(payload)}"
        )
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    return Image(width, height, arr / 255.0)


def _parse_png(path) -> Image:
    from PIL import Image as PILImage

    try:
        with PILImage.open(path) as im:
            im.load()
            mode = im.mode
            if mode != "L":
                raise ImageFormatError(
                    f"unsupported PNG mode {mode!r}; only 8-bit grayscale is read"
                )
            arr = np.asarray(im, dtype=np.uint8)
    except ImageFormatError:
        raise
    except Exception as exc:  # PIL raises a zoo of decoder errors
        raise ImageFormatError(f"cannot decode PNG: {exc}") from exc
    return Image(arr.shape[1], arr.shape[0], arr / 255.0)


def load_image(path) -> Image:
    """Read a binary PGM (P5, maxval 255) or 8-bit grayscale PNG file."""
    raw = Path(path).read_bytes()
    if raw.startswith(_PNG_MAGIC):
        return _parse_png(path)
    if raw[:2] in (b"P1", b"P2", b"P3", b"P4", b"P5", b"P6"):
        return _parse_pgm(raw)
    raise ImageFormatError(f"{path}: not a PGM or PNG file")


def to_bytes(img: Image) -> np.ndarray:
    return np.rint(img.data * 255.0).astype(np.uint8)


def quantize(img: Image) -> Image:
    """Round intensities to the 8-bit levels a PGM file can hold."""
    return Image(img.width, img.height, to_bytes(img) / 255.0)


def encode_pgm(img: Image, comment: str | None = None) -> bytes:
    header = b"P5\n"
    if comment:
        header += b"# " + comment.replace("\n", " ").encode("utf-8") + b"\n"
    header += f"{img.width} {img.height}\n255\n".encode("ascii")
    return header + to_bytes(img).tobytes()


def save_pgm(img: Image, path, comment: str | None = None) -> None:
    """Write ``img`` as binary P5 with one provenance comment line."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode_pgm(img, comment))
    os.replace(tmp, path)


# --------------------------------------------------------------------------
# Sampling


def _axis_weights(coords: np.ndarray, size: int):
    """Base indices, fractional offsets and in-domain mask along one axis."""
    coords = np.asarray(coords, dtype=np.float64)
    inside = (coords >= 0.0) & (coords <= size - 1)
    safe = np.where(inside, coords, 0.0)
    i0 = np.clip(np.floor(safe).astype(np.intp), 0, max(size - 2, 0))
    frac = safe - i0
    i1 = np.minimum(i0 + 1, size - 1)
    return i0, i1, frac, inside


def sample_grid(img: Image, xs, ys):
    """Bilinear samples on the separable lattice ``xs`` (columns) x ``ys`` (rows).

    Returns ``(values, inside)`` of shape ``(len(ys), len(xs))``; values at
    out-of-domain points are 0 and flagged False in ``inside``.
    """
    x0, x1, fx, xin = _axis_weights(xs, img.width)
    y0, y1, fy, yin = _axis_weights(ys, img.height)
    d = img.data
    r0 = d[y0]
    r1 = d[y1]
    top = r0[:, x0] * (1.0 - fx) + r0[:, x1] * fx
    bottom = r1[:, x0] * (1.0 - fx) + r1[:, x1] * fx
    values = top * (1.0 - fy)[:, None] + bottom * fy[:, None]
    inside = yin[:, None] & xin[None, :]
    return np.where(inside, values, 0.0), inside


def sample_bilinear(img: Image, px: float, py: float):
    """Bilinear intensity at ``(px, py)``, or None outside the valid domain."""
    values, inside = sample_grid(img, np.array([px]), np.array([py]))
    if not inside[0, 0]:
        return None
    return float(values[0, 0])


def template_lattice(width: int, height: int, x: float, y: float, s: float):
    """Scene coordinates of a ``width x height`` template posed at ``(x, y, s)``.

    Template pixel ``(u, v)`` maps to ``(x + (u - (w-1)/2) * s,
    y + (v - (h-1)/2) * s)``; the lattice is separable so only the two axes
    are returned.
    """
    xs = x + (np.arange(width) - (width - 1) / 2.0) * s
    ys = y + (np.arange(height) - (height - 1) / 2.0) * s
    return xs, ys


def extract_template(scene: Image, cx: float, cy: float, sigma_extract: float,
                     w: int, h: int) -> Image:
    """Cut a ``w x h`` template magnified by ``sigma_extract`` around ``(cx, cy)``.

    The template is the scene resampled on exactly the lattice the objective
    uses at pose ``(cx, cy, 1/sigma_extract)``, so that pose scores zero.
    """
    if sigma_extract <= 0:
        raise ValueError("sigma_extract must be positive")
    if w < 1 or h < 1:
        raise ValueError("template dimensions must be >= 1")
    xs, ys = template_lattice(w, h, cx, cy, 1.0 / sigma_extract)
    values, inside = sample_grid(scene, xs, ys)
    if not inside.all():
        v, u = np.argwhere(~inside)[0]
        coord = (float(xs[u]), float(ys[v]))
        raise ExtractionError(
            f"template sample ({coord[0]:.4f}, {coord[1]:.4f}) lies outside the "
            f"scene domain [0, {scene.width - 1}] x [0, {scene.height - 1}]",
            coord,
        )
    return Image(w, h, np.clip(values, 0.0, 1.0))


# --------------------------------------------------------------------------
# Distortions


class DistortionKind(str, Enum):
    GAUSSIAN_BLUR = "blur"
    GAUSSIAN_NOISE = "noise"


@dataclass(frozen=True)
class DistortionSpec:
    kind: DistortionKind
    sigma: float
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", DistortionKind(self.kind))
        if not self.sigma > 0:
            raise ValueError("distortion sigma must be positive")


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(math.ceil(3.0 * sigma))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def _convolve_axis(arr: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    radius = len(kernel) // 2
    n = arr.shape[axis]
    out = np.zeros_like(arr)
    base = np.arange(n)
    for offset, weight in zip(range(-radius, radius + 1), kernel):
        idx = np.clip(base + offset, 0, n - 1)
        out += weight * np.take(arr, idx, axis=axis)
    return out


def distort(img: Image, spec: DistortionSpec) -> Image:
    if spec.kind is DistortionKind.GAUSSIAN_BLUR:
        k = gaussian_kernel(spec.sigma)
        out = _convolve_axis(_convolve_axis(img.data, k, axis=1), k, axis=0)
    else:
        rng = np.random.Generator(np.random.PCG64(spec.seed))
        out = img.data + rng.normal(0.0, spec.sigma, size=img.data.shape)
    return Image(img.width, img.height, np.clip(out, 0.0, 1.0))


# --------------------------------------------------------------------------
# Built-in test scene


def synthetic_scene(size: int = 256, seed: int = 2) -> Image:
    """Deterministic multi-scale test scene.

    A low-frequency relief overlaid with Gaussian blobs of several widths
    (positions, widths and signed amplitudes drawn from a fixed-seed PCG64
    stream).  The blob cluster around the default extraction point is copied,
    attenuated, to two other places so the objective has self-similar local
    minima.  Coordinates are normalized by ``size``: smaller renders are
    resampled versions of the same scene.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    t = (np.arange(size, dtype=np.float64) + 0.5) / size
    u, v = np.meshgrid(t, t)
    z = 0.25 * np.sin(2.0 * np.pi * (1.2 * u + 0.3)) * np.cos(2.0 * np.pi * (0.8 * v - 0.1))
    blobs = []
    for _ in range(70):
        bu, bv = rng.random(2)
        width = 0.02 * 3.5 ** rng.random()
        amp = 0.6 * rng.uniform(-1.0, 1.0)
        blobs.append((bu, bv, width, amp))
    anchor = np.array([0.59, 0.59])
    motif = [b for b in blobs if np.hypot(b[0] - anchor[0], b[1] - anchor[1]) < 0.12]
    for du, dv, gain in ((-0.38, -0.30, 0.7), (0.22, -0.45, 0.6)):
        blobs.extend((bu + du, bv + dv, w, a * gain) for bu, bv, w, a in motif)
    for bu, bv, width, amp in blobs:
        z += amp * np.exp(-((u - bu) ** 2 + (v - bv) ** 2) / (2.0 * width**2))
    z = (z - z.min()) / (z.max() - z.min())
    return Image(size, size, z)
