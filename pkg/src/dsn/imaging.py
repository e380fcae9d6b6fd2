"""Image I/O, luminance conversion, and quality metrics.

Images are 8-bit numpy rasters; the evaluation protocol used throughout the
package converts to the luminance channel (BT.601 studio swing, the
convention the super-resolution literature measures against) and crops a
border of ``scale`` pixels before computing PSNR/SSIM.

PNG files are read through Pillow; the PGM P5 container used by the
compression pipeline is written byte-exactly by hand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage
from scipy.signal import convolve2d

from .autodiff import Tensor
from .errors import DataError, FormatError, ShapeError

__all__ = [
    "Image",
    "read_png",
    "read_image",
    "read_pgm",
    "write_pgm",
    "write_png",
    "encode_pgm",
    "decode_pgm",
    "rgb_to_y",
    "psnr",
    "ssim",
    "to_tensor",
    "to_image",
    "center_crop_to_multiple",
]


@dataclass
class Image:
    """8-bit raster: ``data`` is (h, w) grayscale or (h, w, 3) interleaved RGB."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.dtype != np.uint8:
            raise ShapeError(f"image samples must be uint8, got {arr.dtype}")
        if arr.ndim == 3 and arr.shape[2] == 1:
            arr = arr[:, :, 0]
        if arr.ndim not in (2, 3) or (arr.ndim == 3 and arr.shape[2] != 3):
            raise ShapeError(f"image must be (h, w) or (h, w, 3), got {arr.shape}")
        self.data = arr

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else 3


# -- file I/O --------------------------------------------------------------------


def read_png(path) -> Image:
    """Read an 8-bit PNG (grayscale or RGB; palette/alpha are flattened to RGB)."""
    try:
        with PILImage.open(path) as img:
            if img.mode == "L":
                return Image(np.asarray(img))
            if img.mode not in ("RGB",):
                img = img.convert("RGB")
            return Image(np.asarray(img))
    except FileNotFoundError:
        raise
    except (OSError, ValueError) as e:
        raise FormatError(f"{path}: unreadable image: {e}") from e


def read_image(path) -> Image:
    """Dispatch on extension: .pgm goes through the strict P5 parser."""
    if str(path).lower().endswith(".pgm"):
        return read_pgm(path)
    return read_png(path)


def encode_pgm(img: Image) -> bytes:
    """Serialize a grayscale image as binary PGM, header byte-exact."""
    if img.channels != 1:
        raise ShapeError("PGM holds a single channel; convert to luminance first")
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.data.tobytes()


def decode_pgm(blob: bytes) -> Image:
    tokens = []
    pos = 0

    def next_token():
        nonlocal pos
        while pos < len(blob):
            c = blob[pos:pos + 1]
            if c == b"#":
                while pos < len(blob) and blob[pos:pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            elif c.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("PGM: truncated header")
        return blob[start:pos]

    magic = next_token()
    if magic != b"P5":
        raise FormatError(f"PGM: bad magic {magic!r}, expected b'P5'")
    try:
        width = int(next_token())
        height = int(next_token())
        maxval = int(next_token())
    except ValueError as e:
        raise FormatError(f"PGM: non-numeric header field: {e}") from e
    if width < 1 or height < 1:
        raise FormatError(f"PGM: bad dimensions {width}x{height}")
    if maxval != 255:
        raise FormatError(f"PGM: unsupported maxval {maxval}, only 255 is handled")
    pos += 1  # single whitespace byte after maxval
    payload = blob[pos:pos + width * height]
    if len(payload) != width * height:
        raise FormatError(f"PGM: payload holds {len(payload)} bytes, header promises {width * height}")
    return Image(np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy())


def read_pgm(path) -> Image:
    with open(path, "rb") as fh:
        return decode_pgm(fh.read())


def write_pgm(img: Image, path) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_pgm(img))


def write_png(img: Image, path) -> None:
    PILImage.fromarray(img.data).save(path, format="PNG")


# -- color ------------------------------------------------------------------------


def rgb_to_y(img: Image) -> Image:
    """Luminance channel, BT.601 studio swing: Y in [16, 235].

    Grayscale input passes through unchanged (already a single plane).
    """
    if img.channels == 1:
        return Image(img.data.copy())
    rgb = img.data.astype(np.float64)
    y = 16.0 + (65.481 * rgb[:, :, 0] + 128.553 * rgb[:, :, 1] + 24.966 * rgb[:, :, 2]) / 255.0
    return Image(np.clip(np.floor(y + 0.5), 16, 235).astype(np.uint8))


# -- metrics ----------------------------------------------------------------------


def psnr(a: Image, b: Image, border_crop: int = 0) -> float:
    """Peak signal-to-noise ratio in dB over single-channel images.

    ``border_crop`` pixels are removed from every side first (standard
    super-resolution practice, since boundary handling differs between
    methods).  Identical inputs return ``math.inf``.
    """
    if a.channels != 1 or b.channels != 1:
        raise ShapeError("psnr compares single-channel images; convert to luminance first")
    if a.data.shape != b.data.shape:
        raise ShapeError(f"psnr: size mismatch {a.data.shape} vs {b.data.shape}")
    if border_crop:
        if border_crop >= min(a.height, a.width) / 2:
            raise ShapeError(f"psnr: border crop {border_crop} swallows the whole image")
        sl = np.s_[border_crop:-border_crop, border_crop:-border_crop]
    else:
        sl = np.s_[:, :]
    diff = a.data[sl].astype(np.float64) - b.data[sl].astype(np.float64)
    mse = np.mean(diff * diff)
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2
    coords = np.arange(size) - half
    g = np.exp(-(coords ** 2) / (2 * sigma ** 2))
    win = np.outer(g, g)
    return win / win.sum()


def ssim(a: Image, b: Image, border_crop: int = 0) -> float:
    """Mean structural similarity with the reference 11x11 sigma=1.5 window.

    K1 = 0.01, K2 = 0.03, dynamic range 255; local statistics use the
    'valid' region so no padding convention leaks into the score.
    """
    if a.channels != 1 or b.channels != 1:
        raise ShapeError("ssim compares single-channel images; convert to luminance first")
    if a.data.shape != b.data.shape:
        raise ShapeError(f"ssim: size mismatch {a.data.shape} vs {b.data.shape}")
    x = a.data.astype(np.float64)
    y = b.data.astype(np.float64)
    if border_crop:
        if border_crop >= min(a.height, a.width) / 2:
            raise ShapeError(f"ssim: border crop {border_crop} swallows the whole image")
        x = x[border_crop:-border_crop, border_crop:-border_crop]
        y = y[border_crop:-border_crop, border_crop:-border_crop]
    if min(x.shape) < 11:
        raise ShapeError(f"ssim needs at least 11x11 pixels, got {x.shape}")

    win = _gaussian_window()
    c1 = (0.01 * 255) ** 2
    c2 = (0.03 * 255) ** 2
    mu_x = convolve2d(x, win, mode="valid")
    mu_y = convolve2d(y, win, mode="valid")
    var_x = convolve2d(x * x, win, mode="valid") - mu_x ** 2
    var_y = convolve2d(y * y, win, mode="valid") - mu_y ** 2
    cov = convolve2d(x * y, win, mode="valid") - mu_x * mu_y
    score = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / (
        (mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)
    )
    return float(score.mean())


# -- tensor bridge ------------------------------------------------------------------


def to_tensor(img: Image, dtype=np.float32) -> Tensor:
    """Image -> (1, c, h, w) tensor scaled to [0, 1]."""
    arr = img.data.astype(dtype) / dtype(255)
    if arr.ndim == 2:
        arr = arr[None, None]
    else:
        arr = arr.transpose(2, 0, 1)[None]
    return Tensor(arr)


def to_image(t: Tensor) -> Image:
    """(1, c, h, w) tensor -> 8-bit image: clamp to [0, 1], quantize to {i/255}."""
    n, c, _, _ = t.shape
    if n != 1 or c not in (1, 3):
        raise ShapeError(f"to_image expects (1, 1|3, h, w), got {t.shape}")
    arr = np.clip(t.data.astype(np.float64), 0.0, 1.0)[0]
    samples = np.floor(arr * 255.0 + 0.5).astype(np.uint8)
    return Image(samples[0] if c == 1 else samples.transpose(1, 2, 0))


def center_crop_to_multiple(img: Image, s: int) -> tuple[Image, int, int]:
    """Largest centered crop whose dims are divisible by s; returns (crop, top, left)."""
    if s < 1:
        raise DataError(f"crop multiple must be >= 1, got {s}")
    h2, w2 = (img.height // s) * s, (img.width // s) * s
    if h2 == 0 or w2 == 0:
        raise DataError(f"image {img.width}x{img.height} smaller than one {s}x{s} block")
    top = (img.height - h2) // 2
    left = (img.width - w2) // 2
    return Image(img.data[top:top + h2, left:left + w2].copy()), top, left
