"""Deterministic nearest / bilinear / bicubic resampling.

Separable resampling with half-pixel-center coordinate mapping
(src = (dst + 0.5) * in/out - 0.5) and edge handling by clamping source
coordinates.  When minifying with ``antialias`` the kernel is stretched by
the shrink factor, mirroring the convention of the common image toolboxes
the super-resolution literature builds its degradations on.  Weights at each
output coordinate are normalized, so constants are reproduced exactly.

These are the fixed "cheap" degradations and baselines; none of this
participates in gradient computation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .errors import ShapeError
from .imaging import Image

__all__ = [
    "Interp",
    "NEAREST",
    "BILINEAR",
    "BICUBIC",
    "DEGRADATIONS",
    "bicubic_kernel",
    "resize",
    "resize_array",
    "degradation_matrix",
]


@dataclass(frozen=True)
class Interp:
    """A resampling method: kernel family, bicubic sharpness, antialias switch."""

    kind: str
    bicubic_a: float = -0.5
    antialias: bool = True

    def __post_init__(self):
        if self.kind not in ("nearest", "bilinear", "bicubic"):
            raise ValueError(f"unknown interpolation kind {self.kind!r}")


NEAREST = Interp("nearest")
BILINEAR = Interp("bilinear")
BICUBIC = Interp("bicubic")

#: The three classical degradations, in the order reports tabulate them.
DEGRADATIONS = {"nearest": NEAREST, "bilinear": BILINEAR, "bicubic": BICUBIC}


def bicubic_kernel(x, a: float = -0.5) -> np.ndarray:
    """Keys cubic kernel: w(0) = 1, w(k) = 0 at integers, support (-2, 2)."""
    x = np.abs(np.asarray(x, dtype=np.float64))
    near = ((a + 2) * x - (a + 3)) * x * x + 1
    far = (((x - 5) * x + 8) * x - 4) * a
    return np.where(x <= 1, near, np.where(x < 2, far, 0.0))


def _linear_kernel(x) -> np.ndarray:
    return np.maximum(0.0, 1.0 - np.abs(np.asarray(x, dtype=np.float64)))


def _axis_weights(n_in: int, n_out: int, interp: Interp) -> np.ndarray:
    """Dense (n_out, n_in) weight matrix for one axis; rows sum to one."""
    scale = n_in / n_out
    centers = (np.arange(n_out) + 0.5) * scale - 0.5
    w = np.zeros((n_out, n_in))

    if interp.kind == "nearest":
        picks = np.clip(np.floor(centers + 0.5).astype(int), 0, n_in - 1)
        w[np.arange(n_out), picks] = 1.0
        return w

    if interp.kind == "bilinear":
        kernel, radius = _linear_kernel, 1.0
    else:
        kernel, radius = (lambda x: bicubic_kernel(x, interp.bicubic_a)), 2.0

    stretch = scale if (interp.antialias and scale > 1) else 1.0
    support = radius * stretch
    for i, src in enumerate(centers):
        lo = int(np.ceil(src - support))
        hi = int(np.floor(src + support))
        taps = np.arange(lo, hi + 1)
        weights = kernel((taps - src) / stretch)
        taps = np.clip(taps, 0, n_in - 1)  # edge replication
        np.add.at(w[i], taps, weights)
        w[i] /= w[i].sum()
    return w


def resize_array(arr: np.ndarray, out_h: int, out_w: int, interp: Interp) -> np.ndarray:
    """Resample an (h, w) or (h, w, c) float array; returns float64."""
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"resize: output dims must be >= 1, got {out_h}x{out_w}")
    if arr.ndim not in (2, 3):
        raise ShapeError(f"resize: expected (h, w) or (h, w, c) array, got {arr.shape}")
    h, w = arr.shape[:2]
    wr = _axis_weights(h, out_h, interp)
    wc = _axis_weights(w, out_w, interp)
    planes = arr[:, :, None] if arr.ndim == 2 else arr
    out = np.einsum("oi,iwc->owc", wr, planes.astype(np.float64))
    out = np.einsum("oj,hjc->hoc", wc, out)
    return out[:, :, 0] if arr.ndim == 2 else out


def resize(img, out_h: int, out_w: int, interp: Interp):
    """Resize an :class:`Image` or :class:`Tensor`, returning the same kind.

    Images are resampled in their 0..255 range and re-quantized (round half
    up, clipped).  Tensors are resampled plane by plane and come back as
    graph leaves in the input dtype: resizing is a data-preparation step,
    not a differentiable op.
    """
    if isinstance(img, Image):
        out = resize_array(img.data.astype(np.float64), out_h, out_w, interp)
        return Image(np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8))
    if isinstance(img, Tensor):
        n, c, _, _ = img.shape
        planes = [
            resize_array(img.data[b, ch], out_h, out_w, interp)
            for b in range(n)
            for ch in range(c)
        ]
        out = np.stack(planes).reshape(n, c, out_h, out_w)
        return Tensor(out.astype(img.dtype))
    raise ShapeError(f"resize handles Image or Tensor, got {type(img).__name__}")


def degradation_matrix(train_fn, eval_fn, degradations: dict[str, Interp]) -> dict:
    """Cross-degradation experiment grid.

    ``train_fn(interp) -> model`` builds a restorer for one degradation;
    ``eval_fn(model, interp) -> float`` scores it under another.  Returns
    {"names": [...], "matrix": psnr[i][j], "row_avg": [...]} with row i the
    training degradation and column j the test degradation.
    """
    names = list(degradations)
    models = [train_fn(degradations[n]) for n in names]
    matrix = [[float(eval_fn(m, degradations[n])) for n in names] for m in models]
    return {
        "names": names,
        "matrix": matrix,
        "row_avg": [float(np.mean(row)) for row in matrix],
    }
