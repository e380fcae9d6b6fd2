"""Composite layers for the sampler networks.

Builds on the autodiff engine: the quantized bilateral ReLU used as the
down-sampler's output activation, the residual down/up sampling heads, and
the densely connected bottleneck block used by the up-sampler.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Tensor,
    add,
    avg_pool,
    concat_channels,
    conv2d,
    leaky_relu,
    pixel_shuffle,
    tile_upsample,
)
from .errors import ShapeError

__all__ = [
    "QBReluParams",
    "q_brelu",
    "ConvParams",
    "DenseBlockConfig",
    "dense_block",
    "superpixel_residual_down",
    "subpixel_residual_up",
]

DEFAULT_LRELU_SLOPE = 0.05


@dataclass(frozen=True)
class QBReluParams:
    """Rails and level count for the quantized bilateral ReLU.

    Defaults model 8-bit images on a [0, 1] internal scale: 256 levels
    between rails 0 and 1, i.e. the grid {i/255}.
    """

    t_min: float = 0.0
    t_max: float = 1.0
    levels: int = 256

    def __post_init__(self):
        if not self.t_min < self.t_max:
            raise ValueError(f"need t_min < t_max, got [{self.t_min}, {self.t_max}]")
        if self.levels < 2:
            raise ValueError(f"need at least 2 quantization levels, got {self.levels}")

    @property
    def delta_t(self) -> float:
        return self.t_max - self.t_min

    @property
    def cell(self) -> float:
        """Spacing between adjacent quantization levels."""
        return self.delta_t / (self.levels - 1)

    def grid(self) -> np.ndarray:
        return (np.arange(self.levels) * self.delta_t) / (self.levels - 1) + self.t_min


def q_brelu(x: Tensor, p: QBReluParams) -> Tensor:
    """Bilaterally clamped, uniformly quantized activation.

    Forward clamps to [t_min, t_max] and rounds to the nearest of ``levels``
    uniformly spaced values (ties go up).  The true derivative is zero almost
    everywhere, so backward uses the straight-through approximation: the
    gradient passes unchanged where the raw input lies strictly inside the
    rails and is zero otherwise.
    """
    dt = x.data.dtype.type
    t_min, t_max = dt(p.t_min), dt(p.t_max)
    span, last = dt(p.delta_t), dt(p.levels - 1)
    clamped = np.clip(x.data, t_min, t_max)
    idx = np.floor((last / span) * (clamped - t_min) + dt(0.5))
    # Reconstruct as idx * span / last so the default [0, 1] / 256-level grid
    # coincides bitwise with the natural 8-bit grid {i / 255}.
    out = (idx * span) / last + t_min
    inside = (x.data > t_min) & (x.data < t_max)

    def backward(g: np.ndarray):
        if x.requires_grad:
            x.accumulate_grad(np.where(inside, g, 0))

    return Tensor.from_result(out, (x,), backward)


@dataclass
class ConvParams:
    """A convolution's learnable tensors plus its fixed geometry."""

    weight: Tensor
    bias: Tensor
    stride: int = 1
    pad: int = 0

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, stride=self.stride, pad=self.pad)

    @property
    def tensors(self) -> tuple[Tensor, Tensor]:
        return (self.weight, self.bias)


@dataclass(frozen=True)
class DenseBlockConfig:
    """Geometry of the densely connected block.

    Layer ``l`` (1-based) consumes ``input_width + (l-1) * growth`` channels
    and produces ``growth`` new feature maps through a 1x1 bottleneck followed
    by a 3x3 convolution; the stack of ``depth`` 3x3 convolutions gives layer
    ``l`` a receptive field of ``2l + 1``.
    """

    depth: int = 4
    growth: int = 16
    bottleneck_width: int = 32
    input_width: int = 32

    def __post_init__(self):
        if self.depth < 1 or self.growth < 1:
            raise ValueError("dense block needs depth >= 1 and growth >= 1")

    def layer_input_channels(self, layer: int) -> int:
        return self.input_width + (layer - 1) * self.growth

    def receptive_field(self, layer: int) -> int:
        return 2 * layer + 1

    @property
    def output_channels(self) -> int:
        return self.input_width + self.depth * self.growth


def dense_block(x: Tensor, cfg: DenseBlockConfig, params: list[tuple[ConvParams, ConvParams]],
                slope: float = DEFAULT_LRELU_SLOPE) -> Tensor:
    """Densely connected bottleneck stack.

    Each layer sees the block input plus every earlier layer's output,
    squeezes through a pre-activated 1x1 conv, then expands with a
    pre-activated 3x3 conv (pad 1) producing ``growth`` maps.  Returns the
    concatenation of the input with all produced maps.
    """
    if x.shape[1] != cfg.input_width:
        raise ShapeError(f"dense_block: input has {x.shape[1]} channels, config says {cfg.input_width}")
    if len(params) != cfg.depth:
        raise ShapeError(f"dense_block: got params for {len(params)} layers, config says {cfg.depth}")
    features = [x]
    for layer, (squeeze, expand) in enumerate(params, start=1):
        inp = features[0] if layer == 1 else concat_channels(features)
        want = cfg.layer_input_channels(layer)
        if inp.shape[1] != want:
            raise ShapeError(f"dense_block: layer {layer} sees {inp.shape[1]} channels, expected {want}")
        h = squeeze(leaky_relu(inp, slope))
        features.append(expand(leaky_relu(h, slope)))
    return concat_channels(features)


def superpixel_residual_down(H: Tensor, residual_head, s: int, p: QBReluParams) -> Tensor:
    """Down-sample by adding a learned residual to the block mean, then quantize.

    ``residual_head`` maps H to a 1-channel tensor at 1/s resolution (its last
    layer is the s x s stride-s convolution, so shapes line up with the
    average-pooling shortcut).  With a zero head this is exactly quantized
    average pooling.
    """
    shortcut = avg_pool(H, s)
    residual = residual_head(H)
    if residual.shape != shortcut.shape:
        raise ShapeError(
            f"superpixel_residual_down: head output {residual.shape} != pooled shortcut {shortcut.shape}"
        )
    return q_brelu(add(residual, shortcut), p)


def subpixel_residual_up(L: Tensor, residual_head, s: int) -> Tensor:
    """Up-sample by adding a shuffled sub-pixel residual to the tiled input.

    ``residual_head`` maps L to s^2 channels at L's resolution; each channel
    holds the residual for one sub-pixel position, rearranged to full
    resolution by the pixel shuffle.  With a zero head this is exactly
    nearest-neighbor (tile) up-sampling.  No clamping happens here; clamping
    to [0, 1] belongs to image export.
    """
    residual = residual_head(L)
    if residual.shape[1] != s * s:
        raise ShapeError(
            f"subpixel_residual_up: head produced {residual.shape[1]} channels, need {s * s}"
        )
    return add(pixel_shuffle(residual, s), tile_upsample(L, s))
