"""Sampler network assembly, initialization, and checkpoint serialization.

A model couples the down-sampler (three 3x3 stride-1 convolutions feeding an
s x s stride-s reduction conv, added to an average-pooling shortcut and
quantized) with the up-sampler (3x3 input conv, dense bottleneck block, 1x1
projection to s^2 sub-pixel residual channels, shuffled onto a tiled copy of
the input).  The low-resolution plane is single-channel: the pipeline
operates on luminance.

Checkpoints are a small binary container: magic ``DSNC``, format version,
JSON header (config, config hash, per-layer shape table), the raw
little-endian float32 weight payload, and a trailing CRC32.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import zlib
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, leaky_relu
from .errors import (
    ChecksumError,
    ConfigMismatchError,
    FormatError,
    ShapeError,
    VersionError,
)
from .layers import (
    ConvParams,
    DenseBlockConfig,
    QBReluParams,
    dense_block,
    subpixel_residual_up,
    superpixel_residual_down,
)

__all__ = [
    "ModelConfig",
    "DsnModel",
    "save_checkpoint",
    "load_checkpoint",
    "model_hash",
    "config_hash",
    "CHECKPOINT_MAGIC",
    "CHECKPOINT_VERSION",
]

CHECKPOINT_MAGIC = b"DSNC"
CHECKPOINT_VERSION = 1

# Layers that predict residuals get the tiny Gaussian init and the reduced
# learning rate; everything else gets fan-in scaled init.
RESIDUAL_OUTPUT_LAYERS = ("down.reduce", "up.project")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters; every width is free to vary."""

    scale: int = 2
    down_widths: tuple[int, int, int] = (32, 32, 32)
    up_input_width: int = 32
    dense_depth: int = 4
    dense_growth: int = 16
    bottleneck_width: int = 32
    qbrelu: QBReluParams = QBReluParams()
    lrelu_slope: float = 0.05

    def __post_init__(self):
        if self.scale not in (2, 3, 4):
            raise ValueError(f"scale must be 2, 3, or 4, got {self.scale}")
        if len(self.down_widths) != 3:
            raise ValueError("down-sampler uses exactly three hidden convolutions")

    @property
    def dense(self) -> DenseBlockConfig:
        return DenseBlockConfig(
            depth=self.dense_depth,
            growth=self.dense_growth,
            bottleneck_width=self.bottleneck_width,
            input_width=self.up_input_width,
        )

    def to_dict(self) -> dict:
        return {
            "scale": self.scale,
            "down_widths": list(self.down_widths),
            "up_input_width": self.up_input_width,
            "dense_depth": self.dense_depth,
            "dense_growth": self.dense_growth,
            "bottleneck_width": self.bottleneck_width,
            "qbrelu": {
                "t_min": self.qbrelu.t_min,
                "t_max": self.qbrelu.t_max,
                "levels": self.qbrelu.levels,
            },
            "lrelu_slope": self.lrelu_slope,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        try:
            q = d["qbrelu"]
            return cls(
                scale=int(d["scale"]),
                down_widths=tuple(d["down_widths"]),
                up_input_width=int(d["up_input_width"]),
                dense_depth=int(d["dense_depth"]),
                dense_growth=int(d["dense_growth"]),
                bottleneck_width=int(d["bottleneck_width"]),
                qbrelu=QBReluParams(float(q["t_min"]), float(q["t_max"]), int(q["levels"])),
                lrelu_slope=float(d["lrelu_slope"]),
            )
        except (KeyError, TypeError) as e:
            raise FormatError(f"malformed model config: {e}") from e


def config_hash(cfg: ModelConfig) -> str:
    blob = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _layer_specs(cfg: ModelConfig) -> list[tuple[str, tuple[int, int, int, int], int, int]]:
    """(name, weight shape, stride, pad) for every convolution, in order."""
    w1, w2, w3 = cfg.down_widths
    s = cfg.scale
    specs = [
        ("down.conv1", (w1, 1, 3, 3), 1, 1),
        ("down.conv2", (w2, w1, 3, 3), 1, 1),
        ("down.conv3", (w3, w2, 3, 3), 1, 1),
        ("down.reduce", (1, w3, s, s), s, 0),
        ("up.head", (cfg.up_input_width, 1, 3, 3), 1, 1),
    ]
    dense = cfg.dense
    for layer in range(1, cfg.dense_depth + 1):
        cin = dense.layer_input_channels(layer)
        specs.append((f"up.dense{layer}.squeeze", (cfg.bottleneck_width, cin, 1, 1), 1, 0))
        specs.append((f"up.dense{layer}.expand", (cfg.dense_growth, cfg.bottleneck_width, 3, 3), 1, 1))
    specs.append(("up.project", (s * s, dense.output_channels, 1, 1), 1, 0))
    return specs


class DsnModel:
    """Parameter container for one (down-sampler, up-sampler) pair at a fixed scale."""

    def __init__(self, config: ModelConfig, layers: dict[str, ConvParams]):
        self.config = config
        self.layers = layers
        for name, shape, stride, pad in _layer_specs(config):
            cp = layers.get(name)
            if cp is None:
                raise ShapeError(f"model is missing layer {name}")
            if tuple(cp.weight.shape) != shape or (cp.stride, cp.pad) != (stride, pad):
                raise ShapeError(f"layer {name}: got weight {cp.weight.shape} stride {cp.stride} "
                                 f"pad {cp.pad}, expected {shape} stride {stride} pad {pad}")

    # -- construction ---------------------------------------------------------

    @classmethod
    def zeros(cls, config: ModelConfig, dtype=np.float32) -> "DsnModel":
        layers = {}
        for name, shape, stride, pad in _layer_specs(config):
            layers[name] = ConvParams(
                Tensor.zeros(shape, dtype=dtype, requires_grad=True),
                Tensor.zeros((1, shape[0], 1, 1), dtype=dtype, requires_grad=True),
                stride=stride,
                pad=pad,
            )
        return cls(config, layers)

    @classmethod
    def initialized(cls, config: ModelConfig, seed: int) -> "DsnModel":
        return cls.zeros(config).init_params(seed)

    def init_params(self, seed: int) -> "DsnModel":
        """Deterministically (re)draw all weights; biases stay zero.

        Residual-output layers draw from N(0, 0.001^2) because their targets
        are near zero; all other convolutions use fan-in scaling
        N(0, 2/fan_in).  Layers are filled in registration order, so a fixed
        seed reproduces the model bit for bit.
        """
        rng = np.random.default_rng(seed)
        for name, shape, _, _ in _layer_specs(self.config):
            cp = self.layers[name]
            if name in RESIDUAL_OUTPUT_LAYERS:
                std = 0.001
            else:
                fan_in = shape[1] * shape[2] * shape[3]
                std = float(np.sqrt(2.0 / fan_in))
            cp.weight.data[...] = rng.normal(0.0, std, size=shape).astype(cp.weight.dtype)
            cp.bias.data[...] = 0.0
        return self

    def astype(self, dtype) -> "DsnModel":
        layers = {
            name: ConvParams(cp.weight.astype(dtype), cp.bias.astype(dtype),
                             stride=cp.stride, pad=cp.pad)
            for name, cp in self.layers.items()
        }
        return DsnModel(self.config, layers)

    def with_quantizer(self, qbrelu: QBReluParams) -> "DsnModel":
        """Same parameter tensors under a different output quantizer."""
        cfg = dataclasses.replace(self.config, qbrelu=qbrelu)
        return DsnModel(cfg, self.layers)

    # -- parameter access -------------------------------------------------------

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for name, _, _, _ in _layer_specs(self.config):
            cp = self.layers[name]
            out.append((f"{name}.weight", cp.weight))
            out.append((f"{name}.bias", cp.bias))
        return out

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def down_parameters(self) -> list[Tensor]:
        return [t for n, t in self.named_parameters() if n.startswith("down.")]

    def up_parameters(self) -> list[Tensor]:
        return [t for n, t in self.named_parameters() if n.startswith("up.")]

    def lr_multiplier(self, param_name: str, final_layer_mult: float) -> float:
        layer = param_name.rsplit(".", 1)[0]
        return final_layer_mult if layer in RESIDUAL_OUTPUT_LAYERS else 1.0

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    # -- forward passes -----------------------------------------------------------

    def _down_residual(self, H: Tensor) -> Tensor:
        x = H
        for name in ("down.conv1", "down.conv2", "down.conv3"):
            x = leaky_relu(self.layers[name](x), self.config.lrelu_slope)
        return self.layers["down.reduce"](x)

    def _up_residual(self, L: Tensor) -> Tensor:
        x = self.layers["up.head"](L)
        dense_params = [
            (self.layers[f"up.dense{layer}.squeeze"], self.layers[f"up.dense{layer}.expand"])
            for layer in range(1, self.config.dense_depth + 1)
        ]
        x = dense_block(x, self.config.dense, dense_params, self.config.lrelu_slope)
        return self.layers["up.project"](leaky_relu(x, self.config.lrelu_slope))

    def forward_down(self, H: Tensor) -> Tensor:
        """HR -> LR.  H's spatial dims must be divisible by the scale (crop first)."""
        return superpixel_residual_down(H, self._down_residual, self.config.scale, self.config.qbrelu)

    def forward_up(self, L: Tensor) -> Tensor:
        """LR -> restored HR at (s*h, s*w).  Values are not clamped here."""
        return subpixel_residual_up(L, self._up_residual, self.config.scale)

    def forward_roundtrip(self, H: Tensor) -> tuple[Tensor, Tensor]:
        L = self.forward_down(H)
        return L, self.forward_up(L)


# -- checkpoint container ------------------------------------------------------------


def _payload_bytes(model: DsnModel) -> bytes:
    return b"".join(
        np.ascontiguousarray(t.data, dtype="<f4").tobytes() for _, t in model.named_parameters()
    )


def model_hash(model: DsnModel) -> bytes:
    """32-byte digest identifying architecture plus exact weights."""
    h = hashlib.sha256()
    h.update(json.dumps(model.config.to_dict(), sort_keys=True, separators=(",", ":")).encode())
    h.update(_payload_bytes(model))
    return h.digest()


def save_checkpoint(model: DsnModel, path) -> None:
    header = {
        "config": model.config.to_dict(),
        "config_hash": config_hash(model.config),
        "shapes": [[name, list(t.shape)] for name, t in model.named_parameters()],
    }
    header_blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    body = (
        CHECKPOINT_MAGIC
        + np.uint32(CHECKPOINT_VERSION).tobytes()
        + np.uint32(len(header_blob)).tobytes()
        + header_blob
        + _payload_bytes(model)
    )
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(np.uint32(zlib.crc32(body)).tobytes())


def load_checkpoint(path, expected_config: ModelConfig | None = None) -> DsnModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a model checkpoint (bad magic)")
    version = int(np.frombuffer(blob[4:8], dtype="<u4")[0])
    if version != CHECKPOINT_VERSION:
        raise VersionError(f"{path}: checkpoint version {version}, this build reads {CHECKPOINT_VERSION}")
    stored_crc = int(np.frombuffer(blob[-4:], dtype="<u4")[0])
    if zlib.crc32(blob[:-4]) != stored_crc:
        raise ChecksumError(f"{path}: checksum mismatch (truncated or corrupted)")

    header_len = int(np.frombuffer(blob[8:12], dtype="<u4")[0])
    header_end = 12 + header_len
    try:
        header = json.loads(blob[12:header_end])
    except (ValueError, UnicodeDecodeError) as e:
        raise FormatError(f"{path}: unreadable header: {e}") from e
    cfg = ModelConfig.from_dict(header.get("config", {}))
    if header.get("config_hash") != config_hash(cfg):
        raise FormatError(f"{path}: stored config hash does not match stored config")
    if expected_config is not None and config_hash(expected_config) != header["config_hash"]:
        raise ConfigMismatchError(
            f"{path}: checkpoint was built for a different configuration "
            f"({header['config_hash'][:12]} != {config_hash(expected_config)[:12]})"
        )

    model = DsnModel.zeros(cfg)
    expected_shapes = [[name, list(t.shape)] for name, t in model.named_parameters()]
    if header.get("shapes") != expected_shapes:
        raise FormatError(f"{path}: shape table inconsistent with config")

    payload = blob[header_end:-4]
    offset = 0
    for _, t in model.named_parameters():
        nbytes = t.data.size * 4
        chunk = payload[offset:offset + nbytes]
        if len(chunk) != nbytes:
            raise FormatError(f"{path}: weight payload shorter than shape table requires")
        t.data[...] = np.frombuffer(chunk, dtype="<f4").reshape(t.shape)
        offset += nbytes
    if offset != len(payload):
        raise FormatError(f"{path}: {len(payload) - offset} trailing payload bytes")
    return model
