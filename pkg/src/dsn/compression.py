"""Codec-compatible compression built on the sampler pair.

The encoder runs the down-sampler, stores the low-resolution plane as an
uncompressed PGM, and compresses those bytes losslessly (built-in deflate, or
any external command via a template).  The decoder inflates, parses the PGM,
and reconstructs with the up-sampler.  All distortion comes from the sampler
pair; the inner codec is bit-exact.

Bundle container (all integers little-endian): magic ``DSNB``, u32 version,
u32 scale, u32 HR height/width (pre-crop), u32 crop top/left, 32-byte model
digest, u8 codec tag, u64 payload length, payload, trailing CRC32.  Header
bytes count toward the bit rate.
"""

from __future__ import annotations

import struct
import subprocess
import tempfile
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ChecksumError,
    DataError,
    FormatError,
    HashMismatchError,
    VersionError,
)
from .imaging import (
    Image,
    center_crop_to_multiple,
    decode_pgm,
    encode_pgm,
    psnr,
    rgb_to_y,
    ssim,
    to_image,
    to_tensor,
)
from .model import DsnModel, model_hash
from .resample import BICUBIC, Interp, resize

__all__ = [
    "CompressedBundle",
    "compress",
    "decompress",
    "save_bundle",
    "load_bundle",
    "bits_per_pixel",
    "rate_distortion_report",
    "BUNDLE_MAGIC",
    "BUNDLE_VERSION",
]

BUNDLE_MAGIC = b"DSNB"
BUNDLE_VERSION = 1

_CODEC_TAGS = {"deflate": 0, "external": 1}
_TAG_CODECS = {v: k for k, v in _CODEC_TAGS.items()}

_HEADER = struct.Struct("<4sIIIIII32sBQ")


@dataclass
class CompressedBundle:
    """One compressed image: header metadata plus the inner-codec payload."""

    scale: int
    hr_height: int
    hr_width: int
    crop_top: int
    crop_left: int
    model_digest: bytes
    codec: str
    payload: bytes

    def to_bytes(self) -> bytes:
        body = _HEADER.pack(
            BUNDLE_MAGIC,
            BUNDLE_VERSION,
            self.scale,
            self.hr_height,
            self.hr_width,
            self.crop_top,
            self.crop_left,
            self.model_digest,
            _CODEC_TAGS[self.codec],
            len(self.payload),
        ) + self.payload
        return body + struct.pack("<I", zlib.crc32(body))

    @classmethod
    def from_bytes(cls, blob: bytes) -> "CompressedBundle":
        if len(blob) < 8 or blob[:4] != BUNDLE_MAGIC:
            raise FormatError("not a compressed bundle (bad magic)")
        version = struct.unpack_from("<I", blob, 4)[0]
        if version != BUNDLE_VERSION:
            raise VersionError(f"bundle version {version}, this build reads {BUNDLE_VERSION}")
        if len(blob) < _HEADER.size + 4:
            raise ChecksumError("bundle truncated before payload")
        (stored_crc,) = struct.unpack_from("<I", blob, len(blob) - 4)
        if zlib.crc32(blob[:-4]) != stored_crc:
            raise ChecksumError("bundle checksum mismatch (truncated or corrupted)")
        magic, _, scale, hr_h, hr_w, top, left, digest, tag, plen = _HEADER.unpack_from(blob, 0)
        payload = blob[_HEADER.size:-4]
        if len(payload) != plen:
            raise FormatError(f"bundle payload holds {len(payload)} bytes, header promises {plen}")
        if tag not in _TAG_CODECS:
            raise FormatError(f"unknown codec tag {tag}")
        return cls(scale, hr_h, hr_w, top, left, digest, _TAG_CODECS[tag], payload)

    @property
    def size_bytes(self) -> int:
        return _HEADER.size + len(self.payload) + 4


def save_bundle(bundle: CompressedBundle, path) -> None:
    Path(path).write_bytes(bundle.to_bytes())


def load_bundle(path) -> CompressedBundle:
    return CompressedBundle.from_bytes(Path(path).read_bytes())


def bits_per_pixel(total_bytes: int, hr_height: int, hr_width: int) -> float:
    """Total stored bits (headers included) over HR pixel count."""
    return 8.0 * total_bytes / (hr_height * hr_width)


# -- inner codecs ---------------------------------------------------------------------


def _run_external(cmd_template: str, data: bytes) -> bytes:
    """Pipe bytes through an external command; template gets {input}/{output} paths."""
    with tempfile.TemporaryDirectory(prefix="dsn-codec-") as work:
        inp = Path(work) / "in.bin"
        outp = Path(work) / "out.bin"
        inp.write_bytes(data)
        cmd = cmd_template.format(input=str(inp), output=str(outp))
        proc = subprocess.run(cmd, shell=True, capture_output=True)
        if proc.returncode != 0:
            raise DataError(
                f"external codec exited with status {proc.returncode}: "
                f"{proc.stderr.decode(errors='replace').strip()}"
            )
        if not outp.exists():
            raise DataError("external codec produced no output file")
        return outp.read_bytes()


def _encode_payload(pgm: bytes, codec: str, codec_cmd: str | None) -> bytes:
    if codec == "deflate":
        return zlib.compress(pgm, level=9)
    if codec == "external":
        if not codec_cmd:
            raise DataError("external codec requested but no command template given")
        return _run_external(codec_cmd, pgm)
    raise DataError(f"unknown codec {codec!r}")


def _decode_payload(payload: bytes, codec: str, codec_cmd: str | None) -> bytes:
    if codec == "deflate":
        try:
            return zlib.decompress(payload)
        except zlib.error as e:
            raise FormatError(f"deflate payload corrupt: {e}") from e
    if not codec_cmd:
        raise DataError("bundle uses an external codec; a decode command template is required")
    return _run_external(codec_cmd, payload)


# -- pipeline ---------------------------------------------------------------------------


def compress(hr: Image, model: DsnModel, codec: str = "deflate",
             codec_cmd: str | None = None) -> CompressedBundle:
    """Down-sample the luminance plane and pack it losslessly.

    Images whose dims are not divisible by the scale are center-cropped; the
    crop offsets ride in the header so the decoder can restore the original
    geometry.
    """
    s = model.config.scale
    y = rgb_to_y(hr)
    cropped, top, left = center_crop_to_multiple(y, s)
    L = model.forward_down(to_tensor(cropped))
    pgm = encode_pgm(to_image(L))
    return CompressedBundle(
        scale=s,
        hr_height=y.height,
        hr_width=y.width,
        crop_top=top,
        crop_left=left,
        model_digest=model_hash(model),
        codec=codec,
        payload=_encode_payload(pgm, codec, codec_cmd),
    )


def extract_lr(bundle: CompressedBundle, codec_cmd: str | None = None) -> Image:
    """Decode just the stored low-resolution plane (bit-exact)."""
    return decode_pgm(_decode_payload(bundle.payload, bundle.codec, codec_cmd))


def decompress(bundle: CompressedBundle, model: DsnModel,
               codec_cmd: str | None = None) -> Image:
    """Inflate, reconstruct with the up-sampler, restore original dims.

    Refuses to decode with a model other than the one that encoded: the
    up-sampler must match the down-sampler it was co-trained with.
    """
    if model_hash(model) != bundle.model_digest:
        raise HashMismatchError(
            "bundle was encoded with a different model "
            f"({bundle.model_digest.hex()[:12]} != {model_hash(model).hex()[:12]})"
        )
    if model.config.scale != bundle.scale:
        raise DataError(f"bundle scale {bundle.scale} != model scale {model.config.scale}")
    lr = extract_lr(bundle, codec_cmd)
    S = model.forward_up(to_tensor(lr))
    restored = to_image(S).data

    crop_h, crop_w = restored.shape
    pad_top = bundle.crop_top
    pad_left = bundle.crop_left
    pad_bottom = bundle.hr_height - crop_h - pad_top
    pad_right = bundle.hr_width - crop_w - pad_left
    if min(pad_top, pad_bottom, pad_left, pad_right) < 0:
        raise FormatError("bundle crop metadata inconsistent with payload dimensions")
    if pad_top or pad_bottom or pad_left or pad_right:
        restored = np.pad(restored, ((pad_top, pad_bottom), (pad_left, pad_right)), mode="edge")
    return Image(restored)


def _interp_pipeline(y: Image, s: int, interp: Interp) -> tuple[int, Image]:
    """Classical reference path: interp-down, deflate, interp-up.

    Returns (stored bundle size in bytes, reconstruction).  Accounting uses
    the same container header so rates are comparable.
    """
    cropped, top, left = center_crop_to_multiple(y, s)
    lr = resize(cropped, cropped.height // s, cropped.width // s, interp)
    bundle = CompressedBundle(
        scale=s,
        hr_height=y.height,
        hr_width=y.width,
        crop_top=top,
        crop_left=left,
        model_digest=bytes(32),
        codec="deflate",
        payload=zlib.compress(encode_pgm(lr), level=9),
    )
    up = resize(lr, cropped.height, cropped.width, interp)
    restored = np.pad(
        up.data,
        ((top, y.height - cropped.height - top), (left, y.width - cropped.width - left)),
        mode="edge",
    )
    return bundle.size_bytes, Image(restored)


def rate_distortion_report(named_images, model: DsnModel, *,
                           include_baseline: bool = True,
                           baseline_interp: Interp = BICUBIC,
                           border_crop: int | None = None) -> list[dict]:
    """Run the pipeline per image and tabulate (image, method, bpp, psnr, ssim).

    ``named_images`` is an iterable of (name, Image).  The optional baseline
    rows use the classical interp-down + deflate + interp-up pipeline under
    identical byte accounting.  Metrics follow the luminance protocol with a
    border crop of the scale factor unless overridden.
    """
    s = model.config.scale
    crop = s if border_crop is None else border_crop
    rows = []
    for name, img in named_images:
        y = rgb_to_y(img)
        bundle = compress(img, model)
        restored = decompress(bundle, model)
        rows.append({
            "image": name,
            "method": "dsn+deflate",
            "bpp": bits_per_pixel(bundle.size_bytes, y.height, y.width),
            "psnr_db": psnr(y, restored, border_crop=crop),
            "ssim": ssim(y, restored, border_crop=crop),
        })
        if include_baseline:
            size, ref = _interp_pipeline(y, s, baseline_interp)
            rows.append({
                "image": name,
                "method": f"{baseline_interp.kind}+deflate",
                "bpp": bits_per_pixel(size, y.height, y.width),
                "psnr_db": psnr(y, ref, border_crop=crop),
                "ssim": ssim(y, ref, border_crop=crop),
            })
    return rows
