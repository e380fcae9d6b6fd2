"""Learnable image down/up-sampling with a quantized 8-bit bottleneck.

The package couples a down-sampler (learned residual over block averaging,
snapped to the 8-bit grid by a quantized bilateral ReLU) with an up-sampler
(dense bottleneck block predicting sub-pixel residuals) and co-trains them
on reconstruction error alone.  Around that core: classical interpolation
baselines, the luminance PSNR/SSIM evaluation protocol, a deterministic
training harness, and a codec-compatible compression pipeline.
"""

__version__ = "0.1.0"

from .autodiff import (
    Tensor,
    add,
    avg_pool,
    concat_channels,
    conv2d,
    grad_check,
    leaky_relu,
    pixel_shuffle,
    pixel_unshuffle,
    reduce_sum,
    scalar_mul,
    sub,
    tile_upsample,
)
from .compression import (
    CompressedBundle,
    bits_per_pixel,
    compress,
    decompress,
    load_bundle,
    rate_distortion_report,
    save_bundle,
)
from .errors import (
    ChecksumError,
    ConfigMismatchError,
    DataError,
    DsnError,
    FormatError,
    HashMismatchError,
    NumericError,
    ShapeError,
    VersionError,
)
from .imaging import (
    Image,
    center_crop_to_multiple,
    psnr,
    read_image,
    read_pgm,
    read_png,
    rgb_to_y,
    ssim,
    to_image,
    to_tensor,
    write_pgm,
    write_png,
)
from .layers import (
    ConvParams,
    DenseBlockConfig,
    QBReluParams,
    dense_block,
    q_brelu,
    subpixel_residual_up,
    superpixel_residual_down,
)
from .model import (
    DsnModel,
    ModelConfig,
    config_hash,
    load_checkpoint,
    model_hash,
    save_checkpoint,
)
from .resample import (
    BICUBIC,
    BILINEAR,
    DEGRADATIONS,
    NEAREST,
    Interp,
    bicubic_kernel,
    degradation_matrix,
    resize,
)
from .trainer import (
    AdamState,
    PatchSet,
    TrainConfig,
    adam_step,
    build_patchset,
    l1_loss,
    lr_at,
    train,
    train_job,
    train_sr_baseline,
)
