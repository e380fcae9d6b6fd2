# %% [markdown]
# # Co-training the sampler pair on a single image
#
# The pair starts as "quantized block average down, nearest up" (both
# residual heads are near zero) and improves from there, driven only by the
# L1 reconstruction error of the full roundtrip — the down-sampler never
# sees a low-resolution target.  A few hundred Adam steps on one 64x64
# image push the roundtrip well past nearest- and bicubic-interpolation
# quality on that image.

# %%
import time
from pathlib import Path

import numpy as np

from dsn import (
    BICUBIC,
    DsnModel,
    Image,
    ModelConfig,
    PatchSet,
    TrainConfig,
    center_crop_to_multiple,
    psnr,
    resize,
    ssim,
    to_image,
    to_tensor,
    train,
    write_png,
)

out = Path(__file__).parent / "output"
out.mkdir(exist_ok=True)

# %% [markdown]
# ## A synthetic scene
#
# Smooth shading plus oriented texture plus one hard-edged box: enough
# structure that cheap interpolation visibly loses detail.

# %%
h = w = 64
yy, xx = np.mgrid[0:h, 0:w] / 64.0
scene = 0.45 + 0.25 * np.sin(2 * np.pi * (0.7 * xx + 0.4 * yy))
scene += 0.15 * np.sin(2 * np.pi * 9 * (0.6 * xx - 0.8 * yy)) * np.exp(-((xx - 0.5) ** 2 + (yy - 0.4) ** 2) / 0.08)
scene[40:56, 12:30] += 0.22
image = Image(np.clip(np.floor(scene * 255 + 0.5), 0, 255).astype(np.uint8))
write_png(image, out / "scene.png")

# %%
config = ModelConfig(scale=2, down_widths=(8, 8, 8), up_input_width=24,
                     dense_depth=3, dense_growth=12, bottleneck_width=24)
model = DsnModel.initialized(config, seed=1)

y = image.data.astype(np.float32) / 255.0
patches = PatchSet(y[None, None], [("scene", 0, 0, 0)])
recipe = TrainConfig(scale=2, patch_size=64, batch_size=1, epochs=600, seed=3,
                     lr_start=2e-3, lr_decay=1.0, final_layer_lr_mult=1.0)

start = time.time()
rows, _ = train(model, patches, recipe)
print(f"{len(rows)} steps in {time.time() - start:.0f}s, "
      f"loss {rows[0]['loss']:.5f} -> {rows[-1]['loss']:.5f}")

# %% [markdown]
# ## Scoring the roundtrip
#
# Compare the learned pipeline against classical down+up at the same scale.

# %%
ref, _, _ = center_crop_to_multiple(image, 2)
L, S = model.forward_roundtrip(to_tensor(ref))
restored = to_image(S)
write_png(to_image(L), out / "scene_lr.png")
write_png(restored, out / "scene_restored.png")

lr_b = resize(ref, 32, 32, BICUBIC)
bicubic_up = resize(lr_b, 64, 64, BICUBIC)

print(f"learned roundtrip : psnr {psnr(ref, restored, border_crop=2):6.2f}  "
      f"ssim {ssim(ref, restored, border_crop=2):.4f}")
print(f"bicubic down+up   : psnr {psnr(ref, bicubic_up, border_crop=2):6.2f}  "
      f"ssim {ssim(ref, bicubic_up, border_crop=2):.4f}")
print("images under", out)
