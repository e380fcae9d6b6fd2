# %% [markdown]
# # Classical resampling: kernels, aliasing, and why the baselines look the
# # way they do
#
# The package carries nearest / bilinear / bicubic resampling both as the
# degradations that synthesize training pairs and as the baselines learned
# models are judged against.  Coordinates map through half-pixel centers and
# weights are normalized, so constants survive exactly.

# %%
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from dsn import BICUBIC, BILINEAR, NEAREST, Image, Interp, bicubic_kernel, resize
from dsn.resample import resize_array

out = Path(__file__).parent / "output"
out.mkdir(exist_ok=True)

# %% [markdown]
# ## The Keys kernel
#
# w(0) = 1 and w(k) = 0 at other integers, which is why resizing to the same
# size is an exact identity.  At half distance the weight is 0.5625.

# %%
xs = np.linspace(-2.5, 2.5, 1001)
fig, ax = plt.subplots(figsize=(6, 3.5))
ax.plot(xs, bicubic_kernel(xs), label="bicubic (a = -0.5)")
ax.plot(xs, np.maximum(0, 1 - np.abs(xs)), "--", label="bilinear")
ax.axhline(0, color="k", lw=0.5)
ax.legend()
ax.set_title("interpolation kernels")
fig.tight_layout()
fig.savefig(out / "kernels.png", dpi=110)
print("wrote", out / "kernels.png")
print("w(0.5) =", bicubic_kernel(0.5))

# %% [markdown]
# ## Aliasing and the antialias switch
#
# Minifying fine stripes with a narrow kernel keeps full-amplitude junk that
# was never in the scene at that scale; stretching the kernel by the shrink
# factor (the toolbox convention) averages it away.  Nearest never
# antialiases, which is exactly what makes it a distinct degradation.

# %%
stripes = np.tile(np.tile([0.0, 255.0], 24), (48, 1))
for name, interp in [
    ("nearest", NEAREST),
    ("bilinear, no antialias", Interp("bilinear", antialias=False)),
    ("bilinear, antialias", BILINEAR),
    ("bicubic, antialias", BICUBIC),
]:
    small = resize_array(stripes, 16, 16, interp)
    print(f"{name:24s} minified stripes: mean {small.mean():6.1f}  "
          f"max deviation from flat {np.abs(small - 127.5).max():6.1f}")

# %% [markdown]
# ## Eight-bit pipeline stays well behaved
#
# The Image path re-quantizes after filtering; a constant plane is preserved
# sample for sample under any method and any size.

# %%
flat = Image(np.full((30, 20), 77, dtype=np.uint8))
for interp in (NEAREST, BILINEAR, BICUBIC):
    for dims in ((10, 7), (45, 33)):
        assert (resize(flat, *dims, interp).data == 77).all()
print("constant plane preserved under all kinds and sizes")
