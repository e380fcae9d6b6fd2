# %% [markdown]
# # The quantized bilateral ReLU
#
# The down-sampler's output activation clamps to [t_min, t_max] and rounds
# onto a uniform grid, which makes its output a genuine 8-bit image.  The
# true derivative of that staircase is zero almost everywhere, so training
# uses a straight-through approximation: gradient 1 strictly inside the
# rails, 0 outside.  This script draws the staircase, verifies its contract
# numerically, and shows the approximation's two design properties.

# %%
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from dsn import QBReluParams, Tensor, q_brelu

FOUR_LEVEL = QBReluParams(0.0, 1.0, 4)   # easy to see
EIGHT_BIT = QBReluParams(0.0, 1.0, 256)  # the training default

# %%
x = np.linspace(-0.4, 1.4, 2001)
y = q_brelu(Tensor(x.reshape(1, 1, 1, -1)), FOUR_LEVEL).data.reshape(-1)

fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
ax1.plot(x, y, lw=2, label="4-level activation")
ax1.plot(x, np.clip(x, 0, 1), "--", lw=1, label="clamp only")
ax1.set_title("staircase between the rails")
ax1.legend()

grad = ((x > 0) & (x < 1)).astype(float)
ax2.step(x, grad, where="mid", color="tab:red")
ax2.set_title("straight-through backward")
fig.tight_layout()
from pathlib import Path

out = Path(__file__).parent / "output"
out.mkdir(exist_ok=True)
fig.savefig(out / "quantized_bottleneck.png", dpi=110)
print(f"wrote {out / 'quantized_bottleneck.png'}")

# %% [markdown]
# ## Center quantization
#
# Rounding goes to the *nearest* level, so the output never strays more than
# half a cell from the clamped input.

# %%
rng = np.random.default_rng(1)
samples = rng.uniform(-0.5, 1.5, size=(1, 1, 250, 400))
quantized = q_brelu(Tensor(samples), EIGHT_BIT).data
gap = np.abs(quantized - np.clip(samples, 0, 1)).max()
print(f"max |output - clamp(input)| = {gap:.6f}  (half cell = {EIGHT_BIT.cell / 2:.6f})")

# %% [markdown]
# ## Zero mean deviation
#
# Inside the rails the rounding error averages out, so the activation is
# unbiased: the approximation neither brightens nor darkens the image.

# %%
inside = rng.uniform(0, 1, size=(1, 1, 500, 200))
err = q_brelu(Tensor(inside), EIGHT_BIT).data - inside
print(f"mean rounding error over 1e5 samples: {err.mean():+.2e} "
      f"(cell = {EIGHT_BIT.cell:.2e})")

# %% [markdown]
# ## The backward mask in action
#
# Gradients pass only where the input sits strictly inside the rails.

# %%
probe = Tensor(np.array([[-0.2, 0.0, 0.5, 1.0, 1.7]]).reshape(1, 1, 1, 5),
               requires_grad=True)
q_brelu(probe, EIGHT_BIT).backward(np.ones((1, 1, 1, 5)))
print("inputs   ", probe.data.reshape(-1))
print("gradients", probe.grad.reshape(-1))
