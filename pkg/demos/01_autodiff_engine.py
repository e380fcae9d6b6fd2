# %% [markdown]
# # A tour of the tensor engine
#
# Everything downstream (sampler networks, training, compression) rests on a
# small reverse-mode engine over (batch, channel, height, width) arrays.
# This script builds each operation, runs it forward, and audits its backward
# pass against central finite differences at float64.

# %%
import numpy as np

from dsn import (
    Tensor,
    avg_pool,
    conv2d,
    grad_check,
    leaky_relu,
    pixel_shuffle,
    pixel_unshuffle,
    reduce_sum,
    tile_upsample,
)

rng = np.random.default_rng(0)

# %% [markdown]
# ## Forward semantics in one screen
#
# A 3x3 all-ones kernel over a 3x3 all-ones image is just a window sum; the
# pixel shuffle is a pure permutation, so it composes with its inverse to the
# identity, bit for bit.

# %%
x = Tensor(np.ones((1, 1, 3, 3)))
w = Tensor(np.ones((1, 1, 3, 3)))
b = Tensor(np.zeros((1, 1, 1, 1)))
print("conv2d(ones, ones) =", conv2d(x, w, b).data.reshape(()))

t = Tensor(rng.uniform(size=(1, 4, 2, 2)))
roundtrip = pixel_unshuffle(pixel_shuffle(t, 2), 2)
print("shuffle round-trip exact:", np.array_equal(roundtrip.data, t.data))

lr = Tensor(rng.uniform(size=(1, 1, 2, 2)))
print("avg_pool undoes tile_upsample:",
      np.allclose(avg_pool(tile_upsample(lr, 3), 3).data, lr.data))

# %% [markdown]
# ## The gradient audit
#
# Each op gets a scalar loss with a random mixing mask (so every coordinate
# has a distinct gradient) and its analytic backward is compared against
# (f(x+h) - f(x-h)) / 2h per sampled coordinate.

# %%
def mixed(t, mix):
    out = (t.data * mix).sum().reshape(1, 1, 1, 1)

    def backward(g):
        if t.requires_grad:
            t.accumulate_grad(mix * g.reshape(()))

    return Tensor.from_result(out, (t,), backward)


checks = []

xc = Tensor(rng.uniform(-1, 1, (2, 3, 8, 8)), requires_grad=True)
wc = Tensor(rng.normal(0, 0.5, (4, 3, 3, 3)), requires_grad=True)
bc = Tensor(rng.normal(0, 0.5, (1, 4, 1, 1)), requires_grad=True)
mix = rng.normal(size=(2, 4, 8, 8))
checks.append(("conv2d (pad 1)", lambda: mixed(conv2d(xc, wc, bc, pad=1), mix), [xc, wc, bc]))

xp = Tensor(rng.uniform(-1, 1, (1, 2, 6, 6)), requires_grad=True)
mixp = rng.normal(size=(1, 2, 2, 2))
checks.append(("avg_pool s=3", lambda: mixed(avg_pool(xp, 3), mixp), [xp]))

xt = Tensor(rng.uniform(-1, 1, (1, 1, 3, 3)), requires_grad=True)
mixt = rng.normal(size=(1, 1, 6, 6))
checks.append(("tile_upsample s=2", lambda: mixed(tile_upsample(xt, 2), mixt), [xt]))

xr = Tensor(np.sign(rng.normal(size=(1, 1, 8, 8))) * rng.uniform(0.1, 1, (1, 1, 8, 8)),
            requires_grad=True)
mixr = rng.normal(size=(1, 1, 8, 8))
checks.append(("leaky_relu 0.05", lambda: mixed(leaky_relu(xr, 0.05), mixr), [xr]))

for name, f, params in checks:
    err = grad_check(f, params, step=1e-5, coords_per_param=40, rng=rng)
    print(f"{name:20s} max relative error {err:.2e}")

# %% [markdown]
# ## Gradients accumulate through reuse
#
# A tensor feeding two branches receives the sum of both branch gradients,
# which is what makes shortcut connections trainable.

# %%
x2 = Tensor(np.full((1, 1, 1, 1), 2.0), requires_grad=True)
y = reduce_sum(x2 + x2)
y.backward()
print("d(x + x)/dx =", x2.grad.reshape(()))
