"""Minimal reverse-mode differentiation engine on rank-4 numpy arrays.

Tensors are (batch, channel, height, width) arrays carrying an optional
gradient buffer and a backward closure; calling ``backward()`` on a result
walks the recorded graph in reverse topological order.  Only the operations
the sampler networks need are provided; there is no broadcasting — every
elementwise op demands an exact shape match, which turns silent shape bugs
into loud ones.

Convolution follows the CNN convention: cross-correlation (no kernel flip)
with zero padding.  All forward passes are deterministic.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError, ShapeError

__all__ = [
    "Tensor",
    "conv2d",
    "avg_pool",
    "tile_upsample",
    "pixel_shuffle",
    "pixel_unshuffle",
    "leaky_relu",
    "concat_channels",
    "add",
    "sub",
    "scalar_mul",
    "reduce_sum",
    "grad_check",
]


class Tensor:
    """A rank-4 array node in the computation graph.

    ``data`` is kept in whatever float dtype it arrives in (float32 for
    training storage, float64 for gradient checking).  ``grad`` is allocated
    lazily on the first backward pass through this node.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        if arr.ndim != 4:
            raise ShapeError(f"tensor must be rank 4 (n, c, h, w), got shape {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = ()
        self._backward = None

    # -- construction helpers ------------------------------------------------

    @classmethod
    def zeros(cls, shape, dtype=np.float32, requires_grad=False):
        return cls(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)

    @classmethod
    def from_result(cls, data, parents, backward):
        """Internal: wrap an op result and record its backward closure."""
        out = cls(data, requires_grad=any(p.requires_grad for p in parents))
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward = backward
        return out

    # -- basic properties ----------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def detach(self) -> "Tensor":
        """A new leaf tensor sharing this tensor's values."""
        return Tensor(self.data.copy())

    def astype(self, dtype) -> "Tensor":
        t = Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)
        return t

    def accumulate_grad(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # -- graph traversal -----------------------------------------------------

    def backward(self, seed: np.ndarray | None = None):
        """Reverse-accumulate gradients from this node into every parent.

        ``seed`` defaults to ones; pass the upstream gradient explicitly when
        this node is not the final scalar.  Parameter gradients accumulate
        across calls until cleared.
        """
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))

        if seed is None:
            seed = np.ones_like(self.data)
        self.accumulate_grad(np.asarray(seed, dtype=self.data.dtype))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar --------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, c):
        return scalar_mul(self, c)

    __rmul__ = __mul__


def _check_same_shape(a: Tensor, b: Tensor, opname: str):
    if a.shape != b.shape:
        raise ShapeError(f"{opname}: shape mismatch {a.shape} vs {b.shape}")
    if a.dtype != b.dtype:
        raise ShapeError(f"{opname}: dtype mismatch {a.dtype} vs {b.dtype}")


# -- convolution ---------------------------------------------------------------


def _conv_windows(padded: np.ndarray, k: int, stride: int, oh: int, ow: int):
    n, c, _, _ = padded.shape
    sn, sc, sh, sw = padded.strides
    return np.lib.stride_tricks.as_strided(
        padded,
        (n, c, oh, ow, k, k),
        (sn, sc, sh * stride, sw * stride, sh, sw),
        writeable=False,
    )


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """2-D cross-correlation with zero padding plus a per-filter bias.

    ``weight`` is (c_out, c_in, k, k); ``bias`` is stored rank-4 as
    (1, c_out, 1, 1).  Output spatial dims follow
    floor((h + 2*pad - k) / stride) + 1.
    """
    n, c_in, h, w = x.shape
    c_out, w_cin, kh, kw = weight.shape
    if kh != kw:
        raise ShapeError(f"conv2d: kernel must be square, got {kh}x{kw}")
    k = kh
    if w_cin != c_in:
        raise ShapeError(f"conv2d: input has {c_in} channels but weight expects {w_cin} (axis c_in)")
    if bias.shape != (1, c_out, 1, 1):
        raise ShapeError(f"conv2d: bias shape {bias.shape} != (1, {c_out}, 1, 1)")
    if stride < 1 or pad < 0:
        raise ShapeError(f"conv2d: need stride >= 1 and pad >= 0, got stride={stride}, pad={pad}")
    if x.dtype != weight.dtype or x.dtype != bias.dtype:
        raise ShapeError(f"conv2d: dtype mismatch {x.dtype}/{weight.dtype}/{bias.dtype}")
    oh = (h + 2 * pad - k) // stride + 1
    ow = (w + 2 * pad - k) // stride + 1
    if oh < 1 or ow < 1:
        raise ShapeError(f"conv2d: kernel {k} with pad {pad} does not fit input h={h}, w={w}")

    if pad:
        padded = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    else:
        padded = x.data
    win = _conv_windows(padded, k, stride, oh, ow)
    out = np.tensordot(win, weight.data, axes=([1, 4, 5], [1, 2, 3]))  # (n, oh, ow, c_out)
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2)) + bias.data

    def backward(g: np.ndarray):
        if bias.requires_grad:
            bias.accumulate_grad(g.sum(axis=(0, 2, 3)).reshape(1, c_out, 1, 1))
        if weight.requires_grad:
            dw = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))  # (c_out, c_in, k, k)
            weight.accumulate_grad(dw)
        if x.requires_grad:
            dpad = np.zeros_like(padded)
            for u in range(k):
                for v in range(k):
                    duv = np.tensordot(g, weight.data[:, :, u, v], axes=([1], [0]))
                    dpad[:, :, u:u + stride * oh:stride, v:v + stride * ow:stride] += duv.transpose(0, 3, 1, 2)
            x.accumulate_grad(dpad[:, :, pad:pad + h, pad:pad + w] if pad else dpad)

    return Tensor.from_result(out, (x, weight, bias), backward)


# -- pooling and pixel rearrangement -------------------------------------------


def avg_pool(x: Tensor, s: int) -> Tensor:
    """Non-overlapping s*s mean pooling with stride s."""
    n, c, h, w = x.shape
    if s < 1:
        raise ShapeError(f"avg_pool: window must be >= 1, got {s}")
    if h % s or w % s:
        raise ShapeError(f"avg_pool: dims ({h}, {w}) not divisible by {s}; crop first")
    out = x.data.reshape(n, c, h // s, s, w // s, s).mean(axis=(3, 5))

    def backward(g: np.ndarray):
        if x.requires_grad:
            gx = np.repeat(np.repeat(g, s, axis=2), s, axis=3)
            x.accumulate_grad(gx / (s * s))

    return Tensor.from_result(out, (x,), backward)


def tile_upsample(x: Tensor, s: int) -> Tensor:
    """Replicate every pixel into an s*s block (nearest-neighbor zoom)."""
    if s < 1:
        raise ShapeError(f"tile_upsample: scale must be >= 1, got {s}")
    n, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, s, axis=2), s, axis=3)

    def backward(g: np.ndarray):
        if x.requires_grad:
            x.accumulate_grad(g.reshape(n, c, h, s, w, s).sum(axis=(3, 5)))

    return Tensor.from_result(out, (x,), backward)


def pixel_shuffle(x: Tensor, s: int) -> Tensor:
    """Rearrange an (n, s^2, h, w) tensor into (n, 1, s*h, s*w).

    Output pixel (y, x) takes channel s*(y mod s) + (x mod s) of input pixel
    (y // s, x // s); the permutation is lossless.
    """
    n, c, h, w = x.shape
    if c != s * s:
        raise ShapeError(f"pixel_shuffle: need exactly {s * s} channels for scale {s}, got {c}")
    out = x.data.reshape(n, s, s, h, w).transpose(0, 3, 1, 4, 2).reshape(n, 1, h * s, w * s)

    def backward(g: np.ndarray):
        if x.requires_grad:
            x.accumulate_grad(
                g.reshape(n, h, s, w, s).transpose(0, 2, 4, 1, 3).reshape(n, s * s, h, w)
            )

    return Tensor.from_result(out, (x,), backward)


def pixel_unshuffle(x: Tensor, s: int) -> Tensor:
    """Exact inverse of :func:`pixel_shuffle`: (n, 1, s*h, s*w) -> (n, s^2, h, w)."""
    n, c, h, w = x.shape
    if c != 1:
        raise ShapeError(f"pixel_unshuffle: input must be single-channel, got {c}")
    if h % s or w % s:
        raise ShapeError(f"pixel_unshuffle: dims ({h}, {w}) not divisible by {s}")
    hs, ws = h // s, w // s
    out = x.data.reshape(n, hs, s, ws, s).transpose(0, 2, 4, 1, 3).reshape(n, s * s, hs, ws)

    def backward(g: np.ndarray):
        if x.requires_grad:
            x.accumulate_grad(
                g.reshape(n, s, s, hs, ws).transpose(0, 3, 1, 4, 2).reshape(n, 1, h, w)
            )

    return Tensor.from_result(out, (x,), backward)


# -- elementwise ---------------------------------------------------------------


def leaky_relu(x: Tensor, slope: float = 0.05) -> Tensor:
    """Elementwise max(x, slope*x).  The subgradient at exactly 0 is ``slope``."""
    if not 0 <= slope < 1:
        raise ShapeError(f"leaky_relu: slope must be in [0, 1), got {slope}")
    pos = x.data > 0
    out = np.where(pos, x.data, x.data * x.data.dtype.type(slope))

    def backward(g: np.ndarray):
        if x.requires_grad:
            x.accumulate_grad(np.where(pos, g, g * g.dtype.type(slope)))

    return Tensor.from_result(out, (x,), backward)


def concat_channels(inputs: list[Tensor]) -> Tensor:
    """Concatenate along the channel axis, in argument order."""
    if not inputs:
        raise ShapeError("concat_channels: need at least one input")
    n, _, h, w = inputs[0].shape
    for t in inputs[1:]:
        tn, _, th, tw = t.shape
        if (tn, th, tw) != (n, h, w):
            raise ShapeError(
                f"concat_channels: spatial/batch mismatch {t.shape} vs {inputs[0].shape}"
            )
        if t.dtype != inputs[0].dtype:
            raise ShapeError(f"concat_channels: dtype mismatch {t.dtype} vs {inputs[0].dtype}")
    out = np.concatenate([t.data for t in inputs], axis=1)
    offsets = np.cumsum([0] + [t.shape[1] for t in inputs])

    def backward(g: np.ndarray):
        for t, lo, hi in zip(inputs, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                t.accumulate_grad(g[:, lo:hi])

    return Tensor.from_result(out, tuple(inputs), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")
    out = a.data + b.data

    def backward(g: np.ndarray):
        if a.requires_grad:
            a.accumulate_grad(g)
        if b.requires_grad:
            b.accumulate_grad(g)

    return Tensor.from_result(out, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "sub")
    out = a.data - b.data

    def backward(g: np.ndarray):
        if a.requires_grad:
            a.accumulate_grad(g)
        if b.requires_grad:
            b.accumulate_grad(-g)

    return Tensor.from_result(out, (a, b), backward)


def scalar_mul(x: Tensor, c: float) -> Tensor:
    c = x.data.dtype.type(c)
    out = x.data * c

    def backward(g: np.ndarray):
        if x.requires_grad:
            x.accumulate_grad(g * c)

    return Tensor.from_result(out, (x,), backward)


def reduce_sum(x: Tensor) -> Tensor:
    """Sum all elements into a (1, 1, 1, 1) scalar tensor."""
    out = x.data.sum().reshape(1, 1, 1, 1)

    def backward(g: np.ndarray):
        if x.requires_grad:
            x.accumulate_grad(np.full_like(x.data, g.reshape(())))

    return Tensor.from_result(out, (x,), backward)


# -- finite-difference oracle ----------------------------------------------------


def grad_check(f, params: list[Tensor], step: float = 1e-5, coords_per_param: int = 50,
               rng=None, masks=None, exclude_kinks: bool = False,
               kink_tol: float = 1e-5) -> float:
    """Compare analytic gradients of a scalar graph against central differences.

    ``f`` rebuilds the graph from the (shared) ``params`` and returns the
    scalar loss tensor.  For each parameter, up to ``coords_per_param``
    coordinates are sampled.  Two exclusion mechanisms keep activation kinks
    out of the comparison:

    - ``masks`` (aligned with ``params``, True = eligible) for coordinates
      the caller already knows sit on a kink;
    - ``exclude_kinks`` probes each coordinate at two step sizes and skips
      it when the estimates disagree beyond ``kink_tol`` — a kink inside the
      probe interval breaks that self-consistency while a genuine gradient
      bug does not.  More than half the probes excluded raises, so the
      detector cannot silently mask a systematic error.

    Returns max over sampled coordinates of |a - n| / max(|a|, |n|, 1e-8).
    """
    if step <= 0:
        raise ValueError(f"grad_check: step must be positive, got {step}")
    if rng is None:
        rng = np.random.default_rng(0)

    for p in params:
        p.grad = None
    loss = f()
    if loss.data.size != 1:
        raise ShapeError(f"grad_check: f must return a scalar tensor, got shape {loss.shape}")
    loss.backward()
    analytic = [None if p.grad is None else p.grad.copy() for p in params]

    def probe(flat, j, orig, h):
        flat[j] = orig + h
        hi = float(f().data.reshape(()))
        flat[j] = orig - h
        lo = float(f().data.reshape(()))
        flat[j] = orig
        return (hi - lo) / (2 * h)

    worst = 0.0
    probed = excluded = 0
    for i, p in enumerate(params):
        flat = p.data.reshape(-1)
        eligible = np.arange(flat.size)
        if masks is not None and masks[i] is not None:
            eligible = eligible[masks[i].reshape(-1)]
        if eligible.size == 0:
            continue
        take = min(coords_per_param, eligible.size)
        coords = rng.choice(eligible, size=take, replace=False)
        for j in coords:
            orig = flat[j]
            numeric = probe(flat, j, orig, step)
            a = 0.0 if analytic[i] is None else float(analytic[i].reshape(-1)[j])
            if not (np.isfinite(numeric) and np.isfinite(a)):
                raise NumericError(f"grad_check: non-finite estimate at param {i}, coord {j}: "
                                   f"analytic={a}, numeric={numeric}")
            probed += 1
            if exclude_kinks:
                half = probe(flat, j, orig, step / 2)
                if abs(numeric - half) / max(abs(numeric), abs(half), 1e-8) > kink_tol:
                    excluded += 1
                    continue
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, rel)
    if exclude_kinks and probed and excluded > probed // 2:
        raise NumericError(
            f"grad_check: {excluded}/{probed} probes excluded as kink-adjacent; "
            f"the sampled inputs sit on non-differentiable points"
        )
    return worst
