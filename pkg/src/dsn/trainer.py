"""Training: patch pipeline, L1 loss, Adam, schedule, and the co-training loop.

The down-sampler is never given low-resolution ground truth; the only signal
is the L1 reconstruction error of the full roundtrip, flowing back through
the quantizer's straight-through gradient.  Training is bitwise
deterministic for a fixed seed and a single worker.

Desk-scale defaults (batch 16, 300 epochs) keep runs in CPU minutes; the
large-corpus recipe (batch 256) is reachable through the config.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .errors import DataError, NumericError, ShapeError
from .imaging import read_image, rgb_to_y, to_tensor
from .model import DsnModel, load_checkpoint, save_checkpoint
from .resample import Interp, resize

__all__ = [
    "TrainConfig",
    "PatchSet",
    "build_patchset",
    "l1_loss",
    "AdamState",
    "adam_step",
    "lr_at",
    "train",
    "train_job",
    "train_sr_baseline",
    "load_train_config",
    "dump_train_config",
    "DEFAULT_PATCH_SIZE",
]

#: Training sub-image edge per scale factor.
DEFAULT_PATCH_SIZE = {2: 60, 3: 69, 4: 72}

#: Epochs between learning-rate decay steps.
LR_DECAY_INTERVAL = 50


@dataclass
class TrainConfig:
    """Optimizer, schedule, patch, and augmentation settings.

    The loss is L1, always.  ``lr_decay`` applies every 50 epochs, floored at
    ``lr_floor``; the residual-output layer of each subnetwork trains at
    ``final_layer_lr_mult`` times the base rate.
    """

    scale: int = 2
    patch_size: int = 0  # 0 -> default for the scale
    batch_size: int = 16
    lr_start: float = 1e-3
    lr_floor: float = 1e-5
    lr_decay: float = 0.5
    epochs: int = 300
    final_layer_lr_mult: float = 0.1
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    rotations: bool = True

    def __post_init__(self):
        if self.patch_size == 0:
            self.patch_size = DEFAULT_PATCH_SIZE.get(self.scale, 0)
        if self.patch_size <= 0 or self.patch_size % self.scale:
            raise DataError(
                f"patch size {self.patch_size} must be positive and divisible by scale {self.scale}"
            )
        if self.lr_floor > self.lr_start:
            raise DataError("lr_floor must not exceed lr_start")
        if self.batch_size < 1:
            raise DataError("batch_size must be >= 1")


_BOOL_FIELDS = {"rotations"}
_INT_FIELDS = {"scale", "patch_size", "batch_size", "epochs", "seed"}


def load_train_config(path) -> TrainConfig:
    """Parse the ``key = value`` text format ('#' starts a comment)."""
    values = {}
    fields = {f.name for f in dataclasses.fields(TrainConfig)}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in fields:
            raise DataError(f"{path}:{lineno}: unknown setting {key!r}")
        if key in _BOOL_FIELDS:
            if val.lower() not in ("true", "false", "1", "0"):
                raise DataError(f"{path}:{lineno}: {key} must be true/false")
            values[key] = val.lower() in ("true", "1")
        elif key in _INT_FIELDS:
            values[key] = int(val)
        else:
            values[key] = float(val)
    return TrainConfig(**values)


def dump_train_config(cfg: TrainConfig) -> str:
    lines = []
    for f in dataclasses.fields(TrainConfig):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name} = {str(v).lower() if isinstance(v, bool) else v}")
    return "\n".join(lines) + "\n"


# -- patch pipeline ---------------------------------------------------------------


@dataclass
class PatchSet:
    """HR luminance patches plus where each one came from."""

    patches: np.ndarray  # (N, 1, p, p) float32 in [0, 1]
    provenance: list[tuple[str, int, int, int]]  # (image id, rotation deg, top, left)

    def __len__(self):
        return self.patches.shape[0]


def _tile_positions(extent: int, patch: int) -> range:
    return range(0, extent - patch + 1, patch)


def build_patchset(image_dir, cfg: TrainConfig) -> PatchSet:
    """Tile every image (and its three rotations) into non-overlapping patches.

    Stride equals patch size, partial border tiles are dropped, so within one
    rotation every covered pixel appears exactly once.  Order is a seeded
    shuffle of the canonical (file, rotation, raster) order.
    """
    image_dir = Path(image_dir)
    paths = sorted(
        p for p in image_dir.iterdir() if p.suffix.lower() in (".png", ".pgm")
    ) if image_dir.is_dir() else []
    if not paths:
        raise DataError(f"{image_dir}: no .png or .pgm images found")

    p = cfg.patch_size
    chunks, provenance, skipped = [], [], []
    rotations = (0, 90, 180, 270) if cfg.rotations else (0,)
    for path in paths:
        y = rgb_to_y(read_image(path)).data
        if min(y.shape) < p:
            skipped.append(path.name)
            continue
        for rot in rotations:
            plane = np.rot90(y, rot // 90)
            hh, ww = plane.shape
            for top in _tile_positions(hh, p):
                for left in _tile_positions(ww, p):
                    chunks.append(plane[top:top + p, left:left + p])
                    provenance.append((path.name, rot, top, left))
    if not chunks:
        raise DataError(
            f"{image_dir}: every image is smaller than one {p}x{p} patch "
            f"(skipped: {', '.join(skipped)})"
        )

    patches = (np.stack(chunks).astype(np.float32) / np.float32(255))[:, None]
    order = np.random.default_rng(cfg.seed).permutation(len(chunks))
    return PatchSet(patches[order], [provenance[i] for i in order])


# -- loss and optimizer --------------------------------------------------------------


def l1_loss(S: Tensor, H: Tensor) -> Tensor:
    """Mean absolute error as a scalar graph node; subgradient 0 at ties."""
    if S.shape != H.shape:
        raise ShapeError(f"l1_loss: shape mismatch {S.shape} vs {H.shape}")
    diff = S.data - H.data
    out = np.abs(diff).mean(dtype=diff.dtype).reshape(1, 1, 1, 1)
    sign = np.sign(diff)
    scale = diff.dtype.type(1.0 / diff.size)

    def backward(g):
        gs = g.reshape(()) * scale
        if S.requires_grad:
            S.accumulate_grad(sign * gs)
        if H.requires_grad:
            H.accumulate_grad(-sign * gs)

    return Tensor.from_result(out, (S, H), backward)


@dataclass
class AdamState:
    """First/second moment buffers, aligned with one parameter list."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: list[Tensor]) -> "AdamState":
        return cls(
            m=[np.zeros_like(p.data) for p in params],
            v=[np.zeros_like(p.data) for p in params],
        )


def adam_step(params: list[Tensor], state: AdamState, lr: float,
              lr_mults: list[float] | None = None,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One bias-corrected Adam update; parameters without grads stay put."""
    if len(state.m) != len(params):
        raise ShapeError(f"adam state holds {len(state.m)} buffers for {len(params)} params")
    state.step += 1
    t = state.step
    correct1 = 1.0 - beta1 ** t
    correct2 = 1.0 - beta2 ** t
    for i, p in enumerate(params):
        g = p.grad
        if g is None:
            continue
        if not np.isfinite(g).all():
            raise NumericError(f"adam_step: non-finite gradient in parameter {i} "
                               f"(shape {p.data.shape}) at step {t}")
        dt = p.data.dtype.type
        b1, b2 = dt(beta1), dt(beta2)
        state.m[i] = b1 * state.m[i] + (1 - b1) * g
        state.v[i] = b2 * state.v[i] + (1 - b2) * (g * g)
        m_hat = state.m[i] / dt(correct1)
        v_hat = state.v[i] / dt(correct2)
        mult = 1.0 if lr_mults is None else lr_mults[i]
        p.data -= dt(lr * mult) * m_hat / (np.sqrt(v_hat) + dt(eps))


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """Stepped decay: lr_start * lr_decay^(epoch // 50), floored at lr_floor."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return max(cfg.lr_floor, cfg.lr_start * cfg.lr_decay ** (epoch // LR_DECAY_INTERVAL))


# -- training loops -----------------------------------------------------------------


def _training_params(model: DsnModel, cfg: TrainConfig, freeze_down: bool):
    named = [(n, t) for n, t in model.named_parameters() if not (freeze_down and n.startswith("down."))]
    params = [t for _, t in named]
    mults = [model.lr_multiplier(n, cfg.final_layer_lr_mult) for n, _ in named]
    return params, mults


def train(model: DsnModel, patchset: PatchSet, cfg: TrainConfig, *,
          freeze_down: bool = False, start_epoch: int = 0,
          state: AdamState | None = None, max_iterations: int | None = None,
          on_epoch=None):
    """Minimize the roundtrip L1 error over the patch set.

    Returns (log rows, adam state).  Each row is a dict with epoch, lr, loss
    (epoch mean), and psnr (of the final batch, on the float pipeline).
    ``start_epoch``/``state`` resume a run: the epoch shuffles for skipped
    epochs are re-drawn so the trajectory is identical to an uninterrupted
    one.  Raises :class:`NumericError` as soon as the loss goes non-finite.
    """
    if len(patchset) == 0:
        raise DataError("cannot train on an empty patch set")
    params, mults = _training_params(model, cfg, freeze_down)
    if state is None:
        state = AdamState.for_params(params)

    rng = np.random.default_rng(cfg.seed)
    for _ in range(start_epoch):
        rng.permutation(len(patchset))

    rows = []
    iterations = state.step
    for epoch in range(start_epoch, cfg.epochs):
        lr = lr_at(epoch, cfg)
        order = rng.permutation(len(patchset))
        batch_losses = []
        last_mse = None
        for lo in range(0, len(order), cfg.batch_size):
            if max_iterations is not None and iterations >= max_iterations:
                break
            idx = order[lo:lo + cfg.batch_size]
            H = Tensor(patchset.patches[idx])
            _, S = model.forward_roundtrip(H)
            loss = l1_loss(S, H)
            value = float(loss.data.reshape(()))
            if not np.isfinite(value):
                raise NumericError(f"training loss became {value} at epoch {epoch}")
            model.zero_grad()
            loss.backward()
            adam_step(params, state, lr, mults,
                      beta1=cfg.adam_beta1, beta2=cfg.adam_beta2, eps=cfg.adam_eps)
            batch_losses.append(value)
            last_mse = float(np.mean((S.data - H.data) ** 2))
            iterations += 1
        if not batch_losses:
            break
        row = {
            "epoch": epoch,
            "lr": lr,
            "loss": float(np.mean(batch_losses)),
            "psnr": float(-10 * np.log10(last_mse)) if last_mse else float("inf"),
        }
        rows.append(row)
        if on_epoch is not None:
            on_epoch(row, model)
        if max_iterations is not None and iterations >= max_iterations:
            break
    return rows, state


def train_job(model: DsnModel, patchset: PatchSet, cfg: TrainConfig, out_dir, *,
              freeze_down: bool = False, checkpoint_every: int = 50,
              resume: bool = False):
    """File-backed training run: loss CSV, periodic checkpoints, resumability.

    Layout under ``out_dir``: ``model.dsnc`` (latest), ``loss.csv``, and
    ``trainstate.npz`` (optimizer moments + epoch counter).  On a non-finite
    loss the last good checkpoint is left in place and the error re-raised.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt = out_dir / "model.dsnc"
    state_path = out_dir / "trainstate.npz"
    csv_path = out_dir / "loss.csv"

    start_epoch = 0
    state = None
    if resume and ckpt.exists() and state_path.exists():
        model = load_checkpoint(ckpt, expected_config=model.config)
        blob = np.load(state_path)
        start_epoch = int(blob["epoch"])
        count = int(blob["count"])
        state = AdamState(
            m=[blob[f"m{i}"] for i in range(count)],
            v=[blob[f"v{i}"] for i in range(count)],
            step=int(blob["step"]),
        )
    if state is None:
        state = AdamState.for_params(_training_params(model, cfg, freeze_down)[0])
    if not csv_path.exists() or not resume:
        csv_path.write_text("epoch,lr,loss,psnr\n")

    def checkpoint(epoch_next: int):
        # Adam buffers are mutated in place, so `state` is always current.
        save_checkpoint(model, ckpt)
        arrays = {f"m{i}": m for i, m in enumerate(state.m)}
        arrays.update({f"v{i}": v for i, v in enumerate(state.v)})
        np.savez(state_path, epoch=epoch_next, step=state.step, count=len(state.m), **arrays)

    rows_seen = []

    def on_epoch(row, mdl):
        rows_seen.append(row)
        with open(csv_path, "a") as fh:
            fh.write(f"{row['epoch']},{row['lr']:.8g},{row['loss']:.8g},{row['psnr']:.5f}\n")
        if (row["epoch"] + 1) % checkpoint_every == 0:
            checkpoint(row["epoch"] + 1)

    train(model, patchset, cfg, freeze_down=freeze_down,
          start_epoch=start_epoch, state=state, on_epoch=on_epoch)
    checkpoint(cfg.epochs)
    return model, rows_seen


def train_sr_baseline(model: DsnModel, patchset: PatchSet, cfg: TrainConfig,
                      degradation: Interp, max_iterations: int | None = None):
    """Train the up-sampler alone on (classically degraded LR, HR) pairs.

    The down-sampler is untouched; this is the harness for cross-degradation
    experiments where the restorer is fit to one fixed interpolation.
    Returns (model, log rows).
    """
    if len(patchset) == 0:
        raise DataError("cannot train on an empty patch set")
    s = model.config.scale
    p = cfg.patch_size
    lr_all = resize(Tensor(patchset.patches), p // s, p // s, degradation)

    params, mults = _training_params(model, cfg, freeze_down=True)
    state = AdamState.for_params(params)
    rng = np.random.default_rng(cfg.seed)
    rows = []
    iterations = 0
    for epoch in range(cfg.epochs):
        lr = lr_at(epoch, cfg)
        order = rng.permutation(len(patchset))
        batch_losses = []
        for lo in range(0, len(order), cfg.batch_size):
            if max_iterations is not None and iterations >= max_iterations:
                break
            idx = order[lo:lo + cfg.batch_size]
            H = Tensor(patchset.patches[idx])
            L = Tensor(lr_all.data[idx])
            S = model.forward_up(L)
            loss = l1_loss(S, H)
            value = float(loss.data.reshape(()))
            if not np.isfinite(value):
                raise NumericError(f"baseline training loss became {value} at epoch {epoch}")
            model.zero_grad()
            loss.backward()
            adam_step(params, state, lr, mults,
                      beta1=cfg.adam_beta1, beta2=cfg.adam_beta2, eps=cfg.adam_eps)
            batch_losses.append(value)
            iterations += 1
        if not batch_losses:
            break
        rows.append({"epoch": epoch, "lr": lr, "loss": float(np.mean(batch_losses))})
        if max_iterations is not None and iterations >= max_iterations:
            break
    return model, rows
