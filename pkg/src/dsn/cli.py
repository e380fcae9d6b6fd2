"""Command-line interface for training, inference, evaluation, and compression.

Every run writes a manifest (resolved settings, model hash, library
versions) next to its outputs so results can be traced without a database.

Exit codes are a stable contract: 0 success, 1 usage error, 2 data error
(unreadable/malformed inputs, shape violations), 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
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
    bits_per_pixel,
    compress,
    decompress,
    load_bundle,
    rate_distortion_report,
    save_bundle,
)
from .errors import DataError, DsnError, NumericError, ShapeError
from .imaging import (
    Image,
    center_crop_to_multiple,
    psnr,
    read_image,
    rgb_to_y,
    ssim,
    to_image,
    to_tensor,
    write_pgm,
    write_png,
)
from .layers import QBReluParams
from .model import DsnModel, ModelConfig, load_checkpoint, model_hash, save_checkpoint
from .resample import DEGRADATIONS, Interp, degradation_matrix, resize
from .trainer import (
    TrainConfig,
    build_patchset,
    l1_loss,
    load_train_config,
    train_job,
    train_sr_baseline,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems through our exit-code contract."""

    def error(self, message):
        raise _UsageError(message)


def _thread_cap() -> int | None:
    raw = os.environ.get("DSN_THREADS")
    if not raw:
        return None
    try:
        n = max(1, int(raw))
    except ValueError:
        raise _UsageError(f"DSN_THREADS must be an integer, got {raw!r}")
    try:
        from threadpoolctl import threadpool_limits

        threadpool_limits(n)
    except ImportError:
        pass
    return n


def _write_manifest(directory: Path, command: str, settings: dict,
                    model_digest: bytes | None = None, warnings: list[str] | None = None):
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "settings": settings,
        "model_hash": model_digest.hex() if model_digest else None,
        "versions": {
            "dsn": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
        "dsn_threads": os.environ.get("DSN_THREADS"),
        "warnings": warnings or [],
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _parse_override(raw: str) -> tuple[str, object]:
    if "=" not in raw:
        raise _UsageError(f"--set expects key=value, got {raw!r}")
    key, _, val = raw.partition("=")
    try:
        value = json.loads(val)
    except ValueError:
        value = val
    return key.strip(), value


def _build_configs(args) -> tuple[TrainConfig, ModelConfig]:
    """Resolve train + model configs from file, flags, and --set overrides."""
    if args.config:
        cfg = load_train_config(args.config)
    else:
        cfg = TrainConfig(scale=args.scale)
    updates = {}
    if args.scale is not None:
        updates["scale"] = args.scale
    if args.epochs is not None:
        updates["epochs"] = args.epochs
    if args.seed is not None:
        updates["seed"] = args.seed
    model_updates = {}
    for raw in args.set or []:
        key, value = _parse_override(raw)
        if key.startswith("model."):
            model_updates[key[len("model."):]] = value
        else:
            updates[key] = value
    known = {f.name for f in dataclasses.fields(TrainConfig)}
    bad = set(updates) - known
    if bad:
        raise _UsageError(f"unknown train setting(s): {', '.join(sorted(bad))}")
    if "patch_size" not in updates and "scale" in updates:
        updates["patch_size"] = 0  # re-derive the default for the new scale
    cfg = dataclasses.replace(cfg, **updates)

    mcfg = ModelConfig(scale=cfg.scale)
    if model_updates:
        if "scale" in model_updates:
            raise _UsageError("model scale always follows the train scale; set --scale instead")
        known = {f.name for f in dataclasses.fields(ModelConfig)}
        bad = set(model_updates) - known
        if bad:
            raise _UsageError(f"unknown model setting(s): {', '.join(sorted(bad))}")
        if "down_widths" in model_updates:
            model_updates["down_widths"] = tuple(model_updates["down_widths"])
        if "qbrelu" in model_updates:
            q = model_updates["qbrelu"]
            model_updates["qbrelu"] = QBReluParams(q["t_min"], q["t_max"], q["levels"])
        mcfg = dataclasses.replace(mcfg, **model_updates)
    return cfg, mcfg


def _load_hr_tensor(path, scale: int, auto_crop: bool):
    img = rgb_to_y(read_image(path))
    if img.height % scale or img.width % scale:
        if not auto_crop:
            raise DataError(
                f"{path}: {img.width}x{img.height} not divisible by scale {scale}; "
                f"pass --auto-crop to center-crop"
            )
        img, _, _ = center_crop_to_multiple(img, scale)
    return img, to_tensor(img)


def _write_image(img: Image, path):
    if str(path).lower().endswith(".pgm"):
        write_pgm(img, path)
    else:
        write_png(img, path)


def _interp_roundtrip(y: Image, s: int, interp: Interp) -> Image:
    lr = resize(y, y.height // s, y.width // s, interp)
    return resize(lr, y.height, y.width, interp)


def _list_images(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"{directory}: not a directory")
    paths = sorted(p for p in directory.iterdir() if p.suffix.lower() in (".png", ".pgm"))
    if not paths:
        raise DataError(f"{directory}: no .png or .pgm images found")
    return paths


# -- subcommands -----------------------------------------------------------------


def cmd_train(args) -> int:
    cfg, mcfg = _build_configs(args)
    out_dir = Path(args.out)
    patchset = build_patchset(args.data, cfg)
    if args.init_from:
        model = load_checkpoint(args.init_from, expected_config=mcfg)
    else:
        model = DsnModel.initialized(mcfg, seed=cfg.seed)
    _write_manifest(out_dir, "train", {
        "train_config": dataclasses.asdict(cfg),
        "model_config": mcfg.to_dict(),
        "data": str(args.data),
        "freeze_down": args.freeze_down,
        "resume": args.resume,
        "patches": len(patchset),
    }, model_digest=model_hash(model))
    model, rows = train_job(model, patchset, cfg, out_dir,
                            freeze_down=args.freeze_down,
                            checkpoint_every=args.checkpoint_every,
                            resume=args.resume)
    final = rows[-1] if rows else {"loss": float("nan")}
    print(f"trained {cfg.epochs} epochs, final loss {final['loss']:.6f}; "
          f"model at {out_dir / 'model.dsnc'}")
    return EXIT_OK


def cmd_down(args) -> int:
    model = load_checkpoint(args.model)
    _, H = _load_hr_tensor(args.input, model.config.scale, args.auto_crop)
    L = to_image(model.forward_down(H))
    _write_image(L, args.output)
    _write_manifest(Path(args.output).parent, "down",
                    {"input": str(args.input), "output": str(args.output)},
                    model_digest=model_hash(model))
    print(f"wrote {args.output} ({L.width}x{L.height})")
    return EXIT_OK


def cmd_up(args) -> int:
    model = load_checkpoint(args.model)
    img = rgb_to_y(read_image(args.input))
    S = to_image(model.forward_up(to_tensor(img)))
    _write_image(S, args.output)
    _write_manifest(Path(args.output).parent, "up",
                    {"input": str(args.input), "output": str(args.output)},
                    model_digest=model_hash(model))
    print(f"wrote {args.output} ({S.width}x{S.height})")
    return EXIT_OK


def cmd_roundtrip(args) -> int:
    model = load_checkpoint(args.model)
    s = model.config.scale
    y, H = _load_hr_tensor(args.input, s, args.auto_crop)
    _, S = model.forward_roundtrip(H)
    restored = to_image(S)
    print(f"dsn: psnr={psnr(y, restored, border_crop=s):.4f} "
          f"ssim={ssim(y, restored, border_crop=s):.4f}")
    for name in args.baseline or []:
        ref = _interp_roundtrip(y, s, DEGRADATIONS[name])
        print(f"{name}: psnr={psnr(y, ref, border_crop=s):.4f} "
              f"ssim={ssim(y, ref, border_crop=s):.4f}")
    if args.out:
        _write_image(restored, args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_checkpoint(args.model)
    s = model.config.scale
    baselines = [b for b in (args.baselines.split(",") if args.baselines else []) if b]
    for b in baselines:
        if b not in DEGRADATIONS:
            raise _UsageError(f"unknown baseline {b!r}; choose from {', '.join(DEGRADATIONS)}")

    rows = []
    warnings = []
    for path in _list_images(args.data):
        try:
            y = rgb_to_y(read_image(path))
        except DsnError as e:
            warnings.append(f"{path.name}: {e}")
            print(f"warning: skipping {path.name}: {e}", file=sys.stderr)
            continue
        y, _, _ = center_crop_to_multiple(y, s)
        _, S = model.forward_roundtrip(to_tensor(y))
        rows.append({"image": path.name, "method": "dsn",
                     "psnr_db": psnr(y, to_image(S), border_crop=s),
                     "ssim": ssim(y, to_image(S), border_crop=s)})
        for name in baselines:
            ref = _interp_roundtrip(y, s, DEGRADATIONS[name])
            rows.append({"image": path.name, "method": name,
                         "psnr_db": psnr(y, ref, border_crop=s),
                         "ssim": ssim(y, ref, border_crop=s)})
    if not rows:
        raise DataError(f"{args.data}: no evaluable images")
    for method in ["dsn"] + baselines:
        sel = [r for r in rows if r["method"] == method]
        rows.append({"image": "mean", "method": method,
                     "psnr_db": float(np.mean([r["psnr_db"] for r in sel])),
                     "ssim": float(np.mean([r["ssim"] for r in sel]))})

    out = Path(args.out)
    with open(out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["image", "method", "psnr_db", "ssim"])
        writer.writeheader()
        writer.writerows(rows)
    _write_manifest(out.parent, "eval", {
        "data": str(args.data), "baselines": baselines, "images": len(_list_images(args.data)),
        "skipped": len(warnings), "border_crop": s,
    }, model_digest=model_hash(model), warnings=warnings)
    print(f"wrote {out} ({len(rows)} rows)")
    return EXIT_OK


def _eval_upsampler_mean_psnr(model: DsnModel, test_images: list[Image], interp: Interp) -> float:
    s = model.config.scale
    scores = []
    for y in test_images:
        lr = resize(y, y.height // s, y.width // s, interp)
        S = model.forward_up(to_tensor(lr))
        scores.append(psnr(y, to_image(S), border_crop=s))
    return float(np.mean(scores))


def cmd_degmatrix(args) -> int:
    cfg, mcfg = _build_configs(args)
    out_dir = Path(args.out)
    patchset = build_patchset(args.data, cfg)
    test_images = []
    for path in _list_images(args.test_data):
        y = rgb_to_y(read_image(path))
        y, _, _ = center_crop_to_multiple(y, cfg.scale)
        test_images.append(y)

    def train_hook(interp: Interp) -> DsnModel:
        model = DsnModel.initialized(mcfg, seed=cfg.seed)
        model, _ = train_sr_baseline(model, patchset, cfg, interp)
        return model

    def eval_hook(model: DsnModel, interp: Interp) -> float:
        return _eval_upsampler_mean_psnr(model, test_images, interp)

    result = degradation_matrix(train_hook, eval_hook, DEGRADATIONS)

    out_dir.mkdir(parents=True, exist_ok=True)
    out = out_dir / "degradation_matrix.csv"
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["train\\test"] + result["names"] + ["avg"])
        for name, row, avg in zip(result["names"], result["matrix"], result["row_avg"]):
            writer.writerow([name] + [f"{v:.4f}" for v in row] + [f"{avg:.4f}"])
    _write_manifest(out_dir, "degmatrix", {
        "train_config": dataclasses.asdict(cfg),
        "model_config": mcfg.to_dict(),
        "data": str(args.data),
        "test_data": str(args.test_data),
        "matrix": result,
    })
    for name, row in zip(result["names"], result["matrix"]):
        print(name, " ".join(f"{v:.2f}" for v in row))
    print(f"wrote {out}")
    return EXIT_OK


def cmd_compress(args) -> int:
    model = load_checkpoint(args.model)
    img = read_image(args.input)
    codec = "external" if args.codec_cmd else "deflate"
    bundle = compress(img, model, codec=codec, codec_cmd=args.codec_cmd)
    save_bundle(bundle, args.output)
    bpp = bits_per_pixel(bundle.size_bytes, bundle.hr_height, bundle.hr_width)
    _write_manifest(Path(args.output).parent, "compress", {
        "input": str(args.input), "output": str(args.output),
        "codec": codec, "bpp": bpp, "bytes": bundle.size_bytes,
    }, model_digest=model_hash(model))
    print(f"wrote {args.output}: {bundle.size_bytes} bytes, {bpp:.4f} bpp")
    return EXIT_OK


def cmd_decompress(args) -> int:
    model = load_checkpoint(args.model)
    bundle = load_bundle(args.input)
    img = decompress(bundle, model, codec_cmd=args.codec_cmd)
    _write_image(img, args.output)
    _write_manifest(Path(args.output).parent, "decompress", {
        "input": str(args.input), "output": str(args.output),
    }, model_digest=model_hash(model))
    print(f"wrote {args.output} ({img.width}x{img.height})")
    return EXIT_OK


def cmd_rdreport(args) -> int:
    model = load_checkpoint(args.model)
    images = [(p.name, read_image(p)) for p in _list_images(args.data)]
    rows = rate_distortion_report(images, model, include_baseline=not args.no_baseline)
    out = Path(args.out)
    with open(out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["image", "method", "bpp", "psnr_db", "ssim"])
        writer.writeheader()
        writer.writerows(rows)
    _write_manifest(out.parent, "rdreport", {
        "data": str(args.data), "rows": len(rows),
    }, model_digest=model_hash(model))
    print(f"wrote {out} ({len(rows)} rows)")
    return EXIT_OK


# -- gradient-check suite -------------------------------------------------------------


def gradcheck_suite(tolerance: float = 1e-4, coords: int = 50) -> list[dict]:
    """Central-difference checks for every differentiable op plus the full model.

    Everything runs at float64.  The composite model check relaxes the
    quantizer to 2**52 levels: the straight-through backward then coincides
    with the true clamp gradient, and the staircase is far below the probe
    step.  Coordinates adjacent to activation kinks (rails, ReLU corner,
    L1 ties) are kept out of the sampled inputs by construction.
    """
    rng = np.random.default_rng(1234)
    results = []

    def mixed(t, mix):
        out = (t.data * mix).sum().reshape(1, 1, 1, 1)

        def backward(g):
            if t.requires_grad:
                t.accumulate_grad(mix * g.reshape(()))

        return Tensor.from_result(out, (t,), backward)

    def check(name, f, params, masks=None):
        err = grad_check(f, params, step=1e-5, coords_per_param=coords, rng=rng, masks=masks)
        results.append({"op": name, "max_rel_err": err, "passed": bool(err < tolerance)})

    x = Tensor(rng.uniform(-1, 1, (2, 3, 8, 8)), requires_grad=True)
    w = Tensor(rng.normal(0, 0.5, (4, 3, 3, 3)), requires_grad=True)
    b = Tensor(rng.normal(0, 0.5, (1, 4, 1, 1)), requires_grad=True)
    mix = rng.normal(size=(2, 4, 8, 8))
    check("conv2d", lambda: mixed(conv2d(x, w, b, stride=1, pad=1), mix), [x, w, b])

    xs = Tensor(rng.uniform(-1, 1, (1, 2, 6, 6)), requires_grad=True)
    ws = Tensor(rng.normal(0, 0.5, (3, 2, 2, 2)), requires_grad=True)
    bs = Tensor(rng.normal(0, 0.5, (1, 3, 1, 1)), requires_grad=True)
    mixs = rng.normal(size=(1, 3, 3, 3))
    check("conv2d/stride2", lambda: mixed(conv2d(xs, ws, bs, stride=2), mixs), [xs, ws, bs])

    xp = Tensor(rng.uniform(-1, 1, (1, 2, 6, 6)), requires_grad=True)
    mixp = rng.normal(size=(1, 2, 2, 2))
    check("avg_pool", lambda: mixed(avg_pool(xp, 3), mixp), [xp])

    xt = Tensor(rng.uniform(-1, 1, (1, 2, 3, 3)), requires_grad=True)
    mixt = rng.normal(size=(1, 2, 9, 9))
    check("tile_upsample", lambda: mixed(tile_upsample(xt, 3), mixt), [xt])

    xsh = Tensor(rng.uniform(-1, 1, (1, 9, 2, 2)), requires_grad=True)
    mixsh = rng.normal(size=(1, 1, 6, 6))
    check("pixel_shuffle", lambda: mixed(pixel_shuffle(xsh, 3), mixsh), [xsh])

    xus = Tensor(rng.uniform(-1, 1, (1, 1, 6, 6)), requires_grad=True)
    mixus = rng.normal(size=(1, 9, 2, 2))
    check("pixel_unshuffle", lambda: mixed(pixel_unshuffle(xus, 3), mixus), [xus])

    vals = rng.uniform(0.05, 1.0, (1, 1, 8, 8))
    vals[:, :, ::2] *= -1  # keep every sample well away from the corner at 0
    xl = Tensor(vals, requires_grad=True)
    mixl = rng.normal(size=(1, 1, 8, 8))
    check("leaky_relu", lambda: mixed(leaky_relu(xl, 0.05), mixl), [xl])

    ca = Tensor(rng.uniform(-1, 1, (1, 2, 4, 4)), requires_grad=True)
    cb = Tensor(rng.uniform(-1, 1, (1, 3, 4, 4)), requires_grad=True)
    mixc = rng.normal(size=(1, 5, 4, 4))
    check("concat_channels", lambda: mixed(concat_channels([ca, cb]), mixc), [ca, cb])

    ea = Tensor(rng.uniform(-1, 1, (1, 1, 4, 4)), requires_grad=True)
    eb = Tensor(rng.uniform(-1, 1, (1, 1, 4, 4)), requires_grad=True)
    mixe = rng.normal(size=(1, 1, 4, 4))
    check("add", lambda: mixed(add(ea, eb), mixe), [ea, eb])
    check("sub", lambda: mixed(sub(ea, eb), mixe), [ea, eb])
    check("scalar_mul", lambda: mixed(scalar_mul(ea, -1.7), mixe), [ea])
    check("reduce_sum", lambda: scalar_mul(reduce_sum(ea), 2.0), [ea])

    ls = Tensor(rng.uniform(0.0, 1.0, (1, 1, 6, 6)), requires_grad=True)
    lh = Tensor(rng.uniform(2.0, 3.0, (1, 1, 6, 6)))  # no sign ties anywhere near ls
    check("l1_loss", lambda: l1_loss(ls, lh), [ls])

    cfg = ModelConfig(scale=2, down_widths=(4, 4, 4), up_input_width=4,
                      dense_depth=2, dense_growth=3, bottleneck_width=4)
    model = DsnModel.initialized(cfg, seed=99).astype(np.float64)
    relaxed = model.with_quantizer(QBReluParams(0.0, 1.0, 2**52))
    H = Tensor(rng.uniform(0.15, 0.85, (1, 1, 8, 8)))
    target = Tensor(rng.uniform(2.0, 3.0, (1, 1, 8, 8)))  # far from S: no L1 ties

    def full():
        _, S = relaxed.forward_roundtrip(H)
        return l1_loss(S, target)

    err = grad_check(full, relaxed.parameters(), step=1e-5,
                     coords_per_param=max(4, coords // 10), rng=rng, exclude_kinks=True)
    results.append({"op": "full_model", "max_rel_err": err, "passed": bool(err < tolerance)})
    return results


def cmd_gradcheck(args) -> int:
    results = gradcheck_suite(tolerance=args.tolerance)
    width = max(len(r["op"]) for r in results)
    for r in results:
        status = "PASS" if r["passed"] else "FAIL"
        print(f"{r['op']:<{width}}  max rel err {r['max_rel_err']:.3e}  {status}")
    if not all(r["passed"] for r in results):
        raise NumericError("gradient check failed")
    print(f"all {len(results)} checks passed at tolerance {args.tolerance:g}")
    return EXIT_OK


# -- argument wiring --------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="dsn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--seed", type=int, default=None, help="override RNG seed")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a train setting or model.<setting>")

    p = sub.add_parser("train", help="co-train a sampler pair on an image directory")
    p.add_argument("--data", required=True, help="directory of training images")
    p.add_argument("--out", required=True, help="run directory for model/logs")
    p.add_argument("--scale", type=int, default=2, choices=(2, 3, 4))
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--config", default=None, help="key = value training config file")
    p.add_argument("--resume", action="store_true", help="continue from the run directory")
    p.add_argument("--freeze-down", action="store_true",
                   help="keep the down-sampler fixed; train the up-sampler only")
    p.add_argument("--init-from", default=None, help="checkpoint to start from")
    p.add_argument("--checkpoint-every", type=int, default=50)
    add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("down", help="down-sample one image with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--auto-crop", action="store_true")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_down)

    p = sub.add_parser("up", help="up-sample one image with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_up)

    p = sub.add_parser("roundtrip", help="down+up one image and report PSNR/SSIM")
    p.add_argument("--model", required=True)
    p.add_argument("--auto-crop", action="store_true")
    p.add_argument("--baseline", action="append", choices=sorted(DEGRADATIONS),
                   help="also report a classical down+up baseline")
    p.add_argument("--out", default=None, help="write the restored image here")
    p.add_argument("input")
    p.set_defaults(func=cmd_roundtrip)

    p = sub.add_parser("eval", help="evaluate a model over a directory")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default="eval.csv")
    p.add_argument("--baselines", default="bicubic",
                   help="comma-separated classical baselines (empty for none)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("degmatrix", help="train/test cross-degradation grid")
    p.add_argument("--data", required=True, help="training images")
    p.add_argument("--test-data", required=True, help="held-out test images")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--scale", type=int, default=3, choices=(2, 3, 4))
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--config", default=None)
    add_common(p)
    p.set_defaults(func=cmd_degmatrix)

    p = sub.add_parser("compress", help="encode an image into a bundle")
    p.add_argument("--model", required=True)
    p.add_argument("--codec-cmd", default=None,
                   help="external compressor template, e.g. 'gzip -c {input} > {output}'")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("decompress", help="decode a bundle back to an image")
    p.add_argument("--model", required=True)
    p.add_argument("--codec-cmd", default=None,
                   help="external decompressor template (for external-codec bundles)")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_decompress)

    p = sub.add_parser("rdreport", help="rate/distortion table over a directory")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default="rdreport.csv")
    p.add_argument("--no-baseline", action="store_true")
    p.set_defaults(func=cmd_rdreport)

    p = sub.add_parser("gradcheck", help="finite-difference audit of every op")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        _thread_cap()
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DsnError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
