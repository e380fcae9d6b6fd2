"""Deterministic synthetic test images.

The metric and training tests need natural-ish content: smooth shading,
soft blobs, oriented texture, and hard edges.  Everything is seeded so the
suite is reproducible.
"""

import numpy as np
from scipy.ndimage import gaussian_filter

from dsn.imaging import Image


def make_gray(seed: int, h: int = 96, w: int = 96) -> Image:
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64) / max(h, w)

    # smooth illumination gradient
    ang = rng.uniform(0, 2 * np.pi)
    img = 0.5 + 0.22 * np.sin(2 * np.pi * (np.cos(ang) * xx + np.sin(ang) * yy) * rng.uniform(0.6, 1.4))

    # low-frequency cloudy structure
    img += 0.28 * gaussian_filter(rng.normal(size=(h, w)), sigma=min(h, w) / 12)

    # oriented mid-frequency texture in a soft window
    tang = rng.uniform(0, np.pi)
    freq = rng.uniform(6, 14)
    cy, cx = rng.uniform(0.25, 0.75, size=2)
    window = np.exp(-(((yy - cy * h / max(h, w)) ** 2 + (xx - cx * w / max(h, w)) ** 2) / 0.04))
    img += 0.18 * window * np.sin(2 * np.pi * freq * (np.cos(tang) * xx + np.sin(tang) * yy))

    # a few hard-edged rectangles and discs (skipped on tiny canvases)
    if min(h, w) >= 24:
        for _ in range(rng.integers(2, 5)):
            level = rng.uniform(-0.35, 0.35)
            if rng.uniform() < 0.5:
                y0, x0 = rng.integers(0, h - 8), rng.integers(0, w - 8)
                hh, ww = rng.integers(6, max(7, h // 3)), rng.integers(6, max(7, w // 3))
                img[y0:y0 + hh, x0:x0 + ww] += level
            else:
                cy2, cx2 = rng.integers(8, h - 8), rng.integers(8, w - 8)
                r = rng.integers(4, max(5, min(h, w) // 6))
                mask = (np.mgrid[0:h, 0:w][0] - cy2) ** 2 + (np.mgrid[0:h, 0:w][1] - cx2) ** 2 <= r * r
                img[mask] += level

    img += 0.01 * rng.normal(size=(h, w))  # sensor-ish grain
    return Image(np.clip(np.floor(img * 255 + 0.5), 0, 255).astype(np.uint8))


def make_rgb(seed: int, h: int = 96, w: int = 96) -> Image:
    base = make_gray(seed, h, w).data.astype(np.float64)
    rng = np.random.default_rng(seed + 1)
    planes = []
    for _ in range(3):
        gain = rng.uniform(0.7, 1.3)
        shift = rng.uniform(-20, 20)
        planes.append(np.clip(base * gain + shift, 0, 255))
    return Image(np.stack(planes, axis=-1).astype(np.uint8))


def make_corpus(directory, seeds, h: int = 96, w: int = 96, rgb: bool = False):
    """Write numbered PNGs into ``directory`` and return the paths."""
    from dsn.imaging import write_png

    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for seed in seeds:
        img = make_rgb(seed, h, w) if rgb else make_gray(seed, h, w)
        path = directory / f"img{seed:03d}.png"
        write_png(img, path)
        paths.append(path)
    return paths
