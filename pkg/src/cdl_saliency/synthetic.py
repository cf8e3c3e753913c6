"""Synthetic bars-on-noise corpus for tests and demos.

Images have a dark, noisy textured background with a few bright, nearly
flat rectangular bars; the mask marks the bars.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def make_image(size=64, seed=0, n_bars=None, bar_min=16, bar_max=28,
               background=0.15, background_noise=0.08, bar_level=0.85, bar_noise=0.02):
    """One (gray image, bool mask) pair of shape ``size x size``."""
    rng = np.random.default_rng(seed)
    img = background + background_noise * rng.standard_normal((size, size))
    mask = np.zeros((size, size), dtype=bool)
    if n_bars is None:
        n_bars = int(rng.integers(1, 3))
    for _ in range(n_bars):
        h = int(rng.integers(bar_min, bar_max + 1))
        w = int(rng.integers(bar_min, bar_max + 1))
        if rng.random() < 0.5:
            h, w = h, max(w, 2 * bar_min)
        w = min(w, size)
        h = min(h, size)
        r = int(rng.integers(0, size - h + 1))
        c = int(rng.integers(0, size - w + 1))
        mask[r:r + h, c:c + w] = True
    bars = bar_level + bar_noise * rng.standard_normal((size, size))
    img = np.where(mask, bars, img)
    return np.clip(img, 0.0, 1.0), mask


def make_corpus(n_images, size=64, seed=0, **kwargs):
    seeds = np.random.SeedSequence(seed).generate_state(n_images)
    return [make_image(size, int(s), **kwargs) for s in seeds]


def write_dataset(root, corpus, prefix="img"):
    """Write ``root/images/*.png`` and ``root/masks/*.png``; returns the names."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    names = []
    for i, (img, mask) in enumerate(corpus):
        name = f"{prefix}{i:03d}"
        gray = np.round(img * 255).astype(np.uint8)
        Image.fromarray(np.stack([gray] * 3, axis=-1)).save(root / "images" / f"{name}.png")
        Image.fromarray(mask.astype(np.uint8) * 255).save(root / "masks" / f"{name}.png")
        names.append(name)
    return names
