"""Image ingestion, training-patch sampling and contrast weights."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DatasetError, DimensionError, SamplingExhaustedError

# Rec.601 luma weights.
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")

POSITIVE = "positive"
NEGATIVE = "negative"
UNLABELED = "unlabeled"


@dataclass
class Patch:
    """Square luminance patch cut from an image."""

    values: np.ndarray
    label: str = UNLABELED
    origin: tuple[int, int] | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise DimensionError(f"patch must be square, got shape {self.values.shape}")
        if self.values.shape[0] == 0:
            raise DimensionError("patch side must be positive")

    @property
    def side(self) -> int:
        return self.values.shape[0]


def luminance(rgb) -> np.ndarray:
    """Convert an 8-bit image to luminance in [0, 1].

    Accepts ``H x W x 3`` (RGB), ``H x W x 4`` (alpha is dropped) or an
    already single-channel ``H x W`` array.
    """
    arr = np.asarray(rgb)
    if arr.size == 0 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise DimensionError(f"zero-sized image {arr.shape}")
    arr = arr.astype(np.float64)
    if arr.ndim == 2:
        gray = arr
    elif arr.ndim == 3 and arr.shape[2] in (3, 4):
        gray = arr[..., :3] @ LUMA_WEIGHTS
    else:
        raise DimensionError(f"unsupported image shape {arr.shape}")
    return np.clip(gray / 255.0, 0.0, 1.0)


def load_image(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB", "RGBA"):
            im = im.convert("RGB")
        return luminance(np.asarray(im))


def load_mask(path) -> np.ndarray:
    """Read an 8-bit mask; pixels above 127 are salient."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return arr > 127


def list_pairs(root) -> list[tuple[str, Path, Path]]:
    """Pair ``root/images/<name>.*`` with ``root/masks/<name>.png``.

    Returns ``(name, image_path, mask_path)`` sorted by name. Any image
    without a mask (or mask without an image) raises DatasetError.
    """
    root = Path(root)
    img_dir, mask_dir = root / "images", root / "masks"
    if not img_dir.is_dir() or not mask_dir.is_dir():
        raise DatasetError(f"{root} must contain images/ and masks/ directories")
    images = {p.stem: p for p in sorted(img_dir.iterdir()) if p.suffix.lower() in IMAGE_SUFFIXES}
    masks = {p.stem: p for p in sorted(mask_dir.iterdir()) if p.suffix.lower() == ".png"}
    missing = [f"masks/{n}.png" for n in sorted(set(images) - set(masks))]
    missing += [f"images/{n}.(png|jpg)" for n in sorted(set(masks) - set(images))]
    if missing:
        raise DatasetError("unpaired dataset files", missing)
    if not images:
        raise DatasetError(f"no image/mask pairs found under {root} (0 pairs)")
    return [(n, images[n], masks[n]) for n in sorted(images)]


def _coverage_table(mask: np.ndarray) -> np.ndarray:
    # Summed-area table with a zero border.
    sat = np.zeros((mask.shape[0] + 1, mask.shape[1] + 1))
    sat[1:, 1:] = np.cumsum(np.cumsum(mask, axis=0), axis=1)
    return sat


def _coverage(sat, r, c, side):
    total = sat[r + side, c + side] - sat[r, c + side] - sat[r + side, c] + sat[r, c]
    return total / (side * side)


def _label_for(cov, pos_cover, neg_cover):
    if cov >= pos_cover:
        return POSITIVE
    if cov <= neg_cover:
        return NEGATIVE
    return None


def draw_patch(image, mask, patch_side, pos_cover, neg_cover, rng, sat=None):
    """One uniform draw; returns a labeled Patch or None if it straddles."""
    h, w = image.shape
    if sat is None:
        sat = _coverage_table(mask)
    r = int(rng.integers(0, h - patch_side + 1))
    c = int(rng.integers(0, w - patch_side + 1))
    label = _label_for(_coverage(sat, r, c, patch_side), pos_cover, neg_cover)
    if label is None:
        return None
    values = image[r:r + patch_side, c:c + patch_side].copy()
    return Patch(values, label, (r, c))


def _check_sampling_args(image, mask, patch_side, pos_cover, neg_cover):
    if image.shape != mask.shape:
        raise DimensionError(f"image {image.shape} and mask {mask.shape} differ")
    if not 0 < patch_side <= min(image.shape):
        raise DimensionError(f"patch side {patch_side} does not fit image {image.shape}")
    if not 0 <= neg_cover < pos_cover <= 1:
        raise ValueError("need 0 <= neg_cover < pos_cover <= 1")


def sample_training_patches(image, mask, patch_side, count, pos_cover=0.8,
                            neg_cover=0.2, seed=0, label=None) -> list[Patch]:
    """Sample ``count`` labeled patches at uniformly random locations.

    A patch is positive when its mask coverage is at least ``pos_cover``
    and negative when at most ``neg_cover``; anything in between is
    discarded and redrawn. Passing ``label`` keeps only that class.
    At most ``100 * count`` draws are made.
    """
    image = np.asarray(image, dtype=np.float64)
    mask = np.asarray(mask).astype(bool)
    _check_sampling_args(image, mask, patch_side, pos_cover, neg_cover)
    rng = np.random.default_rng(seed)
    sat = _coverage_table(mask)
    out: list[Patch] = []
    budget = 100 * count
    draws = 0
    while len(out) < count:
        if draws >= budget:
            raise SamplingExhaustedError(count, len(out), draws)
        draws += 1
        p = draw_patch(image, mask, patch_side, pos_cover, neg_cover, rng, sat)
        if p is not None and (label is None or p.label == label):
            out.append(p)
    return out


def sample_dataset_patches(pairs, patch_side, count, label, pos_cover=0.8,
                           neg_cover=0.2, seed=0) -> list[Patch]:
    """Sample ``count`` patches of one class across several (image, mask) pairs.

    Each draw first picks an image uniformly, then a location. The same
    ``100 * count`` draw budget applies.
    """
    pairs = [(np.asarray(i, dtype=np.float64), np.asarray(m).astype(bool)) for i, m in pairs]
    for image, mask in pairs:
        _check_sampling_args(image, mask, patch_side, pos_cover, neg_cover)
    tables = [_coverage_table(m) for _, m in pairs]
    rng = np.random.default_rng(seed)
    out: list[Patch] = []
    draws = 0
    while len(out) < count:
        if draws >= 100 * count:
            raise SamplingExhaustedError(count, len(out), draws)
        draws += 1
        i = int(rng.integers(len(pairs)))
        p = draw_patch(pairs[i][0], pairs[i][1], patch_side, pos_cover, neg_cover, rng, tables[i])
        if p is not None and p.label == label:
            out.append(p)
    return out


def downsample_patch(patch: Patch, target_side: int) -> Patch:
    """Shrink a patch; exact block averaging when the sides divide evenly."""
    side = patch.side
    if target_side > side:
        raise DimensionError(f"cannot upsample patch from {side} to {target_side}")
    if target_side <= 0:
        raise DimensionError("target side must be positive")
    if side % target_side == 0:
        f = side // target_side
        values = patch.values.reshape(target_side, f, target_side, f).mean(axis=(1, 3))
    else:
        im = Image.fromarray(patch.values.astype(np.float32), mode="F")
        im = im.resize((target_side, target_side), Image.BILINEAR)
        values = np.clip(np.asarray(im, dtype=np.float64), 0.0, 1.0)
    return Patch(values, patch.label, patch.origin)


def vectorize(patch) -> np.ndarray:
    """Column-major scan of a patch into a length side**2 vector."""
    values = patch.values if isinstance(patch, Patch) else np.asarray(patch)
    return values.flatten(order="F")


def devectorize(vec, side=None) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64)
    if side is None:
        side = int(round(np.sqrt(vec.size)))
    if side * side != vec.size:
        raise DimensionError(f"length {vec.size} is not {side}**2")
    return vec.reshape(side, side, order="F")


def contrast_weights(patch) -> np.ndarray:
    """Per-pixel relative brightness contrast, in vectorized order.

    ``w_j = (p_j - mean(p)) / max(p)``; a patch whose maximum is 0 gets
    all-zero weights.
    """
    v = vectorize(patch) if isinstance(patch, Patch) else np.asarray(patch, dtype=np.float64)
    peak = v.max()
    if peak <= 0:
        return np.zeros_like(v, dtype=np.float64)
    return (v - v.mean()) / peak


def stack_patches(patches) -> tuple[np.ndarray, np.ndarray]:
    """Column-stack patches into ``X`` (n x m) and their weights ``W`` (n x m)."""
    if not patches:
        raise DimensionError("no patches to stack")
    X = np.column_stack([vectorize(p) for p in patches])
    W = np.column_stack([contrast_weights(x) for x in X.T])
    return X, W
