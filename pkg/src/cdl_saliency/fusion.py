"""Global-gradient fusion of saliency maps.

Each map's weight at a pixel is the slope of that map's cumulative
intensity histogram at the pixel's value, divided by the slopes summed
over all maps plus a small ``phi``.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError
from .saliency import FUSED, SaliencyMap, as_array, normalize

DEFAULT_BINS = 256
DEFAULT_PHI = 0.001


def bin_index(values, bins=DEFAULT_BINS):
    v = np.asarray(values, dtype=np.float64)
    return np.minimum(np.floor(v * bins), bins - 1).clip(0).astype(np.int64)


def cumulative_histogram(m, bins=DEFAULT_BINS) -> np.ndarray:
    """Fraction of pixels whose bin is at most ``b``, for each bin ``b``."""
    values = as_array(m)
    if values.size == 0:
        raise DimensionError("empty saliency map")
    if bins < 2:
        raise ValueError("bins must be at least 2")
    counts = np.bincount(bin_index(values, bins).ravel(), minlength=bins)
    return np.cumsum(counts) / values.size


def global_gradient(cdf, intensity):
    """Slope of ``cdf`` at the bin of ``intensity`` (scalar or array).

    Central differences inside, one-sided at the first and last bin.
    """
    cdf = np.asarray(cdf, dtype=np.float64)
    bins = cdf.size
    slope = np.empty(bins)
    slope[1:-1] = (cdf[2:] - cdf[:-2]) / 2.0
    slope[0] = cdf[1] - cdf[0]
    slope[-1] = cdf[-1] - cdf[-2]
    out = slope[bin_index(intensity, bins)]
    return float(out) if np.ndim(out) == 0 else out


def _stack(maps):
    arrays = [as_array(m) for m in maps]
    if not arrays:
        raise ValueError("nothing to fuse")
    shape = arrays[0].shape
    for a in arrays[1:]:
        if a.shape != shape:
            raise DimensionError(f"map shapes differ: {shape} vs {a.shape}")
    return np.stack(arrays)


def _ordered_sum(stack):
    # Summing in sorted order makes the result independent of input order.
    return np.sort(stack, axis=0).sum(axis=0)


def fusion_weights(maps, phi=DEFAULT_PHI, bins=DEFAULT_BINS) -> np.ndarray:
    """Per-map, per-pixel weights, shape ``(N, H, W)``."""
    S = _stack(maps)
    grads = np.stack([global_gradient(cumulative_histogram(s, bins), s) for s in S])
    return grads / (_ordered_sum(grads) + phi)


def fuse_raw(maps, phi=DEFAULT_PHI, bins=DEFAULT_BINS) -> np.ndarray:
    S = _stack(maps)
    return _ordered_sum(fusion_weights(S, phi, bins) * S)


def fuse(maps, phi=DEFAULT_PHI, bins=DEFAULT_BINS) -> SaliencyMap:
    """Weighted sum of the maps, min-max normalized."""
    return SaliencyMap(normalize(fuse_raw(maps, phi, bins)), FUSED)


def fuse_equal_weights(maps) -> SaliencyMap:
    return SaliencyMap(_stack(maps).mean(axis=0), FUSED)
