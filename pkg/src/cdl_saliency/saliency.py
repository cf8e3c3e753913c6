"""Per-pixel saliency from a salient/non-salient dictionary pair.

Two measures are computed for the patch around each grid pixel: the
coefficient-energy measure compares ``||a_N||^2`` with ``||a_P||^2`` and the
reconstruction measure compares l2,1 residual norms. Both map an
argument ``s`` (non-salient term minus salient term) through
``1 - exp(-s / (2 eta^2))`` clamped to [0, 1].
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .coding import DEFAULT_MAX_ITER, DEFAULT_TOL, lasso_solve, lasso_solve_many
from .errors import DimensionError, FormatError
from .patches import devectorize

COEFFICIENT = "coefficient"
RECONSTRUCTION = "reconstruction"
FUSED = "fused"


@dataclass
class SaliencyMap:
    values: np.ndarray
    source: str = FUSED

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DimensionError(f"saliency map must be 2-D, got {self.values.shape}")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def as_array(m) -> np.ndarray:
    return m.values if isinstance(m, SaliencyMap) else np.asarray(m, dtype=np.float64)


def _atoms(D):
    return np.asarray(getattr(D, "atoms", D), dtype=np.float64)


def l21_norm(residual, side=None) -> float:
    """Sum of column l2 norms of the residual reshaped to a side x side patch."""
    R = devectorize(residual, side)
    return float(np.sqrt((R * R).sum(axis=0)).sum())


def measure(argument, eta=1.0):
    """``1 - exp(-argument / (2 eta^2))`` clamped to [0, 1]; works elementwise."""
    arg = np.asarray(argument, dtype=np.float64)
    out = np.where(arg > 0, -np.expm1(-np.maximum(arg, 0.0) / (2.0 * eta * eta)), 0.0)
    return float(out) if out.ndim == 0 else out


def coefficient_argument(alpha_p, alpha_n) -> float:
    a_p = np.asarray(getattr(alpha_p, "alpha", alpha_p), dtype=np.float64)
    a_n = np.asarray(getattr(alpha_n, "alpha", alpha_n), dtype=np.float64)
    return float(a_n @ a_n - a_p @ a_p)


def saliency_coefficient(alpha_p, alpha_n, eta_a=1.0) -> float:
    return measure(coefficient_argument(alpha_p, alpha_n), eta_a)


def reconstruction_argument(x, DP, DN, lambda1, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER) -> float:
    x = np.asarray(x, dtype=np.float64)
    DP, DN = _atoms(DP), _atoms(DN)
    if DP.shape[0] != DN.shape[0]:
        raise DimensionError("dictionaries disagree on patch length")
    r_p = x - DP @ lasso_solve(x, DP, lambda1, tol, max_iter).alpha
    r_n = x - DN @ lasso_solve(x, DN, lambda1, tol, max_iter).alpha
    return l21_norm(r_n) - l21_norm(r_p)


def saliency_reconstruction(x, DP, DN, lambda1, eta_r=1.0, tol=DEFAULT_TOL,
                            max_iter=DEFAULT_MAX_ITER) -> float:
    """Reconstruction-error measure for one vectorized patch ``x``.

    Residuals are taken at each dictionary's lasso solution at ``lambda1``.
    """
    return measure(reconstruction_argument(x, DP, DN, lambda1, tol, max_iter), eta_r)


def grid_centers(length, side, stride):
    """Patch centers along one axis: ``side // 2 mod stride``, then every ``stride``, up to ``length``."""
    return np.arange((side // 2) % stride, length + 1, stride)


def extract_patches(image, side, stride):
    """Vectorized patches at every grid center of the reflection-padded image.

    Returns ``(X, rows, cols)``; column ``i`` of ``X`` is the patch whose
    top-left corner in image coordinates is ``(rows[i], cols[i])``.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise DimensionError(f"expected a 2-D luminance image, got {image.shape}")
    h, w = image.shape
    half = side // 2
    if min(h, w) < side:
        raise DimensionError(f"image {image.shape} is smaller than patch side {side}")
    if stride < 1 or stride > side:
        raise ValueError(f"stride must be in [1, {side}] so every pixel is covered")
    padded = np.pad(image, half, mode="reflect")
    rc, cc = grid_centers(h, side, stride), grid_centers(w, side, stride)
    rows, cols = np.meshgrid(rc - half, cc - half, indexing="ij")
    rows, cols = rows.ravel(), cols.ravel()
    windows = np.lib.stride_tricks.sliding_window_view(padded, (side, side))
    # Padded offset of image coordinate r is r + half.
    blocks = windows[rows + half, cols + half]
    X = blocks.transpose(0, 2, 1).reshape(len(rows), side * side).T
    return np.ascontiguousarray(X), rows, cols


def accumulate(values, rows, cols, side, shape):
    """Average per-patch values over every pixel each patch covers."""
    h, w = shape
    total = np.zeros((h + 2 * side, w + 2 * side))
    count = np.zeros_like(total)
    for v, r, c in zip(values, rows + side, cols + side):
        total[r:r + side, c:c + side] += v
        count[r:r + side, c:c + side] += 1
    total = total[side:side + h, side:side + w]
    count = count[side:side + h, side:side + w]
    if np.any(count == 0):
        raise ValueError("sliding-window grid leaves pixels uncovered")
    return total / count


def normalize(values) -> np.ndarray:
    """Min-max scale to [0, 1]; a constant map becomes all zeros.

    Ranges at rounding level (from averaging identical values) count as
    constant so that noise is not stretched to full scale.
    """
    v = np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    if hi - lo <= 64 * np.finfo(np.float64).eps * max(1.0, abs(lo), abs(hi)):
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def _patch_terms(X, D, lambda1, tol, max_iter):
    side = int(round(np.sqrt(X.shape[0])))
    A = lasso_solve_many(X, D, lambda1, tol=tol, max_iter=max_iter)
    R = X - D @ A
    energy = np.einsum("ij,ij->j", A, A)
    cols = R.reshape(side, side, -1, order="F")
    l21 = np.sqrt((cols * cols).sum(axis=0)).sum(axis=0)
    return energy, l21


def patch_arguments(X, DP, DN, lambda1, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
                    single_dict="off"):
    """Exponent arguments of both measures for every column of ``X``.

    With ``single_dict`` set to ``"salient"`` or ``"nonsalient"`` only one
    dictionary is consulted and the other side's term is replaced by the
    extreme of the available term over ``X``: the largest salient term or
    the smallest non-salient term.
    """
    if single_dict not in ("off", "salient", "nonsalient"):
        raise ValueError(f"unknown single_dict mode {single_dict!r}")
    if single_dict != "nonsalient":
        e_p, r_p = _patch_terms(X, _atoms(DP), lambda1, tol, max_iter)
    if single_dict != "salient":
        e_n, r_n = _patch_terms(X, _atoms(DN), lambda1, tol, max_iter)
    if single_dict == "salient":
        return e_p.max() - e_p, r_p.max() - r_p
    if single_dict == "nonsalient":
        return e_n - e_n.min(), r_n - r_n.min()
    return e_n - e_p, r_n - r_p


def generate_maps(image, DP, DN, patch_side=16, stride=4, lambda1=0.075, eta_a=1.0, eta_r=1.0,
                  tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, single_dict="off"):
    """Coefficient and reconstruction saliency maps for a luminance image.

    Patches are taken around a stride grid of the reflection-padded image,
    each coded once per dictionary; a pixel gets the mean measure of the
    patches covering it. Each map is then min-max normalized.
    """
    n = patch_side * patch_side
    for D in (DP, DN):
        if D is not None and _atoms(D).shape[0] != n:
            raise DimensionError(f"dictionary atoms have length {_atoms(D).shape[0]}, "
                                 f"patch side {patch_side} needs {n}")
    image = np.asarray(image, dtype=np.float64)
    X, rows, cols = extract_patches(image, patch_side, stride)
    arg_a, arg_r = patch_arguments(X, DP, DN, lambda1, tol, max_iter, single_dict)
    coef = accumulate(measure(arg_a, eta_a), rows, cols, patch_side, image.shape)
    recon = accumulate(measure(arg_r, eta_r), rows, cols, patch_side, image.shape)
    return SaliencyMap(normalize(coef), COEFFICIENT), SaliencyMap(normalize(recon), RECONSTRUCTION)


def save_map_png(path, m):
    values = np.clip(as_array(m), 0.0, 1.0)
    Image.fromarray(np.round(255 * values).astype(np.uint8), mode="L").save(path)


# Raw sidecar: "CDLS", u32 width, u32 height, row-major little-endian float64.
RAW_MAGIC = b"CDLS"
_RAW_HEADER = struct.Struct("<4sII")


def dumps_raw(m) -> bytes:
    values = as_array(m)
    h, w = values.shape
    return _RAW_HEADER.pack(RAW_MAGIC, w, h) + values.astype("<f8").tobytes(order="C")


def loads_raw(data: bytes) -> np.ndarray:
    if len(data) < _RAW_HEADER.size:
        raise FormatError("truncated map header", len(data))
    magic, w, h = _RAW_HEADER.unpack_from(data)
    if magic != RAW_MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    expected = _RAW_HEADER.size + 8 * w * h
    if len(data) != expected:
        raise FormatError(f"expected {expected} bytes for {w}x{h} map, got {len(data)}",
                          min(len(data), expected))
    return np.frombuffer(data, dtype="<f8", offset=_RAW_HEADER.size).reshape(h, w).astype(np.float64)


def save_raw(path, m):
    Path(path).write_bytes(dumps_raw(m))


def load_raw(path) -> np.ndarray:
    return loads_raw(Path(path).read_bytes())


def load_map(path) -> np.ndarray:
    """Load a map from a ``.cdls`` sidecar or an 8-bit PNG (scaled to [0, 1])."""
    path = Path(path)
    if path.suffix == ".cdls":
        return load_raw(path)
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.float64) / 255.0
