"""Salient-object evaluation: MAE, precision/recall, F-beta, S-measure, E-measure."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetError, DimensionError
from .patches import load_mask
from .saliency import as_array, load_map

BETA2 = 0.3
CURVE_POINTS = 256
_EPS = np.finfo(np.float64).eps


def _pair(m, gt):
    s = as_array(m)
    g = np.asarray(gt).astype(bool)
    if s.shape != g.shape:
        raise DimensionError(f"map {s.shape} and mask {g.shape} differ")
    if s.size == 0:
        raise DimensionError("empty map")
    return s, g


def pr_at_threshold(m, gt, thr):
    """Precision and recall of ``map >= thr`` against ``gt``.

    An empty prediction has precision 1. An empty ground truth is rejected.
    """
    s, g = _pair(m, gt)
    n_gt = int(g.sum())
    if n_gt == 0:
        raise ValueError("precision/recall undefined for an empty ground truth")
    pred = s >= thr
    n_pred = int(pred.sum())
    tp = int((pred & g).sum())
    precision = 1.0 if n_pred == 0 else tp / n_pred
    return precision, tp / n_gt


def f_measure(p, r, beta2=BETA2):
    denom = beta2 * p + r
    if denom == 0:
        return 0.0
    return (1 + beta2) * p * r / denom


def adaptive_threshold(m):
    s = as_array(m)
    if s.size == 0:
        raise DimensionError("empty map")
    return min(2.0 * float(s.mean()), 1.0)


def mae(m, gt):
    s, g = _pair(m, gt)
    return float(np.abs(s - g).mean())


def f_adaptive(m, gt, beta2=BETA2):
    return f_measure(*pr_at_threshold(m, gt, adaptive_threshold(m)), beta2)


# Structure measure


def _s_object(values):
    # values: prediction on one region; the sample std of a single pixel is 0.
    x = values.mean()
    sigma = values.std(ddof=1) if values.size > 1 else 0.0
    return 2.0 * x / (x * x + 1.0 + sigma + _EPS)


def _object_score(s, g):
    u = g.mean()
    fg = _s_object(s[g])
    bg = _s_object(1.0 - s[~g])
    return u * fg + (1 - u) * bg


def _ssim(s, g):
    n = s.size
    x, y = s.mean(), g.mean()
    sx = ((s - x) ** 2).sum() / (n - 1 + _EPS)
    sy = ((g - y) ** 2).sum() / (n - 1 + _EPS)
    sxy = ((s - x) * (g - y)).sum() / (n - 1 + _EPS)
    a = 4 * x * y * sxy
    b = (x * x + y * y) * (sx + sy)
    if a != 0:
        return a / (b + _EPS)
    return 1.0 if b == 0 else 0.0


def _centroid(g):
    # 1-based centroid rounded half away from zero; the split puts this
    # row/column in the top/left quadrants.
    h, w = g.shape
    if not g.any():
        return _round_half_up(w / 2), _round_half_up(h / 2)
    rows, cols = np.nonzero(g)
    return _round_half_up(cols.mean() + 1), _round_half_up(rows.mean() + 1)


def _round_half_up(v):
    return int(np.floor(v + 0.5))


def _region_score(s, g):
    h, w = g.shape
    x, y = _centroid(g)
    area = h * w
    weights = (x * y / area, (w - x) * y / area, x * (h - y) / area)
    weights += (1 - sum(weights),)
    quads = ((slice(0, y), slice(0, x)), (slice(0, y), slice(x, w)),
             (slice(y, h), slice(0, x)), (slice(y, h), slice(x, w)))
    score = 0.0
    for wt, (rs, cs) in zip(weights, quads):
        q = s[rs, cs]
        # A quadrant can be empty when the centroid sits on the last row/column.
        if q.size:
            score += wt * _ssim(q.astype(np.float64), g[rs, cs].astype(np.float64))
    return score


def s_measure(m, gt, alpha=0.5):
    """Structure measure: ``alpha`` object-aware plus ``1 - alpha`` region-aware similarity."""
    s, g = _pair(m, gt)
    y = g.mean()
    if y == 0:
        return float(1.0 - s.mean())
    if y == 1:
        return float(s.mean())
    return float(max(0.0, alpha * _object_score(s, g) + (1 - alpha) * _region_score(s, g)))


def e_measure(m, gt):
    """Enhanced-alignment measure of the map binarized at its adaptive threshold."""
    s, g = _pair(m, gt)
    fm = (s >= adaptive_threshold(s)).astype(np.float64)
    gf = g.astype(np.float64)
    if not g.any():
        enhanced = 1.0 - fm
    elif g.all():
        enhanced = fm
    else:
        a_fm = fm - fm.mean()
        a_gt = gf - gf.mean()
        align = 2.0 * a_gt * a_fm / (a_gt * a_gt + a_fm * a_fm + _EPS)
        enhanced = (align + 1.0) ** 2 / 4.0
    return float(enhanced.sum() / g.size)


def curve_thresholds(points=CURVE_POINTS):
    return np.linspace(0.0, 1.0, points)


def pr_curve(m, gt, thresholds=None):
    """Precision and recall at every threshold (``map >= thr``)."""
    s, g = _pair(m, gt)
    if not g.any():
        raise ValueError("precision/recall undefined for an empty ground truth")
    t = curve_thresholds() if thresholds is None else np.asarray(thresholds, dtype=np.float64)
    fg = np.sort(s[g])
    allv = np.sort(s.ravel())
    tp = fg.size - np.searchsorted(fg, t, side="left")
    n_pred = allv.size - np.searchsorted(allv, t, side="left")
    precision = np.where(n_pred > 0, tp / np.maximum(n_pred, 1), 1.0)
    return precision, tp / fg.size


def f_curve(precision, recall, beta2=BETA2):
    p, r = np.asarray(precision), np.asarray(recall)
    denom = beta2 * p + r
    return np.where(denom > 0, (1 + beta2) * p * r / np.where(denom > 0, denom, 1.0), 0.0)


@dataclass
class MetricsReport:
    per_image: list[dict] = field(default_factory=list)
    aggregate: dict = field(default_factory=dict)
    thresholds: np.ndarray = field(default_factory=curve_thresholds)
    precision: np.ndarray = field(default_factory=lambda: np.zeros(CURVE_POINTS))
    recall: np.ndarray = field(default_factory=lambda: np.zeros(CURVE_POINTS))
    f: np.ndarray = field(default_factory=lambda: np.zeros(CURVE_POINTS))

    def to_json(self) -> str:
        return json.dumps({"per_image": self.per_image, "aggregate": self.aggregate}, indent=2)

    def write_curves(self, path):
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["threshold", "precision", "recall", "f"])
            for row in zip(self.thresholds, self.precision, self.recall, self.f):
                out.writerow([repr(float(v)) for v in row])


def evaluate_pairs(items) -> MetricsReport:
    """Score ``(name, map, gt)`` triples.

    Images with an empty ground truth get ``f_adaptive = None`` and are left
    out of the F mean and of the curves.
    """
    report = MetricsReport()
    curves = []
    for name, m, gt in items:
        s, g = _pair(m, gt)
        rec = {"name": name, "mae": mae(s, g), "f_adaptive": None,
               "s_measure": s_measure(s, g), "e_measure": e_measure(s, g)}
        if g.any():
            rec["f_adaptive"] = f_adaptive(s, g)
            p, r = pr_curve(s, g, report.thresholds)
            curves.append((p, r, f_curve(p, r)))
        report.per_image.append(rec)
    if not report.per_image:
        raise DatasetError("no maps to evaluate (0 pairs)")
    agg = {"count": len(report.per_image)}
    for key in ("mae", "f_adaptive", "s_measure", "e_measure"):
        vals = [r[key] for r in report.per_image if r[key] is not None]
        agg[key] = float(np.mean(vals)) if vals else None
    report.aggregate = agg
    if curves:
        report.precision, report.recall, report.f = (np.mean(c, axis=0) for c in zip(*curves))
    return report


def pair_maps(maps_dir, masks_dir, suffix=""):
    """Match ``<name><suffix>.cdls`` (preferred) or ``.png`` maps with ``<name>.png`` masks."""
    maps_dir, masks_dir = Path(maps_dir), Path(masks_dir)
    masks = {p.stem: p for p in sorted(masks_dir.glob("*.png"))}
    maps = {}
    for p in sorted(maps_dir.iterdir()):
        if p.suffix not in (".png", ".cdls") or not p.stem.endswith(suffix):
            continue
        name = p.stem[:len(p.stem) - len(suffix)] if suffix else p.stem
        if p.suffix == ".cdls" or name not in maps:
            maps[name] = p
    missing = [f"{masks_dir.name}/{n}.png" for n in sorted(set(maps) - set(masks))]
    missing += [f"{maps_dir.name}/{n}{suffix}.png" for n in sorted(set(masks) - set(maps))]
    if missing:
        raise DatasetError("unpaired evaluation files", missing)
    if not maps:
        raise DatasetError(f"no maps found in {maps_dir} (0 pairs)")
    return [(n, maps[n], masks[n]) for n in sorted(maps)]


def evaluate_dataset(maps_dir, masks_dir, suffix="") -> MetricsReport:
    pairs = pair_maps(maps_dir, masks_dir, suffix)
    return evaluate_pairs((n, load_map(mp), load_mask(gp)) for n, mp, gp in pairs)
