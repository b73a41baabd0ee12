"""Thematic and geometric accuracy of extracted footprints.

Completeness / correctness / quality are computed per-area (pixel counts)
and per-object (a detection counts once it overlaps the reference union by
at least half of its area), with an optional minimum-object-area variant.
Geometric accuracy is the RMSE of boundary-to-boundary distances with
far-off samples discarded.

All ratios are computed from exact integer pixel counts and expressed in
percent; undefined ratios (empty reference or empty extraction) are NaN.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import GeoTransform, densify_closed, polyline_distances
from .scene import mask_from_contour
from .validation import check_contour, check_mask


@dataclass(frozen=True)
class AreaMetrics:
    cp: float
    cr: float
    q: float


@dataclass(frozen=True)
class ObjectMetrics:
    tp: int
    fp: int
    fn: int
    cp: float
    cr: float
    q: float


@dataclass
class EvalReport:
    per_area: AreaMetrics
    per_object: ObjectMetrics
    per_object_50: ObjectMetrics
    boundary_rmse: float
    matched_pairs: list = field(default_factory=list)


def _as_mask(item, dims):
    if isinstance(item, np.ndarray) and item.dtype == bool:
        return check_mask(item, shape=dims)
    return mask_from_contour(check_contour(item), dims[0], dims[1])


def _union(items, dims):
    out = np.zeros(dims, dtype=bool)
    for item in items:
        out |= _as_mask(item, dims)
    return out


def _pct(num: int, den: int) -> float:
    return 100.0 * num / den if den > 0 else float("nan")


def area_metrics(extracted, truth, dims) -> AreaMetrics:
    """Pixel-count completeness, correctness and quality of the two unions."""
    e = _union(extracted, dims)
    r = _union(truth, dims)
    inter = int((e & r).sum())
    return AreaMetrics(cp=_pct(inter, int(r.sum())),
                       cr=_pct(inter, int(e.sum())),
                       q=_pct(inter, int((e | r).sum())))


def object_metrics(extracted, truth, dims, min_area: float = 0.0,
                   pixel_size: float = 1.0) -> ObjectMetrics:
    """Object counts under the half-overlap rule.

    An extracted object is a true positive when at least 50% of its pixels
    fall inside the union of the reference objects; a reference object is
    missed when less than 50% of it is covered by the union of extractions.
    Objects smaller than ``min_area`` square metres are excluded from both
    sides before counting.
    """
    px_area = pixel_size * pixel_size
    e_masks = [m for m in (_as_mask(x, dims) for x in extracted)
               if m.sum() * px_area >= min_area]
    r_masks = [m for m in (_as_mask(x, dims) for x in truth)
               if m.sum() * px_area >= min_area]
    e_union = _union(e_masks, dims) if e_masks else np.zeros(dims, dtype=bool)
    r_union = _union(r_masks, dims) if r_masks else np.zeros(dims, dtype=bool)

    tp = fp = 0
    for m in e_masks:
        total = int(m.sum())
        if total > 0 and 2 * int((m & r_union).sum()) >= total:
            tp += 1
        else:
            fp += 1
    fn = 0
    for m in r_masks:
        total = int(m.sum())
        if not (total > 0 and 2 * int((m & e_union).sum()) >= total):
            fn += 1
    return ObjectMetrics(tp=tp, fp=fp, fn=fn,
                         cp=_pct(tp, tp + fn),
                         cr=_pct(tp, tp + fp),
                         q=_pct(tp, tp + fp + fn))


def boundary_rmse(extracted, truth, gt: GeoTransform, cutoff: float = 3.0) -> float:
    """RMSE of extracted-to-reference boundary distances in metres.

    The extracted boundary is densified at 0.5 px and each sample measures
    its distance to the nearest point of the reference polyline; samples
    farther than ``cutoff`` metres are discarded.  Returns NaN when every
    sample is discarded.
    """
    samples = densify_closed(check_contour(extracted), 0.5)
    truths = truth if isinstance(truth, list) else [truth]
    dist = None
    for t in truths:
        d = polyline_distances(samples, check_contour(t))
        dist = d if dist is None else np.minimum(dist, d)
    metres = dist * gt.pixel_size
    kept = metres[metres <= cutoff]
    if kept.size == 0:
        return float("nan")
    return float(np.sqrt(np.mean(kept * kept)))


def evaluate_footprints(extracted, truth, gt: GeoTransform,
                        min_area: float = 50.0) -> EvalReport:
    """Full accuracy report of extracted footprints against references.

    ``extracted``/``truth`` are lists of contours (fractional pixel
    coordinates) or boolean masks.  Boundary RMSE pools the densified
    samples of every extracted contour against all reference outlines.
    """
    dims = gt.shape
    per_area = area_metrics(extracted, truth, dims)
    per_object = object_metrics(extracted, truth, dims, 0.0, gt.pixel_size)
    per_object_50 = object_metrics(extracted, truth, dims, min_area, gt.pixel_size)

    contour_items = [x for x in extracted if not (isinstance(x, np.ndarray) and x.dtype == bool)]
    truth_contours = [t for t in truth if not (isinstance(t, np.ndarray) and t.dtype == bool)]
    if contour_items and truth_contours:
        per_sample = []
        for c in contour_items:
            samples = densify_closed(check_contour(c), 0.5)
            d = None
            for t in truth_contours:
                dt = polyline_distances(samples, check_contour(t))
                d = dt if d is None else np.minimum(d, dt)
            per_sample.append(d * gt.pixel_size)
        pooled = np.concatenate(per_sample)
        kept = pooled[pooled <= 3.0]
        rmse = float(np.sqrt(np.mean(kept * kept))) if kept.size else float("nan")
    else:
        rmse = float("nan")

    pairs = []
    t_masks = [_as_mask(t, dims) for t in truth]
    for i, x in enumerate(extracted):
        m = _as_mask(x, dims)
        total = int(m.sum())
        if total == 0:
            continue
        best_j, best_frac = -1, 0.0
        for j, tm in enumerate(t_masks):
            frac = int((m & tm).sum()) / total
            if frac > best_frac:
                best_j, best_frac = j, frac
        if best_j >= 0:
            pairs.append((i, best_j, best_frac))
    return EvalReport(per_area, per_object, per_object_50, rmse, pairs)
