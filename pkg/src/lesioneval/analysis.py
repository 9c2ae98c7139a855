"""Cohort-level analyses over per-patient lesion metrics.

Free-response ROC curves with piecewise-linear AUC to an FPPI limit,
F2-optimal threshold selection on a validation split, volume-stratified
sensitivity/FPPI, median-and-quartile fold summaries, and feature-cluster
compactness metrics.

Sensitivity is pooled over lesions (sum TP / sum (TP+FN) across patients);
FPPI is the mean false-positive count per patient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lesions import connected_components, extract_lesions, filter_by_volume, LesionInstance
from .matching import ANY_OVERLAP, MatchResult, match_lesions
from .metrics import f2_score
from .volumes import VolumePair, binarize


@dataclass(frozen=True)
class EvalOptions:
    """Knobs shared by every pipeline run: how masks become instances and
    how instances are matched."""

    connectivity: int = 26
    criterion: str = ANY_OVERLAP
    min_iou: float = 0.5
    min_gt_voxels: int = 1
    min_pred_ml: float = 0.0


@dataclass(frozen=True)
class FrocCurve:
    """Operating points (fppi, sensitivity) with the integral to a limit.

    ``thresholds`` is parallel to ``points`` and records the highest
    threshold that produced each point.
    """

    points: list[tuple[float, float]]
    thresholds: list[float]
    fppi_limit: float
    auc: float


@dataclass(frozen=True)
class FoldSummary:
    metric: str
    median: float
    q25: float
    q75: float
    n: int

    def formatted(self, digits: int = 2) -> str:
        return f"{self.median:.{digits}f} ({self.q25:.{digits}f}–{self.q75:.{digits}f})"


@dataclass(frozen=True)
class ClusterMetrics:
    inter_centroid_distance: float
    intra_positive: float
    intra_negative: float


@dataclass(frozen=True)
class StratumPoint:
    min_ml: float
    sensitivity: float | None
    fppi: float
    gt_lesion_count: int


# ---------------------------------------------------------------------------
# Shared pipeline steps
# ---------------------------------------------------------------------------

def gt_instances(pair: VolumePair, options: EvalOptions) -> list[LesionInstance]:
    labels = connected_components(pair.ground_truth, options.connectivity)
    return extract_lesions(labels, options.min_gt_voxels)


def pred_instances(pair: VolumePair, threshold: float, options: EvalOptions) -> list[LesionInstance]:
    mask = binarize(pair.prediction, threshold)
    labels = connected_components(mask, options.connectivity)
    instances = extract_lesions(labels, 1)
    if options.min_pred_ml > 0:
        instances = filter_by_volume(instances, options.min_pred_ml)
    return instances


def _match(pred, gt, options: EvalOptions, patient_id: str) -> MatchResult:
    return match_lesions(pred, gt, criterion=options.criterion, min_iou=options.min_iou,
                         patient_id=patient_id)


def pooled_detection(matches: list[MatchResult]) -> tuple[float | None, float, float]:
    """(pooled sensitivity, mean FPPI, pooled F2) over a patient set."""
    tp = sum(m.tp for m in matches)
    fp = sum(m.fp for m in matches)
    fn = sum(m.fn for m in matches)
    sensitivity = tp / (tp + fn) if (tp + fn) > 0 else None
    fppi = fp / len(matches) if matches else 0.0
    return sensitivity, fppi, f2_score(tp, fp, fn)


# ---------------------------------------------------------------------------
# FROC
# ---------------------------------------------------------------------------

def _piecewise_auc(points: list[tuple[float, float]], limit: float) -> float:
    if not points:
        return 0.0
    xs = [0.0] + [p[0] for p in points]
    ys = [points[0][1]] + [p[1] for p in points]
    if xs[-1] < limit:
        xs.append(limit)
        ys.append(ys[-1])
    area = 0.0
    for i in range(len(xs) - 1):
        area += (xs[i + 1] - xs[i]) * (ys[i] + ys[i + 1]) / 2.0
    return area


def _threshold_point(pairs, gts, t: float, min_ml: float | None,
                     options: EvalOptions) -> tuple[float, float, float]:
    matches = []
    for pair, gt in zip(pairs, gts):
        preds = pred_instances(pair, t, options)
        if min_ml is not None:
            preds = filter_by_volume(preds, min_ml)
        matches.append(_match(preds, gt, options, pair.patient_id))
    sensitivity, fppi, f2 = pooled_detection(matches)
    return fppi, (sensitivity if sensitivity is not None else 0.0), f2


def froc(
    pairs: list[VolumePair],
    thresholds: list[float],
    fppi_limit: float,
    min_ml: float | None = None,
    options: EvalOptions = EvalOptions(),
    mapper=map,
) -> FrocCurve:
    """Sweep thresholds over a cohort and integrate sensitivity over FPPI.

    Per threshold the prediction maps are binarized, turned into instances,
    optionally volume-filtered (``min_ml`` applies to predictions and ground
    truth alike), and matched; the curve is extended horizontally from its
    last point to ``fppi_limit`` and starts at (0, s0). ``mapper`` may be a
    thread pool's order-preserving map; results do not depend on it.
    """
    if not pairs:
        raise ValueError("froc requires a nonempty patient set")
    if not thresholds:
        raise ValueError("froc requires a nonempty threshold list")
    if any(not (0.0 < t < 1.0) for t in thresholds):
        raise ValueError("thresholds must lie strictly inside (0, 1)")
    if any(thresholds[i] <= thresholds[i + 1] for i in range(len(thresholds) - 1)):
        raise ValueError("thresholds must be strictly descending")
    if fppi_limit <= 0:
        raise ValueError(f"fppi_limit must be positive, got {fppi_limit}")

    gts = [gt_instances(pair, options) for pair in pairs]
    if min_ml is not None:
        gts = [filter_by_volume(g, min_ml) for g in gts]
    if sum(len(g) for g in gts) == 0:
        raise ValueError("no ground-truth lesions anywhere in the cohort")

    evaluated = list(mapper(
        lambda t: _threshold_point(pairs, gts, t, min_ml, options), thresholds))
    raw = [(t, fppi, sens) for t, (fppi, sens, _) in zip(thresholds, evaluated)]
    raw.sort(key=lambda r: r[1])  # nondecreasing fppi
    points: list[tuple[float, float]] = []
    kept_thresholds: list[float] = []
    for t, fppi, sens in raw:
        if fppi > fppi_limit:
            continue
        if points and points[-1] == (fppi, sens):
            continue
        points.append((fppi, sens))
        kept_thresholds.append(t)
    return FrocCurve(points=points, thresholds=kept_thresholds, fppi_limit=float(fppi_limit),
                     auc=_piecewise_auc(points, float(fppi_limit)))


DEFAULT_THRESHOLDS = [round(t * 0.01, 2) for t in range(99, 0, -1)]


# ---------------------------------------------------------------------------
# Threshold selection
# ---------------------------------------------------------------------------

def threshold_f2_table(
    pairs: list[VolumePair],
    candidates: list[float],
    min_ml: float | None = None,
    options: EvalOptions = EvalOptions(),
    mapper=map,
) -> list[tuple[float, float]]:
    """Pooled F2 (from summed TP/FP/FN over the split) for each candidate."""
    if not pairs:
        raise ValueError("threshold selection requires a nonempty split")
    if not candidates:
        raise ValueError("threshold selection requires a nonempty candidate list")
    gts = [gt_instances(pair, options) for pair in pairs]
    if min_ml is not None:
        gts = [filter_by_volume(g, min_ml) for g in gts]
    evaluated = list(mapper(
        lambda t: _threshold_point(pairs, gts, t, min_ml, options), candidates))
    return [(t, f2) for t, (_, _, f2) in zip(candidates, evaluated)]


def select_threshold(
    pairs: list[VolumePair],
    candidates: list[float],
    min_ml: float | None = None,
    options: EvalOptions = EvalOptions(),
    mapper=map,
) -> tuple[float, float]:
    """Candidate maximizing pooled F2; ties resolved to the lowest threshold."""
    table = threshold_f2_table(pairs, candidates, min_ml=min_ml, options=options, mapper=mapper)
    best_f2 = max(f2 for _, f2 in table)
    best_t = min(t for t, f2 in table if f2 == best_f2)
    return best_t, best_f2


# ---------------------------------------------------------------------------
# Volume stratification
# ---------------------------------------------------------------------------

def volume_stratified(
    pairs: list[VolumePair],
    volume_grid: list[float],
    threshold: float = 0.5,
    options: EvalOptions = EvalOptions(),
) -> list[StratumPoint]:
    """Detection metrics restricted to lesions strictly larger than each grid value.

    Both prediction and ground-truth instances at or below ``min_ml`` are
    discarded before matching. ``gt_lesion_count`` counts retained reference
    lesions cohort-wide, supporting the cumulative volume histogram.
    """
    if not volume_grid:
        raise ValueError("volume_grid must be nonempty")
    if any(volume_grid[i] >= volume_grid[i + 1] for i in range(len(volume_grid) - 1)):
        raise ValueError("volume_grid must be strictly ascending")
    if not pairs:
        raise ValueError("volume_stratified requires a nonempty patient set")
    gts = [gt_instances(pair, options) for pair in pairs]
    preds = [pred_instances(pair, threshold, options) for pair in pairs]
    rows: list[StratumPoint] = []
    for min_ml in volume_grid:
        matches = []
        gt_count = 0
        for pair, gt, pred in zip(pairs, gts, preds):
            gt_kept = filter_by_volume(gt, min_ml)
            pred_kept = filter_by_volume(pred, min_ml)
            gt_count += len(gt_kept)
            matches.append(_match(pred_kept, gt_kept, options, pair.patient_id))
        sensitivity, fppi, _ = pooled_detection(matches)
        rows.append(StratumPoint(min_ml=float(min_ml), sensitivity=sensitivity,
                                 fppi=fppi, gt_lesion_count=gt_count))
    return rows


# ---------------------------------------------------------------------------
# Fold summaries
# ---------------------------------------------------------------------------

def aggregate(values, metric: str = "") -> FoldSummary:
    """Median and quartiles (linear interpolation between order statistics)."""
    arr = np.asarray([v for v in values], dtype=float)
    if arr.size == 0:
        raise ValueError("aggregate requires at least one value")
    q25, median, q75 = np.quantile(arr, [0.25, 0.5, 0.75])
    return FoldSummary(metric=metric, median=float(median), q25=float(q25), q75=float(q75),
                       n=int(arr.size))


def summary_table(summaries: list[FoldSummary]) -> str:
    """Plain-text table of 'median (q25-q75)' rows."""
    width = max((len(s.metric) for s in summaries), default=0)
    lines = [f"{s.metric.ljust(width)}  {s.formatted()}  n={s.n}" for s in summaries]
    return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# Feature-cluster compactness
# ---------------------------------------------------------------------------

POSITIVE = "positive"
NEGATIVE = "negative"


def cluster_metrics(features, method: str = "centroid") -> ClusterMetrics:
    """Centroid distance between classes and mean within-class spread.

    ``method="centroid"`` measures each point's distance to its class
    centroid; ``method="pairwise"`` averages all within-class point-to-point
    distances instead (singleton classes spread 0).
    """
    if method not in ("centroid", "pairwise"):
        raise ValueError(f"unknown method {method!r}")
    groups: dict[str, list[np.ndarray]] = {POSITIVE: [], NEGATIVE: []}
    dim = None
    for vector, label in features:
        if label not in groups:
            raise ValueError(f"unknown label {label!r}; expected 'positive' or 'negative'")
        vec = np.asarray(vector, dtype=float).reshape(-1)
        if dim is None:
            dim = vec.size
        elif vec.size != dim:
            raise ValueError(f"dimension mismatch: expected {dim}, got {vec.size}")
        groups[label].append(vec)
    for label, vectors in groups.items():
        if not vectors:
            raise ValueError(f"no points labeled {label!r}")
    pos = np.vstack(groups[POSITIVE])
    neg = np.vstack(groups[NEGATIVE])
    c_pos = pos.mean(axis=0)
    c_neg = neg.mean(axis=0)

    def spread(points: np.ndarray, centroid: np.ndarray) -> float:
        if method == "centroid":
            return float(np.linalg.norm(points - centroid, axis=1).mean())
        if points.shape[0] < 2:
            return 0.0
        total, count = 0.0, 0
        for i in range(points.shape[0]):
            d = np.linalg.norm(points[i + 1:] - points[i], axis=1)
            total += float(d.sum())
            count += d.size
        return total / count

    return ClusterMetrics(
        inter_centroid_distance=float(np.linalg.norm(c_pos - c_neg)),
        intra_positive=spread(pos, c_pos),
        intra_negative=spread(neg, c_neg),
    )
