"""Detection and segmentation metrics.

Detection: per-patient sensitivity, false positives per image, and the
recall-weighted F2 score, all at the lesion-instance level. Segmentation:
volumetric Dice and the normalized surface distance score (fraction of
boundary voxels of each mask lying within a distance tolerance of the other
mask's boundary), computed per correctly detected lesion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .matching import MatchResult
from .volumes import BINARY_MASK, Volume, check_congruent

VOXELS = "voxels"
MM = "mm"


@dataclass(frozen=True)
class DetectionMetrics:
    """Per-patient lesion detection counts and scores.

    ``sensitivity`` is None when the patient has no ground-truth lesions
    (undefined, reported as missing). ``fppi`` equals the FP count: one
    image per patient.
    """

    tp: int
    fp: int
    fn: int
    sensitivity: float | None
    fppi: float
    f2: float
    patient_id: str = ""


@dataclass(frozen=True)
class SegmentationMetrics:
    dice: float
    nsd: float
    pred_id: int
    gt_id: int
    patient_id: str = ""


@dataclass(frozen=True)
class SurfaceSet:
    """Boundary voxels of a mask: foreground with a 6-connected background
    (or out-of-bounds) neighbor."""

    voxels: np.ndarray  # (n, 3) int indices
    spacing: tuple[float, float, float]
    dims: tuple[int, int, int]


def f2_score(tp: int, fp: int, fn: int) -> float:
    """F-beta with beta=2: 5*TP / (5*TP + 4*FN + FP); empty case scores 1."""
    denom = 5 * tp + 4 * fn + fp
    if denom == 0:
        return 1.0
    return 5 * tp / denom


def detection_metrics(match: MatchResult) -> DetectionMetrics:
    tp, fp, fn = match.tp, match.fp, match.fn
    sensitivity = tp / (tp + fn) if (tp + fn) > 0 else None
    return DetectionMetrics(
        tp=tp,
        fp=fp,
        fn=fn,
        sensitivity=sensitivity,
        fppi=float(fp),
        f2=f2_score(tp, fp, fn),
        patient_id=match.patient_id,
    )


def dice(a: Volume, b: Volume) -> float:
    """Soerensen-Dice overlap 2|A∩B| / (|A|+|B|); two empty masks score 1."""
    _require_mask(a, "a")
    _require_mask(b, "b")
    check_congruent(a, b)
    a_fg = a.data != 0
    b_fg = b.data != 0
    total = int(a_fg.sum()) + int(b_fg.sum())
    if total == 0:
        return 1.0
    return 2.0 * int((a_fg & b_fg).sum()) / total


def _require_mask(v: Volume, name: str) -> None:
    if v.kind != BINARY_MASK:
        raise ValueError(f"{name} must be a binary-mask volume, got kind {v.kind!r}")


def surface(mask: Volume) -> SurfaceSet:
    """Extract the boundary voxels of a binary mask.

    Foreground voxels on the array border count as boundary (their missing
    neighbors are background).
    """
    _require_mask(mask, "mask")
    grid = mask.grid.astype(bool)
    padded = np.pad(grid, 1, mode="constant", constant_values=False)
    interior = (
        padded[:-2, 1:-1, 1:-1] & padded[2:, 1:-1, 1:-1]
        & padded[1:-1, :-2, 1:-1] & padded[1:-1, 2:, 1:-1]
        & padded[1:-1, 1:-1, :-2] & padded[1:-1, 1:-1, 2:]
    )
    boundary = grid & ~interior
    voxels = np.column_stack(np.nonzero(boundary)).astype(np.int64)
    voxels.flags.writeable = False
    return SurfaceSet(voxels=voxels, spacing=mask.spacing, dims=mask.dims)


def distance_within(set_a: SurfaceSet, set_b: SurfaceSet, tau: float, unit: str = VOXELS) -> int:
    """Count a-voxels whose Euclidean distance to set_b is <= tau.

    Distances are measured in index space for ``unit="voxels"`` and in mm
    (via spacing) for ``unit="mm"``. Backed by an exact Euclidean distance
    transform of set_b, evaluated on the joint bounding box (cropping cannot
    change any a-to-b distance because all of set_b stays inside the crop).
    """
    if unit not in (VOXELS, MM):
        raise ValueError(f"unit must be 'voxels' or 'mm', got {unit!r}")
    if set_a.spacing != set_b.spacing:
        raise ValueError(f"spacing mismatch: {set_a.spacing} vs {set_b.spacing}")
    if set_a.voxels.size == 0 or set_b.voxels.size == 0:
        return 0
    lo = np.minimum(set_a.voxels.min(axis=0), set_b.voxels.min(axis=0))
    hi = np.maximum(set_a.voxels.max(axis=0), set_b.voxels.max(axis=0))
    occupied = np.zeros(tuple(hi - lo + 1), dtype=bool)
    b = set_b.voxels - lo
    occupied[b[:, 0], b[:, 1], b[:, 2]] = True
    sampling = set_b.spacing if unit == MM else (1.0, 1.0, 1.0)
    dist = ndimage.distance_transform_edt(~occupied, sampling=sampling)
    a = set_a.voxels - lo
    return int((dist[a[:, 0], a[:, 1], a[:, 2]] <= tau).sum())


def nsd(pred: Volume, gt: Volume, tolerance: float = 2.0, unit: str = VOXELS) -> float:
    """Normalized surface distance score at a boundary tolerance.

    NSD = (|{s in S_pred : d(s, S_gt) <= tau}| + |{s in S_gt : d(s, S_pred) <= tau}|)
          / (|S_pred| + |S_gt|).

    Both masks empty -> 1; exactly one empty -> 0. Default tolerance is
    2 voxels in index space; pass ``unit="mm"`` for a physical tolerance.
    """
    _require_mask(pred, "pred")
    _require_mask(gt, "gt")
    check_congruent(pred, gt)
    if tolerance <= 0:
        raise ValueError(f"tolerance must be positive, got {tolerance}")
    if unit not in (VOXELS, MM):
        raise ValueError(f"unit must be 'voxels' or 'mm', got {unit!r}")
    s_pred = surface(pred)
    s_gt = surface(gt)
    n_pred = s_pred.voxels.shape[0]
    n_gt = s_gt.voxels.shape[0]
    if n_pred == 0 and n_gt == 0:
        return 1.0
    if n_pred == 0 or n_gt == 0:
        return 0.0
    hits = distance_within(s_pred, s_gt, tolerance, unit) + distance_within(s_gt, s_pred, tolerance, unit)
    return hits / (n_pred + n_gt)
