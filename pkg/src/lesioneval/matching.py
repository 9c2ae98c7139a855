"""Lesion correspondence between predicted and ground-truth instances.

Matching is greedy one-to-one: candidate pairs that satisfy the hit criterion
are ranked by descending voxel overlap (ties by smaller pred id, then smaller
gt id) and accepted while both ends are free. Unmatched predictions become
false positives, unmatched ground-truth instances false negatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lesions import LesionInstance
from .volumes import INTEGER_LABELS, BINARY_MASK, Volume

ANY_OVERLAP = "any-overlap"
IOU = "iou"

# Voxel coordinates are packed into a single int64 key for fast intersection.
_KEY_STRIDE = 1 << 21


@dataclass(frozen=True)
class MatchResult:
    """Partition of instances into TP pairs, FP predictions, FN ground truths."""

    tp_pairs: list[tuple[int, int, int]] = field(default_factory=list)  # (pred_id, gt_id, overlap_voxels)
    fp_pred_ids: list[int] = field(default_factory=list)
    fn_gt_ids: list[int] = field(default_factory=list)
    patient_id: str = ""

    @property
    def tp(self) -> int:
        return len(self.tp_pairs)

    @property
    def fp(self) -> int:
        return len(self.fp_pred_ids)

    @property
    def fn(self) -> int:
        return len(self.fn_gt_ids)

    def to_dict(self) -> dict:
        return {
            "tp_pairs": [list(pair) for pair in self.tp_pairs],
            "fp_pred_ids": list(self.fp_pred_ids),
            "fn_gt_ids": list(self.fn_gt_ids),
            "patient_id": self.patient_id,
        }


def _keys(inst: LesionInstance) -> np.ndarray:
    vox = inst.voxels
    if vox.size and int(vox.max()) >= _KEY_STRIDE:
        raise ValueError(f"voxel coordinates exceed supported grid extent {_KEY_STRIDE}")
    keys = (vox[:, 0].astype(np.int64) * _KEY_STRIDE + vox[:, 1]) * _KEY_STRIDE + vox[:, 2]
    keys.sort()
    return keys


def _check_unique_ids(instances: list[LesionInstance], label: str) -> None:
    ids = [inst.id for inst in instances]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate instance ids in {label} list")


def match_lesions(
    pred: list[LesionInstance],
    gt: list[LesionInstance],
    criterion: str = ANY_OVERLAP,
    min_iou: float = 0.5,
    patient_id: str = "",
) -> MatchResult:
    """Greedily assign predicted instances to ground-truth instances.

    ``criterion`` is ``"any-overlap"`` (>= 1 shared voxel) or ``"iou"``
    (intersection over union >= ``min_iou``).
    """
    if criterion not in (ANY_OVERLAP, IOU):
        raise ValueError(f"unknown matching criterion {criterion!r}")
    _check_unique_ids(pred, "prediction")
    _check_unique_ids(gt, "ground-truth")

    pred_keys = [_keys(inst) for inst in pred]
    gt_keys = [_keys(inst) for inst in gt]
    boxes_p = [(inst.voxels.min(axis=0), inst.voxels.max(axis=0)) for inst in pred]
    boxes_g = [(inst.voxels.min(axis=0), inst.voxels.max(axis=0)) for inst in gt]

    candidates: list[tuple[int, int, int, int, int]] = []
    for i, p in enumerate(pred):
        for j, g in enumerate(gt):
            if (boxes_p[i][1] < boxes_g[j][0]).any() or (boxes_g[j][1] < boxes_p[i][0]).any():
                continue  # disjoint bounding boxes cannot overlap
            overlap = int(np.intersect1d(pred_keys[i], gt_keys[j], assume_unique=True).size)
            if overlap < 1:
                continue
            if criterion == IOU:
                iou = overlap / (p.voxel_count + g.voxel_count - overlap)
                if iou < min_iou:
                    continue
            candidates.append((-overlap, p.id, g.id, i, j))

    candidates.sort()
    used_p = [False] * len(pred)
    used_g = [False] * len(gt)
    tp_pairs: list[tuple[int, int, int]] = []
    for neg_overlap, pid, gid, i, j in candidates:
        if used_p[i] or used_g[j]:
            continue
        used_p[i] = used_g[j] = True
        tp_pairs.append((pid, gid, -neg_overlap))

    fp = sorted(inst.id for i, inst in enumerate(pred) if not used_p[i])
    fn = sorted(inst.id for j, inst in enumerate(gt) if not used_g[j])
    return MatchResult(tp_pairs=tp_pairs, fp_pred_ids=fp, fn_gt_ids=fn, patient_id=patient_id)


def detected_pairs_masks(
    match: MatchResult,
    pred_labels: Volume,
    gt_labels: Volume,
) -> list[tuple[Volume, Volume]]:
    """Single-instance binary masks for every TP pair, in pair order."""
    for vol, name in ((pred_labels, "prediction"), (gt_labels, "ground-truth")):
        if vol.kind != INTEGER_LABELS:
            raise ValueError(f"{name} labels volume has kind {vol.kind!r}, expected integer labels")
    pairs: list[tuple[Volume, Volume]] = []
    for pred_id, gt_id, _ in match.tp_pairs:
        pred_mask = (pred_labels.data == pred_id).astype(np.uint8)
        gt_mask = (gt_labels.data == gt_id).astype(np.uint8)
        if not pred_mask.any():
            raise ValueError(f"prediction id {pred_id} not present in label volume")
        if not gt_mask.any():
            raise ValueError(f"ground-truth id {gt_id} not present in label volume")
        pairs.append((
            Volume(dims=pred_labels.dims, spacing=pred_labels.spacing, data=pred_mask, kind=BINARY_MASK),
            Volume(dims=gt_labels.dims, spacing=gt_labels.spacing, data=gt_mask, kind=BINARY_MASK),
        ))
    return pairs
