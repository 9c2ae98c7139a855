"""Synthetic volume pairs with designed lesion structure.

Phantoms carry their own answer key: a ground-truth mask built from
well-separated ellipsoidal lesions, and a probability map with
high-probability blobs over a chosen subset of them plus configurable
false-positive blobs and sub-threshold noise. Every downstream metric on a
phantom can therefore be checked against hand-computed values.

Randomness comes from numpy's PCG64 generator seeded with the spec's seed,
so identical specs produce byte-identical volumes on every platform.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .volumes import BINARY_MASK, PROBABILITY, Volume, VolumePair

# Probability assigned inside blobs over detected lesions.
DETECTED_PEAK = 0.95


@dataclass(frozen=True)
class Blob:
    """An ellipsoid: spherical with ``radius_mm`` in physical space."""

    center: tuple[float, float, float]  # voxel coordinates
    radius_mm: float
    peak_prob: float = DETECTED_PEAK

    @classmethod
    def from_dict(cls, payload: dict) -> "Blob":
        return cls(center=tuple(payload["center"]), radius_mm=float(payload["radius_mm"]),
                   peak_prob=float(payload.get("peak_prob", DETECTED_PEAK)))

    def to_dict(self) -> dict:
        return {"center": list(self.center), "radius_mm": self.radius_mm,
                "peak_prob": self.peak_prob}


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    seed: int
    gt_lesions: list[Blob] = field(default_factory=list)
    detected_ids: tuple[int, ...] = ()  # 1-based indices into gt_lesions
    fp_blobs: list[Blob] = field(default_factory=list)
    noise_level: float = 0.0
    boundary_jitter_voxels: int = 0
    patient_id: str = ""

    def __post_init__(self) -> None:
        ids = set(self.detected_ids)
        valid = set(range(1, len(self.gt_lesions) + 1))
        if not ids <= valid:
            raise ValueError(f"detected_ids {sorted(ids - valid)} not among ground-truth lesion ids {sorted(valid)}")
        if not (0.0 <= self.noise_level <= 0.89):
            raise ValueError(f"noise_level must lie in [0, 0.89] to stay below blob peaks, got {self.noise_level}")
        if self.boundary_jitter_voxels < 0:
            raise ValueError("boundary_jitter_voxels must be nonnegative")
        for blob in self.fp_blobs:
            if not (0.0 < blob.peak_prob <= 1.0):
                raise ValueError(f"fp blob peak_prob must lie in (0, 1], got {blob.peak_prob}")
        object.__setattr__(self, "detected_ids", tuple(sorted(ids)))

    def designed_counts(self, threshold: float = 0.5) -> tuple[int, int, int]:
        """(tp, fp, fn) the evaluation pipeline must report at ``threshold``."""
        tp = len(self.detected_ids) if threshold < DETECTED_PEAK else 0
        fp = sum(1 for blob in self.fp_blobs if blob.peak_prob > threshold)
        fn = len(self.gt_lesions) - tp
        return tp, fp, fn

    def to_json(self) -> str:
        return json.dumps({
            "dims": list(self.dims),
            "spacing": list(self.spacing),
            "seed": self.seed,
            "gt_lesions": [b.to_dict() for b in self.gt_lesions],
            "detected_ids": list(self.detected_ids),
            "fp_blobs": [b.to_dict() for b in self.fp_blobs],
            "noise_level": self.noise_level,
            "boundary_jitter_voxels": self.boundary_jitter_voxels,
            "patient_id": self.patient_id,
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "PhantomSpec":
        payload = json.loads(text)
        for key in ("dims", "spacing", "seed"):
            if key not in payload:
                raise ValueError(f"phantom spec missing field {key!r}")
        return cls(
            dims=tuple(payload["dims"]),
            spacing=tuple(payload["spacing"]),
            seed=int(payload["seed"]),
            gt_lesions=[Blob.from_dict(b) for b in payload.get("gt_lesions", [])],
            detected_ids=tuple(payload.get("detected_ids", [])),
            fp_blobs=[Blob.from_dict(b) for b in payload.get("fp_blobs", [])],
            noise_level=float(payload.get("noise_level", 0.0)),
            boundary_jitter_voxels=int(payload.get("boundary_jitter_voxels", 0)),
            patient_id=str(payload.get("patient_id", "")),
        )


def _ellipsoid_mask(dims, spacing, center, radius_mm: float) -> np.ndarray:
    axes = []
    for axis in range(3):
        coords = (np.arange(dims[axis]) - center[axis]) * spacing[axis]
        axes.append(coords ** 2)
    dist_sq = axes[0][:, None, None] + axes[1][None, :, None] + axes[2][None, None, :]
    return dist_sq <= radius_mm ** 2


def _check_bounds(blob: Blob, dims, spacing, what: str) -> None:
    for axis in range(3):
        extent = blob.radius_mm / spacing[axis]
        if blob.center[axis] - extent < 0 or blob.center[axis] + extent > dims[axis] - 1:
            raise ValueError(f"{what} at center {blob.center} with radius {blob.radius_mm} mm "
                             f"leaves the volume along axis {axis}")


_DILATE = ndimage.generate_binary_structure(3, 3)


def generate(spec: PhantomSpec) -> VolumePair:
    """Render the phantom into a (probability map, ground-truth mask) pair.

    Ground-truth lesions must be pairwise separated by at least two voxels
    (so no connectivity choice can merge them) and prediction blobs, after
    jitter, must overlap only their own lesion; violations raise.
    """
    dims, spacing = spec.dims, spec.spacing
    rng = np.random.Generator(np.random.PCG64(spec.seed))

    noise = rng.uniform(0.0, spec.noise_level, size=dims) if spec.noise_level > 0 else None

    gt_masks = []
    for index, blob in enumerate(spec.gt_lesions, start=1):
        _check_bounds(blob, dims, spacing, f"ground-truth lesion {index}")
        gt_masks.append(_ellipsoid_mask(dims, spacing, blob.center, blob.radius_mm))
        if not gt_masks[-1].any():
            raise ValueError(f"ground-truth lesion {index} rasterizes to zero voxels")

    # enforce the two-voxel separation that keeps instance counts exact
    claimed = np.zeros(dims, dtype=bool)
    for index, mask in enumerate(gt_masks, start=1):
        if (ndimage.binary_dilation(mask, structure=_DILATE) & claimed).any():
            raise ValueError(f"ground-truth lesion {index} overlaps or touches an earlier lesion")
        claimed |= mask

    pred_blobs: list[tuple[np.ndarray, float, int | None]] = []  # (mask, peak, gt index)
    for index in spec.detected_ids:
        blob = spec.gt_lesions[index - 1]
        center = blob.center
        if spec.boundary_jitter_voxels > 0:
            shift = rng.integers(-spec.boundary_jitter_voxels, spec.boundary_jitter_voxels + 1, size=3)
            center = tuple(float(c) + float(s) for c, s in zip(center, shift))
        jittered = Blob(center=center, radius_mm=blob.radius_mm)
        _check_bounds(jittered, dims, spacing, f"prediction blob over lesion {index}")
        pred_blobs.append((_ellipsoid_mask(dims, spacing, center, blob.radius_mm), DETECTED_PEAK, index))
    for k, blob in enumerate(spec.fp_blobs, start=1):
        _check_bounds(blob, dims, spacing, f"false-positive blob {k}")
        pred_blobs.append((_ellipsoid_mask(dims, spacing, blob.center, blob.radius_mm),
                           blob.peak_prob, None))

    # prediction blobs must stay mutually separated and hit only their own lesion
    pred_claimed = np.zeros(dims, dtype=bool)
    for mask, _, gt_index in pred_blobs:
        if (ndimage.binary_dilation(mask, structure=_DILATE) & pred_claimed).any():
            raise ValueError("prediction blobs overlap or touch each other; "
                             "reduce jitter or move blobs apart")
        pred_claimed |= mask
        for other_index, gt_mask in enumerate(gt_masks, start=1):
            overlaps = bool((mask & gt_mask).any())
            if gt_index == other_index:
                if not overlaps:
                    raise ValueError(f"prediction blob for lesion {gt_index} lost overlap "
                                     "with its lesion; jitter too large")
            elif overlaps:
                what = f"lesion {gt_index}" if gt_index else "a false-positive blob"
                raise ValueError(f"prediction blob for {what} overlaps ground-truth lesion {other_index}")

    prob = noise if noise is not None else np.zeros(dims, dtype=np.float64)
    for mask, peak, _ in pred_blobs:
        prob = np.maximum(prob, np.where(mask, peak, 0.0))

    prediction = Volume.from_grid(prob.astype(np.float32), spacing, kind=PROBABILITY)
    ground_truth = Volume.from_grid(claimed.astype(np.uint8), spacing, kind=BINARY_MASK)
    return VolumePair(prediction=prediction, ground_truth=ground_truth,
                      patient_id=spec.patient_id)


def random_phantom_spec(
    seed: int,
    dims: tuple[int, int, int] = (48, 48, 48),
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0),
    max_lesions: int = 4,
    max_fp: int = 3,
    patient_id: str = "",
) -> PhantomSpec:
    """A randomized but valid spec: blobs on a coarse lattice, radii small
    enough that the separation constraints always hold."""
    rng = np.random.Generator(np.random.PCG64(seed))
    cell = 12  # lattice pitch in voxels; radii below keep >= 2 voxel gaps
    sites = []
    for x in range(cell // 2, dims[0] - cell // 2 + 1, cell):
        for y in range(cell // 2, dims[1] - cell // 2 + 1, cell):
            for z in range(cell // 2, dims[2] - cell // 2 + 1, cell):
                sites.append((float(x), float(y), float(z)))
    n_lesions = int(rng.integers(1, max_lesions + 1))
    n_fp = int(rng.integers(0, max_fp + 1))
    chosen = rng.choice(len(sites), size=n_lesions + n_fp, replace=False)
    min_spacing = min(spacing)
    max_radius = (cell / 2 - 2) * min_spacing
    lesions = [Blob(center=sites[i], radius_mm=float(rng.uniform(2.0, max_radius)))
               for i in chosen[:n_lesions]]
    fps = [Blob(center=sites[i], radius_mm=float(rng.uniform(2.0, max_radius)),
                peak_prob=float(rng.uniform(0.55, 0.94)))
           for i in chosen[n_lesions:]]
    n_detected = int(rng.integers(0, n_lesions + 1))
    detected = tuple(sorted(rng.choice(np.arange(1, n_lesions + 1), size=n_detected,
                                       replace=False).tolist()))
    return PhantomSpec(dims=dims, spacing=spacing, seed=seed, gt_lesions=lesions,
                       detected_ids=detected, fp_blobs=fps, patient_id=patient_id)
