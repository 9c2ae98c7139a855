"""Lesion instances: 3D connected components, physical volumes, size filters.

A lesion instance is one connected component of a binary mask. Components are
labeled deterministically (label order follows the first voxel of each
component in x-fastest scan order), so repeated runs agree exactly.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .volumes import BINARY_MASK, INTEGER_LABELS, Volume

# Neighborhoods: 6 = faces, 18 = faces+edges, 26 = faces+edges+corners.
CONNECTIVITIES = (6, 18, 26)
_STRUCTURE_RANK = {6: 1, 18: 2, 26: 3}


def _structure(connectivity: int) -> np.ndarray:
    if connectivity not in CONNECTIVITIES:
        raise ValueError(f"connectivity must be one of {CONNECTIVITIES}, got {connectivity}")
    return ndimage.generate_binary_structure(3, _STRUCTURE_RANK[connectivity])


@dataclass(frozen=True)
class LesionInstance:
    """One connected component of a binary mask.

    Attributes:
        id: label of the component, unique within its volume.
        voxels: (n, 3) integer array of (x, y, z) indices.
        voxel_count: number of voxels.
        volume_ml: physical volume, spacing product in mm^3 / 1000.
        centroid: mean voxel coordinate, in voxel space.
    """

    id: int
    voxels: np.ndarray
    voxel_count: int
    volume_ml: float
    centroid: tuple[float, float, float]


def connected_components(mask: Volume, connectivity: int = 26) -> Volume:
    """Label connected foreground components of a binary mask.

    Background stays 0; components get labels 1..K ordered by their first
    voxel in x-fastest scan order.
    """
    if mask.kind != BINARY_MASK:
        raise ValueError(f"connected_components expects a binary-mask volume, got kind {mask.kind!r}")
    structure = _structure(connectivity)
    labels, count = ndimage.label(mask.grid, structure=structure)
    flat = labels.ravel(order="F")
    if count > 1:
        # scipy's label order is an implementation detail; renumber by scan order
        values, first = np.unique(flat, return_index=True)
        nonzero = values != 0
        values, first = values[nonzero], first[nonzero]
        remap = np.zeros(count + 1, dtype=labels.dtype)
        remap[values[np.argsort(first, kind="stable")]] = np.arange(1, count + 1)
        flat = remap[flat]
    return Volume(dims=mask.dims, spacing=mask.spacing, data=flat, kind=INTEGER_LABELS)


def extract_lesions(labels: Volume, min_voxels: int = 1) -> list[LesionInstance]:
    """Build lesion instances from a label volume.

    Components smaller than ``min_voxels`` are dropped. Instances are sorted
    by descending voxel count, ties by ascending id.
    """
    if labels.kind != INTEGER_LABELS:
        raise ValueError(f"extract_lesions expects integer labels, got kind {labels.kind!r}")
    if min_voxels < 1:
        raise ValueError(f"min_voxels must be >= 1, got {min_voxels}")
    grid = labels.grid
    xs, ys, zs = np.nonzero(grid)
    if xs.size == 0:
        return []
    values = grid[xs, ys, zs].astype(np.int64)
    order = np.argsort(values, kind="stable")
    xs, ys, zs, values = xs[order], ys[order], zs[order], values[order]
    starts = np.flatnonzero(np.r_[True, values[1:] != values[:-1]])
    stops = np.r_[starts[1:], values.size]
    voxel_ml = labels.voxel_volume_ml
    out: list[LesionInstance] = []
    for start, stop in zip(starts, stops):
        count = int(stop - start)
        if count < min_voxels:
            continue
        vox = np.column_stack((xs[start:stop], ys[start:stop], zs[start:stop])).astype(np.int64)
        vox.flags.writeable = False
        centroid = tuple(float(c) for c in vox.mean(axis=0))
        out.append(LesionInstance(
            id=int(values[start]),
            voxels=vox,
            voxel_count=count,
            volume_ml=count * voxel_ml,
            centroid=centroid,
        ))
    out.sort(key=lambda inst: (-inst.voxel_count, inst.id))
    return out


def filter_by_volume(lesions: list[LesionInstance], min_ml: float) -> list[LesionInstance]:
    """Keep instances strictly larger than ``min_ml`` milliliters."""
    if min_ml < 0:
        raise ValueError(f"min_ml must be nonnegative, got {min_ml}")
    return [inst for inst in lesions if inst.volume_ml > min_ml]


def lesions_to_csv(lesions: list[LesionInstance]) -> str:
    """Render a lesion table as CSV text."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id", "voxel_count", "volume_ml", "centroid_x", "centroid_y", "centroid_z"])
    for inst in lesions:
        writer.writerow([inst.id, inst.voxel_count, repr(inst.volume_ml),
                         repr(inst.centroid[0]), repr(inst.centroid[1]), repr(inst.centroid[2])])
    return buf.getvalue()
