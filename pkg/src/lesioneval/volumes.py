"""3D scalar volumes with physical spacing, plus NIfTI-1 and raw-sidecar file I/O.

A :class:`Volume` is a flat scalar array in x-fastest order together with grid
dimensions, per-axis spacing in mm, and a ``kind`` tag describing what the
values mean. Every other module consumes these objects.
"""

from __future__ import annotations

import gzip
import json
import os
from dataclasses import dataclass

import numpy as np

# Value-kind tags. Masks hold {0,1}, probabilities lie in [0,1], labels are
# nonnegative integers, intensities are unconstrained.
INTENSITY = "intensity"
PROBABILITY = "probability"
BINARY_MASK = "binary-mask"
INTEGER_LABELS = "integer-labels"

KINDS = (INTENSITY, PROBABILITY, BINARY_MASK, INTEGER_LABELS)


@dataclass(frozen=True)
class Volume:
    """Immutable 3D scalar grid.

    Attributes:
        dims: (nx, ny, nz) voxel counts, all positive.
        spacing: (sx, sy, sz) mm per voxel along each axis, all positive finite.
        data: flat array of length nx*ny*nz, x-fastest order.
        kind: one of ``KINDS``.
    """

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    data: np.ndarray
    kind: str = INTENSITY

    def __post_init__(self) -> None:
        dims = tuple(int(d) for d in self.dims)
        # spacing is quantized to float32, the NIfTI pixdim precision, so
        # write/read round-trips reproduce it bit-exactly
        spacing = tuple(float(np.float32(s)) for s in self.spacing)
        if len(dims) != 3 or any(d <= 0 for d in dims):
            raise ValueError(f"dims must be three positive voxel counts, got {self.dims}")
        if len(spacing) != 3 or any(not np.isfinite(s) or s <= 0 for s in spacing):
            raise ValueError(f"spacing must be three positive finite values, got {self.spacing}")
        if self.kind not in KINDS:
            raise ValueError(f"unknown volume kind {self.kind!r}")
        data = np.asarray(self.data).reshape(-1)
        n = dims[0] * dims[1] * dims[2]
        if data.size != n:
            raise ValueError(f"data length {data.size} does not match dims product {n}")
        if self.kind == PROBABILITY:
            if data.size and (float(data.min()) < 0.0 or float(data.max()) > 1.0):
                raise ValueError("probability volume has values outside [0, 1]")
        elif self.kind == BINARY_MASK:
            if not np.isin(data, (0, 1)).all():
                raise ValueError("binary-mask volume has values outside {0, 1}")
        if data.flags.writeable:
            data = data.copy()  # never alias caller-owned mutable memory
        data.flags.writeable = False
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "data", data)

    @property
    def grid(self) -> np.ndarray:
        """Read-only (nx, ny, nz) view of the flat data."""
        return self.data.reshape(self.dims, order="F")

    @property
    def voxel_volume_ml(self) -> float:
        sx, sy, sz = self.spacing
        return sx * sy * sz / 1000.0

    @classmethod
    def from_grid(cls, grid: np.ndarray, spacing, kind: str = INTENSITY) -> "Volume":
        grid = np.asarray(grid)
        if grid.ndim != 3:
            raise ValueError(f"expected a 3D grid, got shape {grid.shape}")
        return cls(dims=grid.shape, spacing=tuple(spacing), data=grid.ravel(order="F"), kind=kind)


@dataclass(frozen=True)
class VolumePair:
    """A prediction and its reference on the same grid."""

    prediction: Volume
    ground_truth: Volume
    patient_id: str = ""

    def __post_init__(self) -> None:
        check_congruent(self.prediction, self.ground_truth, context=self.patient_id or "volume pair")


def check_congruent(a: Volume, b: Volume, context: str = "") -> None:
    """Reject volumes whose dims or spacing differ in any component."""
    where = f" ({context})" if context else ""
    if a.dims != b.dims:
        raise ValueError(f"grid mismatch{where}: dims {a.dims} vs {b.dims}")
    if a.spacing != b.spacing:
        raise ValueError(f"grid mismatch{where}: spacing {a.spacing} vs {b.spacing}")


def binarize(v: Volume, threshold: float) -> Volume:
    """Threshold a probability map into a binary mask.

    A voxel becomes foreground iff its value is strictly greater than
    ``threshold``, so threshold 0 keeps zero-probability background at 0.
    """
    if v.kind != PROBABILITY:
        raise ValueError(f"binarize expects a probability volume, got kind {v.kind!r}")
    if not (0.0 <= threshold <= 1.0):
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    mask = (v.data > threshold).astype(np.uint8)
    return Volume(dims=v.dims, spacing=v.spacing, data=mask, kind=BINARY_MASK)


# ---------------------------------------------------------------------------
# NIfTI-1 subset
# ---------------------------------------------------------------------------

_HEADER_DTYPE = np.dtype([
    ("sizeof_hdr", "<i4"),
    ("data_type", "S10"),
    ("db_name", "S18"),
    ("extents", "<i4"),
    ("session_error", "<i2"),
    ("regular", "S1"),
    ("dim_info", "u1"),
    ("dim", "<i2", (8,)),
    ("intent_p1", "<f4"),
    ("intent_p2", "<f4"),
    ("intent_p3", "<f4"),
    ("intent_code", "<i2"),
    ("datatype", "<i2"),
    ("bitpix", "<i2"),
    ("slice_start", "<i2"),
    ("pixdim", "<f4", (8,)),
    ("vox_offset", "<f4"),
    ("scl_slope", "<f4"),
    ("scl_inter", "<f4"),
    ("slice_end", "<i2"),
    ("slice_code", "u1"),
    ("xyzt_units", "u1"),
    ("cal_max", "<f4"),
    ("cal_min", "<f4"),
    ("slice_duration", "<f4"),
    ("toffset", "<f4"),
    ("glmax", "<i4"),
    ("glmin", "<i4"),
    ("descrip", "S80"),
    ("aux_file", "S24"),
    ("qform_code", "<i2"),
    ("sform_code", "<i2"),
    ("quatern_b", "<f4"),
    ("quatern_c", "<f4"),
    ("quatern_d", "<f4"),
    ("qoffset_x", "<f4"),
    ("qoffset_y", "<f4"),
    ("qoffset_z", "<f4"),
    ("srow_x", "<f4", (4,)),
    ("srow_y", "<f4", (4,)),
    ("srow_z", "<f4", (4,)),
    ("intent_name", "S16"),
    ("magic", "S4"),
])
assert _HEADER_DTYPE.itemsize == 348

_MAGIC_SINGLE = b"n+1\x00"
_GZIP_MAGIC = b"\x1f\x8b"

# datatype code -> numpy dtype, per the NIfTI-1 standard
_DTYPES = {2: np.dtype("u1"), 4: np.dtype("<i2"), 16: np.dtype("<f4")}
_DTYPE_CODES = {np.dtype("uint8"): 2, np.dtype("int16"): 4, np.dtype("float32"): 16}


def _open_maybe_gzip(path: str):
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head == _GZIP_MAGIC:
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_nifti(path: str, kind: str) -> Volume:
    with _open_maybe_gzip(path) as fh:
        raw = fh.read(348)
        if len(raw) < 348:
            raise ValueError(f"{path}: file shorter than the 348-byte NIfTI-1 header")
        hdr = np.frombuffer(raw, dtype=_HEADER_DTYPE)[0]
        if int(hdr["sizeof_hdr"]) != 348:
            raise ValueError(f"{path}: sizeof_hdr is {int(hdr['sizeof_hdr'])}, expected 348 "
                             "(big-endian files are not supported)")
        if bytes(hdr["magic"]) != _MAGIC_SINGLE.rstrip(b"\x00"):  # numpy strips trailing NULs
            raise ValueError(f"{path}: magic is {bytes(hdr['magic'])!r}, expected {_MAGIC_SINGLE!r}")
        dim = hdr["dim"]
        if int(dim[0]) != 3:
            raise ValueError(f"{path}: dim[0] is {int(dim[0])}, only 3-dimensional volumes are supported")
        dims = tuple(int(d) for d in dim[1:4])
        if any(d <= 0 for d in dims):
            raise ValueError(f"{path}: dim[1..3] must be positive, got {dims}")
        code = int(hdr["datatype"])
        if code not in _DTYPES:
            raise ValueError(f"{path}: datatype {code} unsupported (supported: uint8=2, int16=4, float32=16)")
        dtype = _DTYPES[code]
        pixdim = tuple(float(p) for p in hdr["pixdim"][1:4])
        if any(not np.isfinite(p) or p <= 0 for p in pixdim):
            raise ValueError(f"{path}: pixdim[1..3] must be positive, got {pixdim}")
        offset = int(round(float(hdr["vox_offset"])))
        if offset < 348:
            raise ValueError(f"{path}: vox_offset {offset} lies inside the header")
        fh.read(offset - 348)
        n = dims[0] * dims[1] * dims[2]
        payload = fh.read(n * dtype.itemsize)
        if len(payload) < n * dtype.itemsize:
            raise ValueError(f"{path}: truncated payload, expected {n * dtype.itemsize} bytes "
                             f"after vox_offset, got {len(payload)}")
        data = np.frombuffer(payload, dtype=dtype)
        slope = float(hdr["scl_slope"])
        inter = float(hdr["scl_inter"])
        if slope != 0.0 and (slope != 1.0 or inter != 0.0):
            data = data.astype(np.float32) * np.float32(slope) + np.float32(inter)
    return Volume(dims=dims, spacing=pixdim, data=data, kind=kind)


def _write_nifti(v: Volume, path: str) -> None:
    arr = np.asarray(v.data)
    if arr.dtype not in _DTYPE_CODES:
        raise ValueError(f"cannot write dtype {arr.dtype} as NIfTI-1; "
                         "supported dtypes: uint8, int16, float32")
    hdr = np.zeros((), dtype=_HEADER_DTYPE)
    hdr["sizeof_hdr"] = 348
    hdr["regular"] = b"r"
    hdr["dim"] = [3, v.dims[0], v.dims[1], v.dims[2], 1, 1, 1, 1]
    hdr["datatype"] = _DTYPE_CODES[arr.dtype]
    hdr["bitpix"] = arr.dtype.itemsize * 8
    hdr["pixdim"] = [1.0, v.spacing[0], v.spacing[1], v.spacing[2], 0, 0, 0, 0]
    hdr["vox_offset"] = 352.0
    hdr["scl_slope"] = 0.0
    hdr["scl_inter"] = 0.0
    hdr["xyzt_units"] = 2  # mm
    hdr["magic"] = _MAGIC_SINGLE
    payload = hdr.tobytes() + b"\x00\x00\x00\x00" + arr.astype(arr.dtype, copy=False).tobytes()
    if path.endswith(".gz"):
        # mtime pinned so identical volumes produce identical bytes
        with open(path, "wb") as fh:
            with gzip.GzipFile(fileobj=fh, mode="wb", mtime=0) as gz:
                gz.write(payload)
    else:
        with open(path, "wb") as fh:
            fh.write(payload)


# ---------------------------------------------------------------------------
# Raw + JSON sidecar format (bit-exact test carrier)
# ---------------------------------------------------------------------------

def _sidecar_paths(path: str) -> tuple[str, str]:
    stem = path[:-5] if path.endswith(".json") else path[:-4]
    return stem + ".raw", stem + ".json"


def _read_sidecar(path: str, kind: str | None) -> Volume:
    raw_path, json_path = _sidecar_paths(path)
    with open(json_path, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    for key in ("dims", "spacing"):
        if key not in meta:
            raise ValueError(f"{json_path}: missing field {key!r}")
    dims = tuple(int(d) for d in meta["dims"])
    spacing = tuple(float(s) for s in meta["spacing"])
    n = dims[0] * dims[1] * dims[2]
    data = np.fromfile(raw_path, dtype="<f4")
    if data.size != n:
        raise ValueError(f"{raw_path}: expected {n} float32 values, got {data.size}")
    return Volume(dims=dims, spacing=spacing, data=data, kind=kind or meta.get("kind", INTENSITY))


def _write_sidecar(v: Volume, path: str) -> None:
    raw_path, json_path = _sidecar_paths(path)
    np.asarray(v.data, dtype="<f4").tofile(raw_path)
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump({"dims": list(v.dims), "spacing": list(v.spacing), "kind": v.kind}, fh)
        fh.write("\n")


def read_volume(path: str, kind: str | None = None) -> Volume:
    """Read a NIfTI-1 file (optionally gzipped) or a raw+JSON sidecar pair.

    ``kind`` overrides the value-kind tag; NIfTI carries no such field, so it
    defaults to ``intensity`` there. Kind invariants are enforced on load.
    """
    if not os.path.exists(path):
        raise ValueError(f"{path}: no such file")
    if path.endswith((".raw", ".json")):
        return _read_sidecar(path, kind)
    return _read_nifti(path, kind or INTENSITY)


def write_volume(v: Volume, path: str) -> None:
    """Write a volume; format chosen by extension (.raw/.json sidecar, else NIfTI-1)."""
    if path.endswith((".raw", ".json")):
        _write_sidecar(v, path)
    else:
        _write_nifti(v, path)
