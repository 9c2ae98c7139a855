"""Intensity standardization for multi-station MR volumes.

Two analytic procedures: a least-squares linear gain/offset fit over the
overlap of adjacent acquisition stations, and piecewise-linear
percentile-landmark standardization of whole volumes against a reference
profile. Landmarks are computed over foreground voxels (value > 0) so air
background cannot collapse the low percentiles.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .volumes import INTENSITY, Volume

DEFAULT_PERCENTILES = (0.0, 20.0, 40.0, 60.0, 80.0, 95.0)


@dataclass(frozen=True)
class LandmarkProfile:
    """Intensity values at fixed percentiles of a foreground histogram."""

    percentiles: tuple[float, ...]
    landmarks: tuple[float, ...]

    def __post_init__(self) -> None:
        percentiles = tuple(float(p) for p in self.percentiles)
        landmarks = tuple(float(v) for v in self.landmarks)
        if len(percentiles) != len(landmarks):
            raise ValueError("percentiles and landmarks must have equal length")
        if len(percentiles) < 2:
            raise ValueError("a landmark profile needs at least two points")
        if any(percentiles[i] >= percentiles[i + 1] for i in range(len(percentiles) - 1)):
            raise ValueError(f"percentiles must be strictly ascending, got {percentiles}")
        if any(landmarks[i] > landmarks[i + 1] for i in range(len(landmarks) - 1)):
            raise ValueError(f"landmarks must be nondecreasing, got {landmarks}")
        object.__setattr__(self, "percentiles", percentiles)
        object.__setattr__(self, "landmarks", landmarks)

    def to_json(self) -> str:
        return json.dumps({"percentiles": list(self.percentiles),
                           "landmarks": list(self.landmarks)})

    @classmethod
    def from_json(cls, text: str) -> "LandmarkProfile":
        payload = json.loads(text)
        for key in ("percentiles", "landmarks"):
            if key not in payload:
                raise ValueError(f"landmark profile JSON missing field {key!r}")
        return cls(percentiles=tuple(payload["percentiles"]),
                   landmarks=tuple(payload["landmarks"]))


@dataclass(frozen=True)
class OverlapRegion:
    """Paired voxel samples from the overlap of two adjacent stations."""

    values_a: np.ndarray
    values_b: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.values_a, dtype=float).reshape(-1)
        b = np.asarray(self.values_b, dtype=float).reshape(-1)
        if a.size == 0 or a.size != b.size:
            raise ValueError("overlap region needs equal-length, nonempty sample vectors")
        if not (np.isfinite(a).all() and np.isfinite(b).all()):
            raise ValueError("overlap region contains non-finite values")
        object.__setattr__(self, "values_a", a)
        object.__setattr__(self, "values_b", b)


def extract_landmarks(v: Volume, percentiles=DEFAULT_PERCENTILES) -> LandmarkProfile:
    """Percentile landmarks of the foreground (value > 0) intensity distribution.

    Quantiles use linear interpolation between order statistics.
    """
    foreground = v.data[v.data > 0]
    if foreground.size == 0:
        raise ValueError("extract_landmarks: volume has no foreground voxels (value > 0)")
    landmarks = np.percentile(foreground.astype(float), list(percentiles))
    return LandmarkProfile(percentiles=tuple(percentiles), landmarks=tuple(landmarks))


def standardize(v: Volume, source: LandmarkProfile, reference: LandmarkProfile) -> Volume:
    """Map intensities by the piecewise-linear function sending source
    landmarks onto reference landmarks.

    Values beyond the outermost landmarks are extrapolated along the edge
    segments, keeping the map continuous and nondecreasing.
    """
    if source.percentiles != reference.percentiles:
        raise ValueError("source and reference profiles use different percentile lists")
    s = np.asarray(source.landmarks, dtype=float)
    r = np.asarray(reference.landmarks, dtype=float)
    if any(s[i] >= s[i + 1] for i in range(s.size - 1)):
        raise ValueError(f"source landmarks must be strictly increasing, got {tuple(s)}")
    if source.landmarks == reference.landmarks:
        return Volume(dims=v.dims, spacing=v.spacing, data=v.data, kind=INTENSITY)
    data = v.data.astype(float)
    mapped = np.interp(data, s, r)
    lo_slope = (r[1] - r[0]) / (s[1] - s[0])
    hi_slope = (r[-1] - r[-2]) / (s[-1] - s[-2])
    below = data < s[0]
    above = data > s[-1]
    mapped[below] = r[0] + (data[below] - s[0]) * lo_slope
    mapped[above] = r[-1] + (data[above] - s[-1]) * hi_slope
    return Volume(dims=v.dims, spacing=v.spacing, data=mapped, kind=INTENSITY)


def fit_station_gain(overlap: OverlapRegion) -> tuple[float, float]:
    """Least-squares (gain, offset) so that gain * a + offset best matches b."""
    a = overlap.values_a
    b = overlap.values_b
    var_a = float(((a - a.mean()) ** 2).sum())
    if var_a == 0.0:
        raise ValueError("fit_station_gain: degenerate overlap, all station-a values identical")
    gain = float(((a - a.mean()) * (b - b.mean())).sum()) / var_a
    offset = float(b.mean() - gain * a.mean())
    return gain, offset
