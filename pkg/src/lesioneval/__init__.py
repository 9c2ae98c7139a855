"""Lesion-level evaluation toolkit for 3D segmentation and detection.

Volumes and file I/O, connected-component lesion instances, instance
matching, detection and boundary-aware segmentation metrics, FROC analysis,
non-parametric statistics, MR intensity standardization, and synthetic
phantoms with known metric values.
"""

__version__ = "0.1.0"

from .volumes import (
    Volume,
    VolumePair,
    binarize,
    check_congruent,
    read_volume,
    write_volume,
    INTENSITY,
    PROBABILITY,
    BINARY_MASK,
    INTEGER_LABELS,
)
from .lesions import (
    LesionInstance,
    connected_components,
    extract_lesions,
    filter_by_volume,
    lesions_to_csv,
)
from .matching import MatchResult, match_lesions, detected_pairs_masks, ANY_OVERLAP, IOU
from .metrics import (
    DetectionMetrics,
    SegmentationMetrics,
    SurfaceSet,
    detection_metrics,
    dice,
    distance_within,
    f2_score,
    nsd,
    surface,
)
from .analysis import (
    ClusterMetrics,
    EvalOptions,
    FoldSummary,
    FrocCurve,
    StratumPoint,
    aggregate,
    cluster_metrics,
    froc,
    pooled_detection,
    select_threshold,
    summary_table,
    threshold_f2_table,
    volume_stratified,
    DEFAULT_THRESHOLDS,
)
from .stats import (
    StatTestResult,
    bonferroni,
    mann_whitney_u,
    shapiro_wilk,
    significance_stars,
    wilcoxon_signed_rank,
)
from .intensity import (
    LandmarkProfile,
    OverlapRegion,
    extract_landmarks,
    fit_station_gain,
    standardize,
    DEFAULT_PERCENTILES,
)
from .phantom import Blob, PhantomSpec, generate, random_phantom_spec, DETECTED_PEAK
