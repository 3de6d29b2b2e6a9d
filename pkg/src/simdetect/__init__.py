"""Detection of sparse signals in single-index models via sliced inverse regression."""

from .baseline_hc import HcResult, hc_statistic, hc_test
from .detect import (
    CalibratedThresholds,
    CalibrationMode,
    TestOutcome,
    TestStatistics,
    calibrate,
    compute_statistics,
    run_test,
)
from .errors import (
    DegenerateResponse,
    DidNotConverge,
    EnumerationTooLarge,
    NotPositiveDefinite,
    NumericalError,
    SimDetectError,
    ThresholdMismatch,
    TiesUnbrokenWarning,
    TooFewObservations,
    ZeroBeta,
)
from .models import CovarianceSpec, CovKind, Dataset, Link, ModelSpec, Support, build_covariance, generate
from .sir import SlicedSummary, gsnr_linear, slice_dataset, top_eigenvalue
from .sparse_eig import SdpResult, SdpSettings, exact_sparse_eigenvalue, sdp_sparse_eigenvalue, soft_threshold_bound

__version__ = "0.1.0"
