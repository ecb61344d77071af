"""skfcpd: online changepoint detection for temporally correlated series.

The detector maintains one Kalman whitening filter per candidate segment
start, which makes every Bayesian update exact at O(1) cost per candidate.
Baseline detectors (run-length BOCPD, two-sided CUSUM), marginal-likelihood
parameter estimation, a simulation and evaluation harness, and an integrated
classification-probability pipeline round out the package.
"""

from .detectors import (
    MISSING,
    BocpdDetector,
    ChangepointPosterior,
    CusumDetector,
    DetectionEvent,
    Hazard,
    RunResult,
    SkfDetector,
    new_segment_log_density,
    predictive_log_density,
)
from .errors import (
    CalibrationError,
    DataError,
    EstimationError,
    InvalidInputError,
    NumericalError,
    SkfcpdError,
)
from .estimation import (
    EstimationResult,
    OptimizerSettings,
    TrainingSet,
    estimate,
    integrated_marginal_loglik,
)
from .estimators import (
    BocpdChangepointDetector,
    CusumChangepointDetector,
    SkfChangepointDetector,
)
from .kernels import DlmSystem, KernelFamily, KernelSpec, TimeGrid, build_dlm, dense_covariance
from .metrics import (
    DelayOutcome,
    MetricReport,
    Segmentation,
    WindowScore,
    covering,
    detection_delay,
    window_confusion,
)
from .pipeline import (
    PipelineConfig,
    PipelineResult,
    ScreeningConfig,
    ScreeningResult,
    logit_transform,
    run_pipeline,
    screening_test,
)
from .sampling import GpSegmentModel, Scenario, sample_gp, simulate_scenario
from .whitener import SegmentAccumulator, advance, init_segment, quadratic_form

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # kernels / state space
    "KernelFamily",
    "KernelSpec",
    "TimeGrid",
    "DlmSystem",
    "build_dlm",
    "dense_covariance",
    # sampling
    "GpSegmentModel",
    "Scenario",
    "sample_gp",
    "simulate_scenario",
    # whitening
    "SegmentAccumulator",
    "init_segment",
    "advance",
    "quadratic_form",
    # detectors
    "MISSING",
    "Hazard",
    "ChangepointPosterior",
    "DetectionEvent",
    "RunResult",
    "SkfDetector",
    "BocpdDetector",
    "CusumDetector",
    "predictive_log_density",
    "new_segment_log_density",
    # estimation
    "TrainingSet",
    "OptimizerSettings",
    "EstimationResult",
    "estimate",
    "integrated_marginal_loglik",
    # metrics
    "Segmentation",
    "DelayOutcome",
    "MetricReport",
    "WindowScore",
    "covering",
    "detection_delay",
    "window_confusion",
    # pipeline
    "PipelineConfig",
    "PipelineResult",
    "ScreeningConfig",
    "ScreeningResult",
    "logit_transform",
    "screening_test",
    "run_pipeline",
    # sklearn-style wrappers
    "SkfChangepointDetector",
    "BocpdChangepointDetector",
    "CusumChangepointDetector",
    # errors
    "SkfcpdError",
    "InvalidInputError",
    "DataError",
    "NumericalError",
    "CalibrationError",
    "EstimationError",
]
