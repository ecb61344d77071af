from .base import (
    MISSING,
    ChangepointPosterior,
    DetectionEvent,
    Hazard,
    OnlineDetector,
    RunResult,
    StreamingDetector,
)
from .bocpd import BocpdDetector, student_t_logpdf
from .cusum import CusumDetector
from .skf import (
    SkfDetector,
    integrated_predictive_log_density,
    new_segment_log_density,
    predictive_log_density,
)

__all__ = [
    "MISSING",
    "Hazard",
    "ChangepointPosterior",
    "DetectionEvent",
    "RunResult",
    "StreamingDetector",
    "OnlineDetector",
    "SkfDetector",
    "BocpdDetector",
    "CusumDetector",
    "student_t_logpdf",
    "integrated_predictive_log_density",
    "new_segment_log_density",
    "predictive_log_density",
]
