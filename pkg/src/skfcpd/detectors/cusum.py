"""Two-sided CUSUM on standardized observations.

The classical mean-shift chart: standardize against a reference mean and
standard deviation, accumulate positive and negative excursions beyond a
reference drift, and alarm when either side crosses the threshold. Statistics
reset to zero after each alarm. Unlike the Bayesian detectors it never looks
back, so the reported changepoint is the alarm time itself.
"""

from __future__ import annotations

import math

from ..errors import InvalidInputError
from .base import MISSING, DetectionEvent, StreamingDetector

__all__ = ["CusumDetector"]


class CusumDetector(StreamingDetector):
    """Streaming two-sided CUSUM.

    Parameters
    ----------
    mean, sd : float
        Standardization from a change-free reference window.
    threshold : float
        Alarm level ``h`` on the cumulative statistics.
    drift : float
        Reference value ``k`` subtracted from each standardized excursion;
        0.5 targets one-standard-deviation mean shifts.
    """

    def __init__(self, mean: float, sd: float, threshold: float, *, drift: float = 0.5):
        self.mean = float(mean)
        if not sd > 0:
            raise InvalidInputError(f"standardization sd must be positive, got {sd!r}")
        self.sd = float(sd)
        if not threshold > 0:
            raise InvalidInputError(f"threshold must be positive, got {threshold!r}")
        self.threshold = float(threshold)
        self.drift = float(drift)
        self.reset()

    def reset(self) -> None:
        self.stat_pos = 0.0
        self.stat_neg = 0.0
        self._last_time = None

    def step(self, t: float, y=MISSING):
        t = float(t)
        if self._last_time is not None and t <= self._last_time:
            raise InvalidInputError(
                f"time must be strictly increasing: got {t} after {self._last_time}"
            )
        self._last_time = t
        if y is None or (isinstance(y, float) and math.isnan(y)):
            return None, None
        z = (float(y) - self.mean) / self.sd
        self.stat_pos = max(0.0, self.stat_pos + z - self.drift)
        self.stat_neg = max(0.0, self.stat_neg - z - self.drift)
        if max(self.stat_pos, self.stat_neg) > self.threshold:
            weight = max(self.stat_pos, self.stat_neg)
            self.stat_pos = 0.0
            self.stat_neg = 0.0
            return None, DetectionEvent(time=t, changepoint=t, map_weight=weight)
        return None, None
