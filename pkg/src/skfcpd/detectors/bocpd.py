"""Bayesian online changepoint detection with i.i.d. Gaussian segments.

The comparison baseline: same candidate recursion as the sequential Kalman
filter but with independent observations inside each segment, modeled as
Gaussian with unknown mean and variance under a conjugate
normal-inverse-gamma prior, so every per-segment predictive is a closed-form
Student t.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

from ..validation import check_positive
from .base import OnlineDetector

__all__ = ["student_t_logpdf", "BocpdDetector"]


def student_t_logpdf(y, df, loc, scale_sq):
    """Log density of the location-scale Student t; vectorized."""
    df = np.asarray(df, dtype=float)
    z_sq = (np.asarray(y, dtype=float) - loc) ** 2 / scale_sq
    return (
        gammaln(0.5 * (df + 1.0))
        - gammaln(0.5 * df)
        - 0.5 * np.log(df * math.pi * scale_sq)
        - 0.5 * (df + 1.0) * np.log1p(z_sq / df)
    )


class BocpdDetector(OnlineDetector):
    """Run-length style detector assuming independence within segments.

    Parameters
    ----------
    mean0, var0 : float
        Prior center and scale, typically the training-window mean and
        variance.
    hazard : float or Hazard
        Prior changepoint probability.
    kappa0, alpha0 : float
        Prior pseudo-counts for the location and the scale.
    """

    def __init__(
        self,
        mean0: float,
        var0: float,
        hazard,
        *,
        kappa0: float = 1.0,
        alpha0: float = 1.0,
        min_segment_for_report: int = 2,
        truncate_at_detection: bool = True,
    ):
        self.mean0 = float(mean0)
        self.var0 = check_positive(var0, "var0")
        self.kappa0 = check_positive(kappa0, "kappa0")
        self.alpha0 = check_positive(alpha0, "alpha0")
        self.beta0 = self.var0
        super().__init__(
            hazard,
            min_segment_for_report=min_segment_for_report,
            truncate_at_detection=truncate_at_detection,
        )

    def _reset_model(self) -> None:
        # Per-candidate segment statistics, Welford style for stability.
        self._count = np.empty(0)
        self._mean = np.empty(0)
        self._m2 = np.empty(0)

    def posterior_hyperparameters(self):
        """Conjugate posterior (kappa, m, alpha, beta) per live candidate."""
        k = self._count
        kappa = self.kappa0 + k
        m = (self.kappa0 * self.mean0 + k * self._mean) / kappa
        alpha = self.alpha0 + 0.5 * k
        beta = (
            self.beta0
            + 0.5 * self._m2
            + 0.5 * self.kappa0 * k * (self._mean - self.mean0) ** 2 / kappa
        )
        return kappa, m, alpha, beta

    def _predictive(self, y: float) -> np.ndarray:
        kappa, m, alpha, beta = self.posterior_hyperparameters()
        scale_sq = beta * (kappa + 1.0) / (alpha * kappa)
        return student_t_logpdf(y, 2.0 * alpha, m, scale_sq)

    def _advance_candidates(self, spacing: float, y: float) -> np.ndarray:
        pred = self._predictive(y)
        self._count = self._count + 1.0
        delta = y - self._mean
        self._mean = self._mean + delta / self._count
        self._m2 = self._m2 + delta * (y - self._mean)
        return pred

    def _open_candidate(self, t: float, y: float) -> None:
        self._count = np.append(self._count, 1.0)
        self._mean = np.append(self._mean, y)
        self._m2 = np.append(self._m2, 0.0)

    def _drop_candidates(self, count: int) -> None:
        self._count = self._count[count:]
        self._mean = self._mean[count:]
        self._m2 = self._m2[count:]

    def _new_segment_log_density(self, y: float) -> float:
        scale_sq = self.beta0 * (self.kappa0 + 1.0) / (self.alpha0 * self.kappa0)
        return float(student_t_logpdf(y, 2.0 * self.alpha0, self.mean0, scale_sq))
