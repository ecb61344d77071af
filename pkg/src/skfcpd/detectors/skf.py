"""The sequential-Kalman-filter changepoint detector.

One whitening filter per candidate most-recent-changepoint start runs in a
shared bank, so each incoming observation costs O(1) work per live candidate.
The per-candidate predictive density integrates the segment mean and variance
out under the scale-invariant objective prior; in terms of the whitened
running sums it is, for a segment reaching n >= 3 points,

    log Gamma((n-1)/2) - log Gamma((n-2)/2)
      - (1/2) log Q_n - (1/2) log(S1_n / S1_{n-1})
      - [ ((n-1)/2) log q_n - ((n-2)/2) log q_{n-1} ],

where ``Q_n`` is the one-step predictive variance, ``S1`` the whitened-ones
sum of squares, and ``q`` the mean-profiled quadratic form. The prior
normalization constant sqrt(pi) is dropped from this branch, uniformly over
candidates; the offset it induces against the other branches is part of the
weighting scheme (it rewards candidates per absorbed observation) and is
absorbed by run-length calibration of the hazard. A two-point segment has too
little data to integrate both parameters jointly; the location is integrated
under a flat prior first and the scale out of the resulting conditional,
giving the ``n == 2`` branch with exponent -1/2 on the quadratic form and no
dropped constant.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

from ..errors import InvalidInputError
from ..kernels import DlmSystem, KernelSpec, build_dlm
from ..whitener import FilterBank, SegmentAccumulator
from .base import OnlineDetector

__all__ = [
    "QUAD_FORM_TINY",
    "LOG_DENSITY_FLOOR",
    "integrated_predictive_log_density",
    "predictive_log_density",
    "new_segment_log_density",
    "SkfDetector",
]

# Degenerate-data guard: quadratic forms below this are treated as this value
# inside logs (two identical consecutive points carry no scale information),
# and each per-step log-density contribution is clamped into
# [LOG_DENSITY_FLOOR, -LOG_DENSITY_FLOOR] so candidates stay alive and finite.
QUAD_FORM_TINY = 1e-300
LOG_DENSITY_FLOOR = -745.0


def integrated_predictive_log_density(
    n_new,
    pred_var,
    ones_sumsq_old,
    ones_sumsq_new,
    quad_old,
    quad_new,
    *,
    log_density_floor: float = LOG_DENSITY_FLOOR,
) -> np.ndarray:
    """Vectorized predictive log density for segments after absorbing y_n.

    ``n_new`` is each segment's observation count including the new point
    (>= 2); the remaining arguments are the whitened summaries before/after
    the update. Works on scalars or aligned arrays.
    """
    n_new = np.asarray(n_new, dtype=float)
    pred_var = np.asarray(pred_var, dtype=float)
    base = -0.5 * np.log(pred_var) - 0.5 * (
        np.log(np.asarray(ones_sumsq_new, dtype=float))
        - np.log(np.asarray(ones_sumsq_old, dtype=float))
    )
    q_new = np.maximum(np.asarray(quad_new, dtype=float), QUAD_FORM_TINY)
    q_old = np.maximum(np.asarray(quad_old, dtype=float), QUAD_FORM_TINY)

    out = np.empty_like(base)
    grown = n_new >= 3
    if np.any(grown):
        half_new = 0.5 * (n_new[grown] - 1.0)
        half_old = 0.5 * (n_new[grown] - 2.0)
        out[grown] = (
            base[grown]
            + gammaln(half_new)
            - gammaln(half_old)
            - (half_new * np.log(q_new[grown]) - half_old * np.log(q_old[grown]))
        )
    pair = ~grown
    if np.any(pair):
        out[pair] = base[pair] - 0.5 * np.log(q_new[pair])
    return np.clip(out, log_density_floor, -log_density_floor)


def predictive_log_density(
    acc: SegmentAccumulator,
    y: float,
    spacing: float = 1.0,
    *,
    log_density_floor: float = LOG_DENSITY_FLOOR,
) -> float:
    """Log predictive density of ``y`` under the segment held by ``acc``.

    The accumulator itself is not modified (a trial advance is used). Constant
    shifts of a segment with three or more points leave the value unchanged:
    the location parameter is integrated out.
    """
    if acc.n < 1:
        raise InvalidInputError("segment must contain at least one observation")
    trial = acc.advanced(spacing, float(y))
    value = integrated_predictive_log_density(
        np.array([trial.n]),
        np.array([trial.last_pred_var]),
        np.array([acc.ones_sumsq]),
        np.array([trial.ones_sumsq]),
        np.array([acc.quadratic_form()]),
        np.array([trial.quadratic_form()]),
        log_density_floor=log_density_floor,
    )
    return float(value[0])


def new_segment_log_density(y: float) -> float:
    """Log density of an observation opening a fresh segment.

    Under the improper segment prior this is defined only up to a constant;
    it is fixed to 0 so the hazard alone controls the propensity to open new
    segments, and the choice is absorbed by run-length calibration.
    """
    return 0.0


class SkfDetector(OnlineDetector):
    """Online changepoint detector for temporally correlated observations.

    Parameters
    ----------
    kernel : KernelSpec
        Fitted correlation model (family, range, nugget); see
        :func:`skfcpd.estimation.estimate` for fitting.
    hazard : float or Hazard
        Prior changepoint probability, constant or per-time.
    min_segment_for_report : int
        Candidates backed by fewer observations are kept in the recursion but
        never reported as the MAP changepoint.
    truncate_at_detection : bool
        Drop candidates older than the last detected changepoint (the O(n')
        mode). Disable only for exactness checks against dense recursions.
    log_density_floor : float
        Clamp for per-step log-density contributions (degenerate-data guard).
    """

    def __init__(
        self,
        kernel: KernelSpec,
        hazard,
        *,
        min_segment_for_report: int = 2,
        truncate_at_detection: bool = True,
        log_density_floor: float = LOG_DENSITY_FLOOR,
    ):
        self.kernel = kernel
        self.system: DlmSystem = build_dlm(kernel)
        self.log_density_floor = float(log_density_floor)
        super().__init__(
            hazard,
            min_segment_for_report=min_segment_for_report,
            truncate_at_detection=truncate_at_detection,
        )

    def _reset_model(self) -> None:
        self._bank = FilterBank(self.system)

    def _advance_candidates(self, spacing: float, y: float) -> np.ndarray:
        res = self._bank.advance(spacing, y)
        return integrated_predictive_log_density(
            res.n_new,
            res.pred_var,
            res.ones_sumsq_old,
            res.ones_sumsq_new,
            res.quad_old,
            res.quad_new,
            log_density_floor=self.log_density_floor,
        )

    def _open_candidate(self, t: float, y: float) -> None:
        self._bank.append(y)

    def _drop_candidates(self, count: int) -> None:
        self._bank.drop_leading(count)

    def _new_segment_log_density(self, y: float) -> float:
        return new_segment_log_density(y)
