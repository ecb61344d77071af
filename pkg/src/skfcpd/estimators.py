"""Scikit-learn style wrappers around the online detectors.

Each estimator follows the fit/predict contract: ``fit`` consumes a
change-free training series (or a stack of them) to set the data-dependent
parameters, ``predict`` runs the online detector over a series and returns
the detected changepoint times. ``get_params``/``set_params`` come from
``sklearn.base.BaseEstimator`` so the detectors compose with pipelines and
search utilities.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .detectors import BocpdDetector, CusumDetector, SkfDetector
from .errors import InvalidInputError
from .estimation import OptimizerSettings, TrainingSet, estimate
from .kernels import KernelSpec, TimeGrid

__all__ = [
    "SkfChangepointDetector",
    "BocpdChangepointDetector",
    "CusumChangepointDetector",
]


def _as_series_matrix(X) -> list[np.ndarray]:
    """Interpret X as one series (1-D) or a stack of series (2-D rows)."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        return [arr]
    if arr.ndim == 2:
        return [row for row in arr]
    raise InvalidInputError(f"X must be 1-D or 2-D, got shape {arr.shape}")


def _as_single_series(X) -> np.ndarray:
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise InvalidInputError(f"expected a single series, got shape {arr.shape}")
    return arr


def _default_times(n: int, times) -> np.ndarray:
    if times is None:
        return np.arange(1.0, n + 1.0)
    return np.asarray(times, dtype=float)


class SkfChangepointDetector(BaseEstimator):
    """Changepoint detection with a Gaussian-process segment model.

    Parameters
    ----------
    kernel : str
        Correlation family, ``"matern12"`` or ``"matern52"``.
    range_, nugget : float or None
        Correlation parameters; left ``None`` they are fitted in ``fit`` by
        maximizing the integrated marginal likelihood of the training series.
    hazard : float
        Prior changepoint probability per observation.
    min_segment_for_report : int
        Shortest segment the detector will report as a changepoint.
    truncate_at_detection : bool
        Keep per-step cost linear in the distance to the last detection.
    """

    def __init__(
        self,
        kernel: str = "matern12",
        range_: float | None = None,
        nugget: float | None = None,
        hazard: float = 0.02,
        min_segment_for_report: int = 2,
        truncate_at_detection: bool = True,
    ):
        self.kernel = kernel
        self.range_ = range_
        self.nugget = nugget
        self.hazard = hazard
        self.min_segment_for_report = min_segment_for_report
        self.truncate_at_detection = truncate_at_detection

    def fit(self, X, y=None, times=None):
        """Fit correlation parameters on change-free training series.

        ``X`` is one series (1-D) or several stacked row-wise (2-D); ``times``
        applies to every row when given.
        """
        if self.range_ is not None and self.nugget is not None:
            self.range_fitted_ = float(self.range_)
            self.nugget_fitted_ = float(self.nugget)
        else:
            rows = _as_series_matrix(X)
            grid = TimeGrid(_default_times(len(rows[0]), times))
            result = estimate(
                TrainingSet.from_arrays([(grid, row) for row in rows]),
                self.kernel,
                OptimizerSettings(grid_size=6, restarts=2, max_iterations=200),
            )
            self.range_fitted_ = result.range_
            self.nugget_fitted_ = result.nugget
            self.estimation_result_ = result
        self.kernel_ = KernelSpec(
            family=self.kernel, range_=self.range_fitted_, nugget=self.nugget_fitted_
        )
        return self

    def online(self) -> SkfDetector:
        """A fresh streaming detector with the fitted parameters."""
        self._check_fitted()
        return SkfDetector(
            self.kernel_,
            self.hazard,
            min_segment_for_report=self.min_segment_for_report,
            truncate_at_detection=self.truncate_at_detection,
        )

    def predict(self, X, times=None) -> np.ndarray:
        """Detected changepoint times for one series."""
        values = _as_single_series(X)
        run = self.online().run(values, _default_times(len(values), times), store_posteriors=False)
        return np.asarray(run.changepoints, dtype=float)

    def _check_fitted(self):
        if not hasattr(self, "kernel_"):
            raise InvalidInputError("detector is not fitted; call fit first")


class BocpdChangepointDetector(BaseEstimator):
    """Run-length detector with i.i.d. Gaussian segments (conjugate prior)."""

    def __init__(
        self,
        hazard: float = 0.02,
        kappa0: float = 1.0,
        alpha0: float = 1.0,
        min_segment_for_report: int = 2,
        truncate_at_detection: bool = True,
    ):
        self.hazard = hazard
        self.kappa0 = kappa0
        self.alpha0 = alpha0
        self.min_segment_for_report = min_segment_for_report
        self.truncate_at_detection = truncate_at_detection

    def fit(self, X, y=None):
        """Center the prior on the training series' mean and variance."""
        values = np.concatenate([row for row in _as_series_matrix(X)])
        if len(values) < 2:
            raise InvalidInputError("training series needs at least 2 observations")
        self.mean0_ = float(np.mean(values))
        self.var0_ = float(max(np.var(values, ddof=1), 1e-12))
        return self

    def online(self) -> BocpdDetector:
        self._check_fitted()
        return BocpdDetector(
            self.mean0_,
            self.var0_,
            self.hazard,
            kappa0=self.kappa0,
            alpha0=self.alpha0,
            min_segment_for_report=self.min_segment_for_report,
            truncate_at_detection=self.truncate_at_detection,
        )

    def predict(self, X, times=None) -> np.ndarray:
        values = _as_single_series(X)
        run = self.online().run(values, _default_times(len(values), times), store_posteriors=False)
        return np.asarray(run.changepoints, dtype=float)

    def _check_fitted(self):
        if not hasattr(self, "mean0_"):
            raise InvalidInputError("detector is not fitted; call fit first")


class CusumChangepointDetector(BaseEstimator):
    """Two-sided CUSUM chart standardized on the training series."""

    def __init__(self, threshold: float = 8.0, drift: float = 0.5):
        self.threshold = threshold
        self.drift = drift

    def fit(self, X, y=None):
        values = np.concatenate([row for row in _as_series_matrix(X)])
        if len(values) < 2:
            raise InvalidInputError("training series needs at least 2 observations")
        self.mean_ = float(np.mean(values))
        self.sd_ = float(max(np.std(values, ddof=1), 1e-9))
        return self

    def online(self) -> CusumDetector:
        self._check_fitted()
        return CusumDetector(self.mean_, self.sd_, threshold=self.threshold, drift=self.drift)

    def predict(self, X, times=None) -> np.ndarray:
        values = _as_single_series(X)
        run = self.online().run(values, _default_times(len(values), times), store_posteriors=False)
        return np.asarray(run.changepoints, dtype=float)

    def _check_fitted(self):
        if not hasattr(self, "mean_"):
            raise InvalidInputError("detector is not fitted; call fit first")
