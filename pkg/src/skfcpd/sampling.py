"""Gaussian-process samplers and changepoint scenario generators."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidInputError, NumericalError
from .kernels import KernelSpec, TimeGrid, dense_covariance
from .metrics import Segmentation
from .validation import check_positive

__all__ = ["GpSegmentModel", "sample_gp", "Scenario", "simulate_scenario"]


@dataclass(frozen=True)
class GpSegmentModel:
    """Distribution of one segment: mean, signal variance, and kernel.

    The detector integrates the mean and variance out; they exist here so the
    simulator (and the dense oracles) can generate and evaluate segments.
    """

    mean: float
    signal_variance: float
    kernel: KernelSpec

    def __post_init__(self):
        object.__setattr__(
            self, "signal_variance", check_positive(self.signal_variance, "signal_variance")
        )


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_gp(model: GpSegmentModel, grid: TimeGrid, seed) -> np.ndarray:
    """Draw one path from ``MN(mean * 1, signal_variance * K)`` on the grid.

    Deterministic given an integer seed; pass a ``numpy.random.Generator`` to
    chain draws. Dense Cholesky, so intended for desk-scale ``n``.
    """
    rng = _as_rng(seed)
    cov = dense_covariance(model.kernel, grid)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:  # should not happen for a valid kernel
        raise NumericalError(f"covariance Cholesky failed: {exc}") from exc
    z = rng.standard_normal(grid.n)
    return model.mean + np.sqrt(model.signal_variance) * (chol @ z)


@dataclass(frozen=True)
class Scenario:
    """A piecewise-stationary series: independent GP segments glued at changepoints.

    ``changepoints`` follow the segmentation convention: index ``c`` (1-based)
    is the first index drawn from the next segment model. ``segment_models``
    must have exactly ``len(changepoints) + 1`` entries.
    """

    n: int
    segment_models: tuple
    changepoints: tuple = ()
    dt: float = 1.0
    name: str = ""

    def __post_init__(self):
        cps = tuple(int(c) for c in self.changepoints)
        if any(c2 <= c1 for c1, c2 in zip(cps, cps[1:])):
            raise InvalidInputError("changepoints must be strictly increasing")
        if any(c < 2 or c > self.n for c in cps):
            raise InvalidInputError(f"changepoint indices must lie in 2..{self.n}")
        if len(self.segment_models) != len(cps) + 1:
            raise InvalidInputError(
                f"need {len(cps) + 1} segment models for {len(cps)} changepoints, "
                f"got {len(self.segment_models)}"
            )
        object.__setattr__(self, "changepoints", cps)
        object.__setattr__(self, "segment_models", tuple(self.segment_models))

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid.regular(self.n, start=self.dt, step=self.dt)

    @classmethod
    def single_shift(
        cls,
        kind: str,
        *,
        pre: GpSegmentModel,
        post_value: float,
        changepoint: int,
        n: int,
        dt: float = 1.0,
    ) -> "Scenario":
        """One change in ``mean``, ``variance``, or ``range`` at ``changepoint``."""
        post = _shifted(pre, kind, post_value)
        return cls(
            n=n,
            segment_models=(pre, post),
            changepoints=(changepoint,),
            dt=dt,
            name=f"{kind}-shift",
        )

    @classmethod
    def alternating(
        cls,
        kind: str,
        *,
        pre: GpSegmentModel,
        post_value: float,
        changepoints,
        n: int,
        dt: float = 1.0,
    ) -> "Scenario":
        """Alternate between the baseline and the shifted model at each changepoint."""
        cps = tuple(changepoints)
        post = _shifted(pre, kind, post_value)
        models = tuple(post if i % 2 else pre for i in range(len(cps) + 1))
        return cls(
            n=n, segment_models=models, changepoints=cps, dt=dt, name=f"multi-{kind}-shift"
        )


def _shifted(pre: GpSegmentModel, kind: str, value: float) -> GpSegmentModel:
    if kind == "mean":
        return replace(pre, mean=float(value))
    if kind == "variance":
        return replace(pre, signal_variance=float(value))
    if kind == "range":
        return replace(pre, kernel=replace(pre.kernel, range_=float(value)))
    raise InvalidInputError(f"unknown shift kind {kind!r}; expected mean, variance, or range")


def simulate_scenario(scenario: Scenario, seed) -> tuple[np.ndarray, Segmentation]:
    """Sample one replicate: mutually independent segments, concatenated.

    Returns the observation vector on the scenario grid and the ground-truth
    segmentation.
    """
    rng = _as_rng(seed)
    grid = scenario.grid
    truth = Segmentation(n=scenario.n, changepoints=scenario.changepoints)
    y = np.empty(scenario.n)
    for model, (start, end) in zip(scenario.segment_models, truth.segments):
        seg_grid = TimeGrid(grid.times[start - 1 : end])
        y[start - 1 : end] = sample_gp(model, seg_grid, rng)
    return y, truth
