"""Temporal correlation kernels and their exact state-space realizations.

Two stationary Matern families are supported, both of which admit exact
finite-dimensional linear-Gaussian state-space forms on arbitrary (possibly
unequally spaced) time grids:

* ``matern12`` -- exponential correlation ``exp(-|d| / range)``; scalar state.
* ``matern52`` -- ``(1 + a + a^2/3) exp(-a)`` with ``a = sqrt(5)|d| / range``;
  three-dimensional state carrying the process and its first two derivatives.

Signal variance is normalized to one throughout; the nugget is the ratio of
observation-noise variance to signal variance and enters the observation
equation only.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .validation import check_nonnegative, check_positive, check_times

__all__ = [
    "KernelFamily",
    "KernelSpec",
    "TimeGrid",
    "DlmSystem",
    "build_dlm",
    "dense_covariance",
]

_SQRT5 = math.sqrt(5.0)


class KernelFamily(str, enum.Enum):
    MATERN12 = "matern12"
    MATERN52 = "matern52"

    @classmethod
    def coerce(cls, value) -> "KernelFamily":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(m.value for m in cls)
            raise InvalidInputError(f"unknown kernel family {value!r}; expected one of: {names}")


@dataclass(frozen=True)
class KernelSpec:
    """Stationary correlation model: family plus range and nugget parameters.

    Parameters
    ----------
    family : KernelFamily or str
        Correlation family.
    range_ : float
        Correlation range (time units), strictly positive.
    nugget : float
        Observation-noise to signal-variance ratio, nonnegative. Added to the
        diagonal of the correlation matrix.
    """

    family: KernelFamily
    range_: float
    nugget: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "family", KernelFamily.coerce(self.family))
        object.__setattr__(self, "range_", check_positive(self.range_, "range_"))
        object.__setattr__(self, "nugget", check_nonnegative(self.nugget, "nugget"))

    @property
    def state_dim(self) -> int:
        return 1 if self.family is KernelFamily.MATERN12 else 3

    def correlation(self, distance) -> np.ndarray:
        """Evaluate the correlation function at nonnegative distances."""
        d = np.abs(np.asarray(distance, dtype=float))
        if self.family is KernelFamily.MATERN12:
            return np.exp(-d / self.range_)
        a = _SQRT5 * d / self.range_
        return (1.0 + a + a * a / 3.0) * np.exp(-a)


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing observation times; unequal spacing allowed."""

    times: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "times", check_times(self.times))

    @classmethod
    def regular(cls, n: int, *, start: float = 1.0, step: float = 1.0) -> "TimeGrid":
        if n < 1:
            raise InvalidInputError(f"grid size must be >= 1, got {n}")
        return cls(start + step * np.arange(n, dtype=float))

    @property
    def n(self) -> int:
        return self.times.size

    @property
    def spacings(self) -> np.ndarray:
        """Per-step gaps ``d_k = t_k - t_{k-1}`` (length ``n - 1``)."""
        return np.diff(self.times)

    def __len__(self) -> int:
        return self.n


def _matern12_transition(range_: float, d: float):
    rho = math.exp(-d / range_)
    g = np.array([[rho]])
    w = np.array([[1.0 - rho * rho]])
    return g, w


def _matern52_stationary_cov(lam: float) -> np.ndarray:
    l2 = lam * lam
    return np.array(
        [
            [1.0, 0.0, -l2 / 3.0],
            [0.0, l2 / 3.0, 0.0],
            [-l2 / 3.0, 0.0, l2 * l2],
        ]
    )


def _matern52_transition(range_: float, d: float):
    # State = (process, first, second derivative). The continuous-time drift
    # matrix is the companion form of (lam + ddt)^3, so drift + lam*I is
    # nilpotent of order 3 and the matrix exponential reduces to a quadratic
    # polynomial times exp(-lam*d) -- no general expm needed.
    lam = _SQRT5 / range_
    l2, l3 = lam * lam, lam * lam * lam
    nil = np.array(
        [
            [lam, 1.0, 0.0],
            [0.0, lam, 1.0],
            [-l3, -3.0 * l2, -2.0 * lam],
        ]
    )
    g = math.exp(-lam * d) * (np.eye(3) + d * nil + (0.5 * d * d) * (nil @ nil))
    pinf = _matern52_stationary_cov(lam)
    w = pinf - g @ pinf @ g.T
    return g, 0.5 * (w + w.T)


@dataclass
class DlmSystem:
    """Per-step state-space matrices realizing a kernel on arbitrary spacings.

    The observation row is ``F = e_1`` (first state coordinate), the initial
    state covariance is the stationary covariance, and transitions are exact
    for any gap, so propagated observation covariances reproduce the analytic
    kernel matrix. Transition matrices are cached per distinct spacing, which
    makes repeated regular-grid steps cheap.
    """

    kernel: KernelSpec
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def state_dim(self) -> int:
        return self.kernel.state_dim

    @property
    def nugget(self) -> float:
        return self.kernel.nugget

    @property
    def initial_cov(self) -> np.ndarray:
        if self.kernel.family is KernelFamily.MATERN12:
            return np.array([[1.0]])
        return _matern52_stationary_cov(_SQRT5 / self.kernel.range_)

    def transition(self, spacing: float):
        """Return ``(G, W)`` for one step of the given positive spacing."""
        if not spacing > 0:
            raise InvalidInputError(f"spacing must be positive, got {spacing!r}")
        hit = self._cache.get(spacing)
        if hit is not None:
            return hit
        if self.kernel.family is KernelFamily.MATERN12:
            out = _matern12_transition(self.kernel.range_, spacing)
        else:
            out = _matern52_transition(self.kernel.range_, spacing)
        if len(self._cache) < 1024:
            self._cache[spacing] = out
        return out

    def matrices_for(self, grid: TimeGrid):
        """All per-step matrices for a grid: ``[(G_2, W_2), ...]`` of length n-1."""
        return [self.transition(d) for d in grid.spacings]

    def implied_covariance(self, grid: TimeGrid) -> np.ndarray:
        """Observation covariance implied by forward propagation plus nugget.

        Quadratic in ``n``; used by equivalence tests, not by the detector.
        """
        n = grid.n
        q = self.state_dim
        cov_states = np.empty((n, n, q, q))
        pinf = self.initial_cov
        for a in range(n):
            cov_states[a, a] = pinf
        for b in range(1, n):
            g, _ = self.transition(grid.times[b] - grid.times[b - 1])
            for a in range(b):
                cov_states[a, b] = cov_states[a, b - 1] @ g.T
        out = np.empty((n, n))
        for a in range(n):
            for b in range(a, n):
                out[a, b] = out[b, a] = cov_states[a, b][0, 0]
        return out + self.nugget * np.eye(n)


def build_dlm(kernel: KernelSpec, grid: TimeGrid | None = None) -> DlmSystem:
    """Construct the exact state-space system realizing ``kernel``.

    The system is grid-agnostic (transitions are functions of the spacing);
    passing ``grid`` simply pre-populates the transition cache.
    """
    if not isinstance(kernel, KernelSpec):
        raise InvalidInputError("kernel must be a KernelSpec")
    system = DlmSystem(kernel)
    if grid is not None:
        system.matrices_for(grid)
    return system


def dense_covariance(kernel: KernelSpec, grid: TimeGrid) -> np.ndarray:
    """Dense ``n x n`` matrix ``K = R + nugget * I`` on the grid.

    Cubic-cost consumers only (oracles, samplers); the detector never builds it.
    """
    t = grid.times
    k = kernel.correlation(t[:, None] - t[None, :])
    k[np.diag_indices_from(k)] += kernel.nugget
    return k
