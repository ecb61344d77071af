"""Per-segment Kalman whitening with O(1) work per observation.

A segment's observations have covariance ``K = R + nugget * I`` (unit signal
variance). Running the segment's state-space filter on the all-ones pseudo
observations and on the data yields standardized one-step-ahead innovations

    u_k = (1 - f_k) / sqrt(Q_k),      v_k = (y_k - f_k') / sqrt(Q_k),

which are exactly the entries of ``inv(chol(K)) @ 1`` and ``inv(chol(K)) @ y``.
Three running scalars per segment therefore recover every dense quantity the
detector and likelihood need:

    sum(u^2) = 1' K^-1 1,   sum(v^2) = y' K^-1 y,   sum(u v) = y' K^-1 1,

and ``sum(log Q_k) = log det K``. The one-step predictive variance ``Q_k`` is
data independent, so the two runs share every covariance-side computation.

`FilterBank` advances many segments in lock step (they all receive the same
new observation, with per-segment state because segments start at different
times); `SegmentAccumulator` is the single-segment view used by estimation,
the screening test, and the oracle tests.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InvalidInputError, NumericalError
from .kernels import DlmSystem

__all__ = [
    "PRED_VAR_FLOOR",
    "FilterBank",
    "WhitenerState",
    "SegmentAccumulator",
    "init_segment",
    "advance",
    "quadratic_form",
]

# Predictive variances this small indicate a degenerate kernel/grid; downstream
# divides by sqrt(Q), so fail loudly instead of clamping.
PRED_VAR_FLOOR = 1e-12


class AdvanceResult:
    """Per-segment quantities produced by one bank step.

    Arrays are aligned with the bank's live segments *before* the step (the
    new-observation update has been committed when this is returned).
    """

    __slots__ = ("pred_var", "ones_sumsq_old", "ones_sumsq_new", "quad_old", "quad_new", "n_new")

    def __init__(self, pred_var, ones_sumsq_old, ones_sumsq_new, quad_old, quad_new, n_new):
        self.pred_var = pred_var
        self.ones_sumsq_old = ones_sumsq_old
        self.ones_sumsq_new = ones_sumsq_new
        self.quad_old = quad_old
        self.quad_new = quad_new
        self.n_new = n_new


def _quad(ones_sumsq, data_sumsq, cross_sum):
    """Quadratic form ``y' M y = v'v - (u'v)^2 / u'u``; clipped at 0."""
    return np.maximum(data_sumsq - cross_sum * cross_sum / ones_sumsq, 0.0)


class FilterBank:
    """A bank of per-segment whitening filters advancing in lock step.

    Segments are appended as new candidate start points arrive and dropped
    from the front on truncation; all live segments share each step's
    transition matrices, so one step costs a constant number of vectorized
    operations regardless of the state dimension (q <= 3).
    """

    def __init__(self, system: DlmSystem, capacity: int = 32):
        self.system = system
        q = system.state_dim
        self._eta = system.nugget
        self._init_cov = system.initial_cov
        self._eye = np.eye(q)
        cap = max(int(capacity), 4)
        self._m_ones = np.zeros((cap, q))
        self._m_data = np.zeros((cap, q))
        self._cov = np.zeros((cap, q, q))
        self.ones_sumsq = np.zeros(cap)
        self.data_sumsq = np.zeros(cap)
        self.cross_sum = np.zeros(cap)
        self.log_det = np.zeros(cap)
        self.pred_mean_ones = np.zeros(cap)
        self.pred_mean_data = np.zeros(cap)
        self.pred_var = np.zeros(cap)
        self.n_obs = np.zeros(cap, dtype=np.int64)
        self._lo = 0
        self._hi = 0

    # -- bookkeeping ---------------------------------------------------------

    @property
    def n_live(self) -> int:
        return self._hi - self._lo

    @property
    def live(self) -> slice:
        return slice(self._lo, self._hi)

    def _arrays(self):
        return (
            self._m_ones,
            self._m_data,
            self._cov,
            self.ones_sumsq,
            self.data_sumsq,
            self.cross_sum,
            self.log_det,
            self.pred_mean_ones,
            self.pred_mean_data,
            self.pred_var,
            self.n_obs,
        )

    def _ensure_tail(self):
        cap = self.n_obs.shape[0]
        if self._hi < cap:
            return
        n = self.n_live
        if self._lo >= cap // 2:
            # Plenty of dead space in front: slide instead of growing.
            for arr in self._arrays():
                arr[:n] = arr[self._lo : self._hi]
            self._lo, self._hi = 0, n
            return
        self._grow(max(2 * cap, 8))

    def _grow(self, new_cap: int):
        def enlarge(arr):
            shape = (new_cap,) + arr.shape[1:]
            out = np.zeros(shape, dtype=arr.dtype)
            out[: self._hi] = arr[: self._hi]
            return out

        self._m_ones = enlarge(self._m_ones)
        self._m_data = enlarge(self._m_data)
        self._cov = enlarge(self._cov)
        self.ones_sumsq = enlarge(self.ones_sumsq)
        self.data_sumsq = enlarge(self.data_sumsq)
        self.cross_sum = enlarge(self.cross_sum)
        self.log_det = enlarge(self.log_det)
        self.pred_mean_ones = enlarge(self.pred_mean_ones)
        self.pred_mean_data = enlarge(self.pred_mean_data)
        self.pred_var = enlarge(self.pred_var)
        self.n_obs = enlarge(self.n_obs)

    def copy(self) -> "FilterBank":
        out = FilterBank.__new__(FilterBank)
        out.system = self.system
        out._eta = self._eta
        out._init_cov = self._init_cov
        out._eye = self._eye
        (
            out._m_ones,
            out._m_data,
            out._cov,
            out.ones_sumsq,
            out.data_sumsq,
            out.cross_sum,
            out.log_det,
            out.pred_mean_ones,
            out.pred_mean_data,
            out.pred_var,
            out.n_obs,
        ) = (arr.copy() for arr in self._arrays())
        out._lo, out._hi = self._lo, self._hi
        return out

    def drop_leading(self, count: int):
        """Forget the ``count`` oldest live segments."""
        if count < 0 or count > self.n_live:
            raise InvalidInputError(f"cannot drop {count} of {self.n_live} segments")
        self._lo += count

    # -- filtering -----------------------------------------------------------

    def append(self, y: float):
        """Start a new segment whose first observation is ``y``."""
        self._ensure_tail()
        k = self._hi
        self._hi += 1
        b = self._init_cov
        q1 = b[0, 0] + self._eta
        if q1 < PRED_VAR_FLOOR:
            raise NumericalError(f"initial predictive variance {q1:g} below floor")
        gain = b[:, 0] / q1
        self._m_ones[k] = gain
        self._m_data[k] = gain * y
        j = self._eye.copy()
        j[:, 0] -= gain
        self._cov[k] = j @ b @ j.T + self._eta * np.outer(gain, gain)
        rq = math.sqrt(q1)
        u, v = 1.0 / rq, y / rq
        self.ones_sumsq[k] = u * u
        self.data_sumsq[k] = v * v
        self.cross_sum[k] = u * v
        self.log_det[k] = math.log(q1)
        self.pred_mean_ones[k] = 0.0
        self.pred_mean_data[k] = 0.0
        self.pred_var[k] = q1
        self.n_obs[k] = 1

    def advance(self, spacing: float, y: float) -> AdvanceResult:
        """Advance every live segment by ``spacing`` and absorb observation ``y``."""
        if self.n_live == 0:
            raise InvalidInputError("advance called on an empty bank")
        g, w = self.system.transition(spacing)
        live = self.live
        m_u, m_v, cov = self._m_ones[live], self._m_data[live], self._cov[live]

        a_u = m_u @ g.T
        a_v = m_v @ g.T
        b = g @ (cov @ g.T) + w
        q = b[:, 0, 0] + self._eta
        if np.any(q < PRED_VAR_FLOOR):
            raise NumericalError(
                f"predictive variance below floor {PRED_VAR_FLOOR:g}; "
                "kernel/grid combination is numerically degenerate"
            )
        resid_u = 1.0 - a_u[:, 0]
        resid_v = y - a_v[:, 0]
        gain = b[:, :, 0] / q[:, None]

        self._m_ones[live] = a_u + gain * resid_u[:, None]
        self._m_data[live] = a_v + gain * resid_v[:, None]
        j = np.broadcast_to(self._eye, b.shape).copy()
        j[:, :, 0] -= gain
        cov_new = j @ b @ j.transpose(0, 2, 1) + self._eta * (gain[:, :, None] * gain[:, None, :])
        self._cov[live] = 0.5 * (cov_new + cov_new.transpose(0, 2, 1))

        ones_old = self.ones_sumsq[live].copy()
        quad_old = _quad(ones_old, self.data_sumsq[live], self.cross_sum[live])

        rq = np.sqrt(q)
        u = resid_u / rq
        v = resid_v / rq
        self.ones_sumsq[live] += u * u
        self.data_sumsq[live] += v * v
        self.cross_sum[live] += u * v
        self.log_det[live] += np.log(q)
        self.pred_mean_ones[live] = a_u[:, 0]
        self.pred_mean_data[live] = a_v[:, 0]
        self.pred_var[live] = q
        self.n_obs[live] += 1

        ones_new = self.ones_sumsq[live]
        quad_new = _quad(ones_new, self.data_sumsq[live], self.cross_sum[live])
        return AdvanceResult(q, ones_old, ones_new, quad_old, quad_new, self.n_obs[live])

    def quadratic_forms(self) -> np.ndarray:
        live = self.live
        return _quad(self.ones_sumsq[live], self.data_sumsq[live], self.cross_sum[live])


class WhitenerState:
    """Read-only view of one run's filter state (mean, covariance, last f/Q)."""

    __slots__ = ("mean", "cov", "pred_mean", "pred_var", "step")

    def __init__(self, mean, cov, pred_mean, pred_var, step):
        self.mean = mean
        self.cov = cov
        self.pred_mean = pred_mean
        self.pred_var = pred_var
        self.step = step


class SegmentAccumulator:
    """Whitening state and running sums for a single candidate segment.

    Values are immutable from the caller's perspective: `advance` returns a
    new accumulator. Missing observations propagate the state by accumulating
    the gap into the next real step's spacing, which is exact for these
    state-space models (transition semigroup property).
    """

    __slots__ = ("start", "_bank", "pending_gap")

    def __init__(self, start, bank: FilterBank, pending_gap: float = 0.0):
        self.start = start
        self._bank = bank
        self.pending_gap = pending_gap

    # -- running sums ----------------------------------------------------

    @property
    def n(self) -> int:
        """Number of observations absorbed so far."""
        return int(self._bank.n_obs[0])

    @property
    def ones_sumsq(self) -> float:
        return float(self._bank.ones_sumsq[0])

    @property
    def data_sumsq(self) -> float:
        return float(self._bank.data_sumsq[0])

    @property
    def cross_sum(self) -> float:
        return float(self._bank.cross_sum[0])

    @property
    def log_det(self) -> float:
        """Running ``sum(log Q_k)``, i.e. the segment's ``log det K``."""
        return float(self._bank.log_det[0])

    @property
    def last_pred_var(self) -> float:
        return float(self._bank.pred_var[0])

    @property
    def ones_state(self) -> WhitenerState:
        b = self._bank
        return WhitenerState(
            b._m_ones[0].copy(), b._cov[0].copy(), float(b.pred_mean_ones[0]),
            float(b.pred_var[0]), self.n,
        )

    @property
    def data_state(self) -> WhitenerState:
        b = self._bank
        return WhitenerState(
            b._m_data[0].copy(), b._cov[0].copy(), float(b.pred_mean_data[0]),
            float(b.pred_var[0]), self.n,
        )

    # -- evolution ---------------------------------------------------------

    def advanced(self, spacing: float, y) -> "SegmentAccumulator":
        if not spacing > 0:
            raise InvalidInputError(f"spacing must be positive, got {spacing!r}")
        if y is None or (isinstance(y, float) and math.isnan(y)):
            return SegmentAccumulator(self.start, self._bank, self.pending_gap + spacing)
        bank = self._bank.copy()
        bank.advance(self.pending_gap + spacing, float(y))
        return SegmentAccumulator(self.start, bank, 0.0)

    def quadratic_form(self) -> float:
        return float(_quad(self.ones_sumsq, self.data_sumsq, self.cross_sum))


def init_segment(system: DlmSystem, start, y: float) -> SegmentAccumulator:
    """Open a segment starting at label ``start`` with first observation ``y``."""
    bank = FilterBank(system, capacity=4)
    bank.append(float(y))
    return SegmentAccumulator(start, bank)


def advance(acc: SegmentAccumulator, spacing: float, y) -> SegmentAccumulator:
    """Absorb the next observation (or a gap, when ``y`` is None/NaN)."""
    return acc.advanced(spacing, y)


def quadratic_form(acc: SegmentAccumulator) -> float:
    """``y' M y``: the GLS residual sum after profiling out the segment mean."""
    return acc.quadratic_form()
