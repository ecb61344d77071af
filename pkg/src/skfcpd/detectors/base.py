"""Shared machinery for the online detectors.

All detectors expose the same streaming surface: ``step(t, y)`` consumes one
observation (or a missing-value marker) and returns the candidate posterior
plus an optional detection event; ``run`` folds ``step`` over a series. The
Bayesian detectors share the joint-probability bookkeeping over candidate
most-recent-changepoint start points here and plug in their own per-segment
predictive densities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError
from ..validation import as_1d_float_array, check_same_length

__all__ = [
    "MISSING",
    "Hazard",
    "ChangepointPosterior",
    "DetectionEvent",
    "RunResult",
    "StreamingDetector",
    "OnlineDetector",
]

#: Sentinel accepted by ``step`` for a missing observation (NaN also works).
MISSING = None

_PROB_EPS = 1e-12


def _is_missing(y) -> bool:
    return y is None or (isinstance(y, (float, np.floating)) and math.isnan(float(y)))


class Hazard:
    """Prior changepoint probability per time point.

    Either a constant, or a table mapping each observation time to its own
    probability (used e.g. to plug in external per-day risk estimates).
    Values are clamped to ``[1e-12, 1 - 1e-12]``.
    """

    def __init__(self, constant: float | None = None, table: dict | None = None):
        if (constant is None) == (table is None):
            raise InvalidInputError("provide exactly one of constant or table")
        self._constant = None if constant is None else self._clamp(constant)
        self._table = None if table is None else {float(t): self._clamp(h) for t, h in table.items()}

    @staticmethod
    def _clamp(value: float) -> float:
        value = float(value)
        if not np.isfinite(value):
            raise InvalidInputError(f"hazard value must be finite, got {value!r}")
        return min(max(value, _PROB_EPS), 1.0 - _PROB_EPS)

    @classmethod
    def constant(cls, probability: float) -> "Hazard":
        return cls(constant=probability)

    @classmethod
    def from_table(cls, times, values) -> "Hazard":
        times = as_1d_float_array(times, "hazard times")
        values = as_1d_float_array(values, "hazard values")
        check_same_length(times, values, "hazard times", "hazard values")
        return cls(table=dict(zip(times.tolist(), values.tolist())))

    def __call__(self, t: float) -> float:
        if self._constant is not None:
            return self._constant
        try:
            return self._table[float(t)]
        except KeyError:
            raise InvalidInputError(
                f"hazard table has no entry for time {t!r}; "
                "the hazard series must align with observation times"
            )

    @classmethod
    def coerce(cls, value) -> "Hazard":
        if isinstance(value, cls):
            return value
        return cls.constant(float(value))


@dataclass(frozen=True)
class ChangepointPosterior:
    """Normalized posterior over candidate most-recent-changepoint starts.

    ``start_times`` are the candidate segment start times still alive at this
    step; ``log_joint`` is normalized so the weights sum to one. ``map_index``
    respects the detector's minimum reportable segment length; ties break to
    the earliest candidate.
    """

    time: float
    start_times: np.ndarray
    log_joint: np.ndarray
    map_index: int

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_joint)

    @property
    def map_time(self) -> float:
        return float(self.start_times[self.map_index])

    @property
    def map_weight(self) -> float:
        return float(np.exp(self.log_joint[self.map_index]))

    @property
    def run_length(self) -> int:
        """Observations since the MAP changepoint, inclusive."""
        return len(self.start_times) - self.map_index


@dataclass(frozen=True)
class DetectionEvent:
    """A change of the reported MAP changepoint."""

    time: float
    changepoint: float
    map_weight: float
    posterior: ChangepointPosterior | None = None


@dataclass
class RunResult:
    events: list
    posteriors: list | None = None

    @property
    def changepoints(self) -> list[float]:
        """Ordered distinct detected changepoint times."""
        seen: dict[float, None] = {}
        for event in self.events:
            seen.setdefault(event.changepoint, None)
        return list(seen)

    @property
    def detection_times(self) -> list[float]:
        return [event.time for event in self.events]


def _logsumexp(values: np.ndarray) -> float:
    m = float(np.max(values))
    return m + math.log(float(np.sum(np.exp(values - m))))


class StreamingDetector:
    """Minimal streaming interface shared by every detector.

    Subclasses provide ``reset()`` and ``step(t, y) -> (posterior_or_None,
    event_or_None)``; ``run`` folds ``step`` over a series.
    """

    def reset(self) -> None:
        raise NotImplementedError

    def step(self, t: float, y=MISSING):
        raise NotImplementedError

    def run(self, values, times=None, *, store_posteriors: bool = True) -> RunResult:
        """Reset, then apply ``step`` across a time-sorted series."""
        values = list(values)
        if times is None:
            times = np.arange(1.0, len(values) + 1.0)
        times = as_1d_float_array(times, "times")
        check_same_length(times, values, "times", "values")
        self.reset()
        events = []
        posteriors = [] if store_posteriors else None
        for t, y in zip(times, values):
            posterior, event = self.step(t, y)
            if event is not None:
                events.append(event)
            if store_posteriors:
                posteriors.append(posterior)
        return RunResult(events=events, posteriors=posteriors)


class OnlineDetector(StreamingDetector):
    """Bayesian base class: candidate bookkeeping, MAP reporting, truncation.

    Subclasses implement ``_advance_candidates`` (absorb one observation into
    every live candidate segment and return their predictive log densities),
    ``_open_candidate`` (start the segment beginning at the new observation),
    ``_drop_candidates`` (truncation follow-through), and
    ``_new_segment_log_density``.
    """

    def __init__(self, hazard, *, min_segment_for_report: int = 2, truncate_at_detection: bool = True):
        if min_segment_for_report < 1:
            raise InvalidInputError("min_segment_for_report must be >= 1")
        self.hazard = Hazard.coerce(hazard)
        self.min_segment_for_report = int(min_segment_for_report)
        self.truncate_at_detection = bool(truncate_at_detection)
        self.reset()

    # -- hooks ---------------------------------------------------------------

    def _advance_candidates(self, spacing: float, y: float) -> np.ndarray:
        raise NotImplementedError

    def _open_candidate(self, t: float, y: float) -> None:
        raise NotImplementedError

    def _drop_candidates(self, count: int) -> None:
        raise NotImplementedError

    def _on_missing(self, spacing: float) -> None:
        """Missing observation: nothing to absorb; models may track the gap."""

    def _new_segment_log_density(self, y: float) -> float:
        raise NotImplementedError

    def _reset_model(self) -> None:
        raise NotImplementedError

    # -- candidate bookkeeping -------------------------------------------------

    def reset(self) -> None:
        self._start_times: list[float] = []
        self._start_obs: list[int] = []
        self._log_joint = np.empty(0)
        self._log_survive = np.empty(0)
        self._obs_count = 0
        self._last_time: float | None = None
        self._last_obs_time: float | None = None
        self._map_start_obs: int | None = None
        self._last_posterior: ChangepointPosterior | None = None
        self._reset_model()

    @property
    def n_candidates(self) -> int:
        return len(self._start_times)

    def step(self, t: float, y=MISSING):
        """Consume one observation; returns ``(posterior, event_or_None)``.

        Missing observations advance time only: candidate joints carry
        forward unchanged and no candidate is opened.
        """
        t = float(t)
        if self._last_time is not None and t <= self._last_time:
            raise InvalidInputError(
                f"time must be strictly increasing: got {t} after {self._last_time}"
            )
        self._last_time = t
        if _is_missing(y):
            if self._last_obs_time is not None:
                self._on_missing(t - self._last_obs_time)
            return self._last_posterior, None
        y = float(y)

        if self._obs_count == 0:
            self._obs_count = 1
            self._log_joint = np.array([0.0])
            self._append_candidate(t, y, first=True)
        else:
            spacing = t - self._last_obs_time
            self._obs_count += 1
            prev_lse = _logsumexp(self._log_joint)
            pred = self._advance_candidates(spacing, y)
            self._log_joint = self._log_joint + pred + self._log_survive
            h = self.hazard(t)
            new_lp = self._new_segment_log_density(y) + math.log(h) + prev_lse
            self._log_joint = np.append(self._log_joint, new_lp)
            self._append_candidate(t, y)
        self._last_obs_time = t

        self._log_joint -= _logsumexp(self._log_joint)
        posterior = self._make_posterior(t)
        self._last_posterior = posterior

        event = None
        map_id = self._start_obs[posterior.map_index]
        if self._map_start_obs is not None and map_id != self._map_start_obs:
            if self.truncate_at_detection:
                event = DetectionEvent(
                    time=t,
                    changepoint=posterior.map_time,
                    map_weight=posterior.map_weight,
                    posterior=posterior,
                )
                self._truncate_to(posterior.map_index)
        self._map_start_obs = map_id
        return posterior, event

    # -- internals -------------------------------------------------------------

    def _append_candidate(self, t: float, y: float, first: bool = False) -> None:
        self._start_times.append(t)
        self._start_obs.append(self._obs_count)
        self._log_survive = np.append(self._log_survive, math.log1p(-self.hazard(t)))
        self._open_candidate(t, y)
        if first:
            self._map_start_obs = self._obs_count

    def _make_posterior(self, t: float) -> ChangepointPosterior:
        lengths = self._obs_count - np.asarray(self._start_obs) + 1
        qualifying = np.nonzero(lengths >= self.min_segment_for_report)[0]
        if qualifying.size:
            rel = int(np.argmax(self._log_joint[qualifying]))
            map_index = int(qualifying[rel])
        else:
            map_index = 0
        return ChangepointPosterior(
            time=t,
            start_times=np.asarray(self._start_times, dtype=float),
            log_joint=self._log_joint.copy(),
            map_index=map_index,
        )

    def _truncate_to(self, index: int) -> None:
        if index <= 0:
            return
        del self._start_times[:index]
        del self._start_obs[:index]
        self._log_joint = self._log_joint[index:]
        self._log_survive = self._log_survive[index:]
        self._drop_candidates(index)
