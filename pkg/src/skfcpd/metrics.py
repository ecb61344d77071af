"""Segmentations and detection-quality metrics.

Covers the single-changepoint delay metrics (detection delay / run length),
the Jaccard-weighted covering metric for multiple-changepoint segmentations,
and windowed precision/recall/F1 for label-based evaluation of detections.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .validation import as_1d_float_array, check_same_length

__all__ = [
    "Segmentation",
    "DelayOutcome",
    "detection_delay",
    "covering",
    "ConfusionCounts",
    "WindowScore",
    "window_confusion",
    "MetricReport",
]


@dataclass(frozen=True)
class Segmentation:
    """Partition of indices ``1..n`` into contiguous segments.

    A changepoint index ``c`` is the first index of a new segment, so
    changepoints live in ``2..n`` and ``m`` changepoints induce ``m + 1``
    segments.
    """

    n: int
    changepoints: tuple = ()

    def __post_init__(self):
        if self.n < 1:
            raise InvalidInputError(f"segmentation length must be >= 1, got {self.n}")
        cps = tuple(int(c) for c in self.changepoints)
        if any(c2 <= c1 for c1, c2 in zip(cps, cps[1:])):
            raise InvalidInputError("changepoints must be strictly increasing")
        if any(c < 2 or c > self.n for c in cps):
            raise InvalidInputError(f"changepoints must lie in 2..{self.n}, got {cps}")
        object.__setattr__(self, "changepoints", cps)

    @property
    def segments(self) -> list[tuple[int, int]]:
        """Closed index intervals ``(start, end)``, 1-based."""
        bounds = [1, *self.changepoints, self.n + 1]
        return [(bounds[i], bounds[i + 1] - 1) for i in range(len(bounds) - 1)]


def _jaccard(a: tuple[int, int], b: tuple[int, int]) -> float:
    inter = min(a[1], b[1]) - max(a[0], b[0]) + 1
    if inter <= 0:
        return 0.0
    union = (a[1] - a[0] + 1) + (b[1] - b[0] + 1) - inter
    return inter / union


def covering(truth: Segmentation, detected: Segmentation) -> float:
    """Jaccard-weighted agreement between two segmentations, in ``(0, 1]``.

    Each true segment is matched with its best-overlapping detected segment;
    matches are weighted by true-segment size. Equals 1 iff the segmentations
    are identical.
    """
    if truth.n != detected.n:
        raise InvalidInputError(
            f"segmentations cover different lengths: {truth.n} != {detected.n}"
        )
    total = 0.0
    det_segments = detected.segments
    for seg in truth.segments:
        size = seg[1] - seg[0] + 1
        total += size * max(_jaccard(seg, other) for other in det_segments)
    return total / truth.n


@dataclass(frozen=True)
class DelayOutcome:
    """Outcome of one single-changepoint replicate.

    ``kind`` is ``"detected"`` (delay is the nonnegative lag of the first
    detection), ``"false_alarm"`` (the single allowed report fired strictly
    before the change), or ``"censored"`` (no detection; delay is the full
    post-change horizon).
    """

    kind: str
    delay: float


def detection_delay(tau: float, detections, horizon: float) -> DelayOutcome:
    """Classify a single-changepoint replicate from its ordered detection times.

    Only the first detection counts. ``horizon`` is the last observation time;
    undetected replicates are censored at ``horizon - tau``.
    """
    det = sorted(float(d) for d in detections)
    if not det:
        return DelayOutcome("censored", float(horizon) - float(tau))
    first = det[0]
    if first < tau:
        return DelayOutcome("false_alarm", 0.0)
    return DelayOutcome("detected", first - float(tau))


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int


@dataclass(frozen=True)
class WindowScore:
    counts: ConfusionCounts
    precision: float
    recall: float
    f1: float
    mean_delay: float | None
    n_positive_windows: int
    n_detected_windows: int


def _positive_runs(labels: np.ndarray) -> list[tuple[int, int]]:
    runs = []
    start = None
    for i, lab in enumerate(labels):
        if lab and start is None:
            start = i
        elif not lab and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(labels) - 1))
    return runs


def window_confusion(
    times,
    labels,
    detections,
    *,
    window: float = 7.0,
    lateness_cutoff: float = 14.0,
    day0_offset: float = 2.0,
) -> WindowScore:
    """Per-time confusion counts for window-labeled detection.

    A time is predicted positive when it falls within ``window`` days after a
    reported changepoint (inclusive on both ends). A positively labeled time
    only earns TP credit if some covering detection was *made* no later than
    ``lateness_cutoff`` days after its episode's day 0, taken to be the episode
    start plus ``day0_offset`` (labeled episodes start that many days before
    the confirming event). ``detections`` is a sequence of
    ``(detection_time, changepoint_time)`` pairs.

    Detection delay is measured per labeled episode as the lag from episode
    start to the first timely detection whose changepoint lies inside the
    episode, averaged over episodes that have one.
    """
    t = as_1d_float_array(times, "times")
    lab = np.asarray(labels).astype(bool)
    check_same_length(t, lab, "times", "labels")
    det = [(float(e), float(c)) for e, c in detections]

    predicted = np.zeros(t.size, dtype=bool)
    for _, cp in det:
        predicted |= (t >= cp) & (t <= cp + window)

    runs = _positive_runs(lab)
    timely = np.zeros(t.size, dtype=bool)
    delays = []
    n_detected_windows = 0
    for start, end in runs:
        day0 = t[start] + day0_offset
        covering_det = [
            (e, c)
            for e, c in det
            if e <= day0 + lateness_cutoff and np.any((t[start : end + 1] >= c) & (t[start : end + 1] <= c + window))
        ]
        for e, c in covering_det:
            timely[start : end + 1] |= (t[start : end + 1] >= c) & (t[start : end + 1] <= c + window)
        inside = sorted(e for e, c in det if t[start] <= c <= t[end] and e <= day0 + lateness_cutoff)
        if inside:
            n_detected_windows += 1
            delays.append(inside[0] - t[start])

    tp = int(np.sum(lab & predicted & timely))
    fp = int(np.sum(~lab & predicted))
    fn = int(np.sum(lab) - tp)
    counts = ConfusionCounts(tp=tp, fp=fp, fn=fn)
    if tp == 0:
        precision = recall = f1 = 0.0
    else:
        precision = tp / (tp + fp)
        recall = tp / (tp + fn)
        f1 = 2.0 * precision * recall / (precision + recall)
    return WindowScore(
        counts=counts,
        precision=precision,
        recall=recall,
        f1=f1,
        mean_delay=float(np.mean(delays)) if delays else None,
        n_positive_windows=len(runs),
        n_detected_windows=n_detected_windows,
    )


@dataclass
class MetricReport:
    """Aggregate of one evaluation run; unused fields stay ``None``.

    ``dispersion`` holds standard deviations keyed like their means.
    """

    detector: str = ""
    scenario: str = ""
    replicates: int = 0
    add: float | None = None
    miss_rate: float | None = None
    false_alarm_rate: float | None = None
    arl: float | None = None
    covering: float | None = None
    precision: float | None = None
    recall: float | None = None
    f1: float | None = None
    mean_delay_days: float | None = None
    dispersion: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {
            "detector": self.detector,
            "scenario": self.scenario,
            "replicates": self.replicates,
        }
        for key in (
            "add",
            "miss_rate",
            "false_alarm_rate",
            "arl",
            "covering",
            "precision",
            "recall",
            "f1",
            "mean_delay_days",
        ):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        for key, value in sorted(self.dispersion.items()):
            out[f"{key}_sd"] = value
        return out
