"""Integrated detection pipeline for per-entity classification probabilities.

Flow: ingest ``entity,time,value[,label]`` CSV records, map probabilities to
the real line with a clamped logit, fit shared correlation parameters on the
change-free training prefixes, run the sequential-Kalman-filter detector per
entity, screen each recent detection with a one-sided increase test, and mark
a fixed-length positive window after every screened changepoint. When labels
are supplied, windowed precision/recall/F1 and detection delay are reported.
"""

from __future__ import annotations

import csv
import datetime
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import t as student_t

from .detectors import Hazard, SkfDetector
from .errors import DataError, InvalidInputError
from .estimation import OptimizerSettings, TrainingSet, estimate
from .kernels import KernelFamily, KernelSpec, TimeGrid, build_dlm
from .metrics import ConfusionCounts, WindowScore, window_confusion
from .whitener import init_segment

__all__ = [
    "EntitySeries",
    "read_series_csv",
    "write_series_csv",
    "read_hazard_csv",
    "logit_transform",
    "logit_series",
    "ScreeningConfig",
    "ScreeningResult",
    "screening_test",
    "PipelineConfig",
    "PipelineResult",
    "run_pipeline",
    "threshold_classifier_score",
]

NA_VALUES = {"NA", "na", "NaN", "nan", ""}


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------


@dataclass
class EntitySeries:
    """One entity's time-sorted series; values may contain NaN for missing."""

    entity: str
    times: np.ndarray
    values: np.ndarray
    labels: np.ndarray | None = None
    time_strings: list = field(default_factory=list)


def _parse_time(token: str) -> float:
    token = token.strip()
    try:
        return float(token)
    except ValueError:
        pass
    try:
        return float(datetime.date.fromisoformat(token).toordinal())
    except ValueError:
        raise DataError(f"cannot parse time {token!r}: expected a number or ISO date")


def _parse_value(token: str) -> float:
    token = token.strip()
    if token in NA_VALUES:
        return math.nan
    try:
        return float(token)
    except ValueError:
        raise DataError(f"cannot parse value {token!r}: expected a number or NA")


def read_series_csv(path) -> dict[str, EntitySeries]:
    """Parse an ``entity,time,value[,label]`` CSV into per-entity series."""
    rows: dict[str, list] = {}
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        header = [h.strip().lower() for h in header]
        if header[:3] != ["entity", "time", "value"]:
            raise DataError(f"{path}: expected header entity,time,value[,label], got {header}")
        has_label = len(header) > 3 and header[3] == "label"
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 3:
                raise DataError(f"{path}:{lineno}: expected at least 3 columns")
            entity = row[0].strip()
            t = _parse_time(row[1])
            value = _parse_value(row[2])
            label = int(float(row[3])) if has_label and len(row) > 3 and row[3].strip() else 0
            rows.setdefault(entity, []).append((t, row[1].strip(), value, label))
    out = {}
    for entity, records in rows.items():
        records.sort(key=lambda r: r[0])
        times = np.array([r[0] for r in records])
        if np.any(np.diff(times) <= 0):
            raise DataError(f"entity {entity!r} has duplicate or non-increasing times")
        out[entity] = EntitySeries(
            entity=entity,
            times=times,
            values=np.array([r[2] for r in records]),
            labels=np.array([r[3] for r in records], dtype=int) if has_label else None,
            time_strings=[r[1] for r in records],
        )
    return out


def write_series_csv(path, series: dict[str, EntitySeries], *, with_labels: bool = False):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["entity", "time", "value", "label"] if with_labels else ["entity", "time", "value"])
        for entity in sorted(series):
            s = series[entity]
            for i, t in enumerate(s.times):
                time_repr = s.time_strings[i] if s.time_strings else repr(float(t))
                value = "NA" if math.isnan(s.values[i]) else repr(float(s.values[i]))
                row = [entity, time_repr, value]
                if with_labels:
                    row.append(int(s.labels[i]) if s.labels is not None else 0)
                writer.writerow(row)


def read_hazard_csv(path) -> Hazard:
    """Parse a ``time,hazard`` CSV into a per-time hazard table."""
    times, values = [], []
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:2]] != ["time", "hazard"]:
            raise DataError(f"{path}: expected header time,hazard")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 2:
                raise DataError(f"{path}:{lineno}: expected 2 columns")
            times.append(_parse_time(row[0]))
            values.append(_parse_value(row[1]))
    if not times:
        raise DataError(f"{path}: no hazard rows")
    return Hazard.from_table(times, values)


# ---------------------------------------------------------------------------
# Logit transform
# ---------------------------------------------------------------------------


def logit_transform(p: float, p_min: float, p_max: float) -> float:
    """Clamped log odds: ``p`` is forced into ``[p_min, p_max]`` first.

    The clamp bounds are the entity's smallest and largest observed
    probabilities strictly inside (0, 1), which keeps exact 0/1 records finite
    without inventing a global epsilon.
    """
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise InvalidInputError(f"probability must lie in [0, 1], got {p!r}")
    p = min(max(p, p_min), p_max)
    return math.log(p / (1.0 - p))


def logit_series(values) -> np.ndarray:
    """Apply the clamped logit to a probability series (NaN passes through)."""
    arr = np.asarray(values, dtype=float)
    finite = arr[np.isfinite(arr)]
    if np.any((finite < 0) | (finite > 1)):
        raise InvalidInputError("probability series contains values outside [0, 1]")
    interior = finite[(finite > 0) & (finite < 1)]
    if interior.size == 0:
        raise DataError("series has no probabilities strictly inside (0, 1); cannot set clamp bounds")
    p_min, p_max = float(interior.min()), float(interior.max())
    out = np.full(arr.shape, math.nan)
    mask = np.isfinite(arr)
    clipped = np.clip(arr[mask], p_min, p_max)
    out[mask] = np.log(clipped / (1.0 - clipped))
    return out


# ---------------------------------------------------------------------------
# Screening test
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScreeningConfig:
    """Screening and windowing knobs for the integrated pipeline."""

    alpha: float = 0.05
    recency_window: float = 7.0
    train_len: int = 20
    positive_window: float = 7.0
    lateness_cutoff: float = 14.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise InvalidInputError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.train_len < 0:
            raise InvalidInputError("train_len must be nonnegative")


@dataclass(frozen=True)
class ScreeningResult:
    passed: bool
    statistic: float
    df: int
    p_value: float
    reason: str | None = None


def _segment_summary(system, times, values):
    acc = init_segment(system, 0, float(values[0]))
    for spacing, y in zip(np.diff(times), values[1:]):
        acc = acc.advanced(float(spacing), float(y))
    return acc


def screening_test(
    pre_times,
    pre_values,
    post_times,
    post_values,
    kernel: KernelSpec,
    alpha: float = 0.05,
) -> ScreeningResult:
    """One-sided test that the post segment's mean exceeds the pre segment's.

    Generalized-least-squares mean estimates under the fitted segment
    covariance, with a pooled scale from both segments' whitened residual
    sums; the studentized difference is compared with the upper-alpha Student
    t quantile on ``n_pre + n_post - 2`` degrees of freedom.
    """
    pre_values = np.asarray(pre_values, dtype=float)
    post_values = np.asarray(post_values, dtype=float)
    if len(pre_values) < 2 or len(post_values) < 2:
        raise InvalidInputError("screening requires at least 2 points per segment")
    system = build_dlm(kernel)
    a = _segment_summary(system, np.asarray(pre_times, dtype=float), pre_values)
    b = _segment_summary(system, np.asarray(post_times, dtype=float), post_values)

    df = a.n + b.n - 2
    pooled = (a.quadratic_form() + b.quadratic_form()) / df
    if pooled <= 1e-12:
        return ScreeningResult(False, 0.0, df, 1.0, reason="degenerate segments: zero pooled scale")
    mean_pre = a.cross_sum / a.ones_sumsq
    mean_post = b.cross_sum / b.ones_sumsq
    se = math.sqrt(pooled * (1.0 / a.ones_sumsq + 1.0 / b.ones_sumsq))
    statistic = (mean_post - mean_pre) / se
    p_value = float(student_t.sf(statistic, df))
    return ScreeningResult(bool(p_value < alpha), statistic, df, p_value)


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PipelineConfig:
    family: KernelFamily = KernelFamily.MATERN12
    range_: float | None = None
    nugget: float | None = None
    hazard: object = 0.01
    min_segment_for_report: int = 2
    probability_mode: bool = True
    seed: int = 0

    def resolved_kernel(self, training: TrainingSet | None) -> KernelSpec:
        family = KernelFamily.coerce(self.family)
        if self.range_ is not None and self.nugget is not None:
            return KernelSpec(family=family, range_=self.range_, nugget=self.nugget)
        if training is None:
            raise InvalidInputError(
                "kernel range/nugget not given and no training data available"
            )
        settings = OptimizerSettings(grid_size=6, restarts=2, max_iterations=200)
        return estimate(training, family, settings).kernel(family)


@dataclass
class EntityResult:
    entity: str
    n_obs: int
    detections: list = field(default_factory=list)
    windows: list = field(default_factory=list)
    skipped: str | None = None


@dataclass
class PipelineResult:
    kernel: KernelSpec
    screening: ScreeningConfig
    entities: list
    score: WindowScore | None = None
    warnings: list = field(default_factory=list)

    def to_json_dict(self) -> dict:
        out = {
            "config": {
                "kernel": {
                    "family": self.kernel.family.value,
                    "range": self.kernel.range_,
                    "nugget": self.kernel.nugget,
                },
                "screening": {
                    "alpha": self.screening.alpha,
                    "recency_window": self.screening.recency_window,
                    "train_len": self.screening.train_len,
                    "positive_window": self.screening.positive_window,
                },
            },
            "entities": [
                {
                    "id": er.entity,
                    "n_obs": er.n_obs,
                    "skipped": er.skipped,
                    "changepoints": er.detections,
                    "windows": er.windows,
                }
                for er in self.entities
            ],
        }
        if self.score is not None:
            out["metrics"] = {
                "tp": self.score.counts.tp,
                "fp": self.score.counts.fp,
                "fn": self.score.counts.fn,
                "precision": self.score.precision,
                "recall": self.score.recall,
                "f1": self.score.f1,
                "mean_delay_days": self.score.mean_delay,
            }
        if self.warnings:
            out["warnings"] = list(self.warnings)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)


def _combine_scores(per_entity: list[tuple]) -> WindowScore | None:
    if not per_entity:
        return None
    tp = sum(s.counts.tp for s in per_entity)
    fp = sum(s.counts.fp for s in per_entity)
    fn = sum(s.counts.fn for s in per_entity)
    delays = [s.mean_delay for s in per_entity if s.mean_delay is not None]
    if tp == 0:
        precision = recall = f1 = 0.0
    else:
        precision = tp / (tp + fp)
        recall = tp / (tp + fn)
        f1 = 2 * precision * recall / (precision + recall)
    return WindowScore(
        counts=ConfusionCounts(tp, fp, fn),
        precision=precision,
        recall=recall,
        f1=f1,
        mean_delay=float(np.mean(delays)) if delays else None,
        n_positive_windows=sum(s.n_positive_windows for s in per_entity),
        n_detected_windows=sum(s.n_detected_windows for s in per_entity),
    )


def run_pipeline(
    series: dict[str, EntitySeries],
    config: PipelineConfig,
    screening: ScreeningConfig,
    hazard: Hazard | None = None,
) -> PipelineResult:
    """Detect, screen, and window changepoints for every entity.

    Entities shorter than ``train_len + 4`` are skipped with a warning. The
    detector runs on the monitored (post-training) points only; the training
    prefix supplies the pooled kernel fit. A detection is screened when its
    changepoint lies within the recency window of the detection time, and a
    screened pass marks the positive window after the changepoint.
    """
    n0 = screening.train_len
    warnings: list[str] = []
    usable: dict[str, np.ndarray] = {}
    for entity, s in sorted(series.items()):
        if len(s.values) < n0 + 4:
            warnings.append(f"entity {entity!r} skipped: {len(s.values)} < {n0 + 4} observations")
            continue
        usable[entity] = logit_series(s.values) if config.probability_mode else np.asarray(
            s.values, dtype=float
        )

    training_pairs = []
    for entity, transformed in usable.items():
        s = series[entity]
        window = transformed[:n0]
        t_window = s.times[:n0]
        keep = np.isfinite(window)
        if keep.sum() >= 4:
            training_pairs.append((TimeGrid(t_window[keep]), window[keep]))
    kernel = config.resolved_kernel(
        TrainingSet.from_arrays(training_pairs) if training_pairs else None
    )

    base_hazard = hazard if hazard is not None else Hazard.coerce(config.hazard)
    entity_results = []
    scored = []
    for entity, s in sorted(series.items()):
        if entity not in usable:
            entity_results.append(
                EntityResult(entity=entity, n_obs=len(s.values), skipped="too short")
            )
            continue
        transformed = usable[entity]
        times = s.times[n0:]
        values = transformed[n0:]
        detector = SkfDetector(
            kernel, base_hazard, min_segment_for_report=config.min_segment_for_report
        )
        run = detector.run(
            [None if math.isnan(v) else float(v) for v in values],
            times,
            store_posteriors=False,
        )
        result = EntityResult(entity=entity, n_obs=len(s.values))
        observed = np.isfinite(values)
        for event in run.events:
            screened = False
            reason = None
            if event.time - event.changepoint <= screening.recency_window:
                pre_mask = observed & (times < event.changepoint)
                post_mask = observed & (times >= event.changepoint) & (times <= event.time)
                if pre_mask.sum() >= 2 and post_mask.sum() >= 2:
                    check = screening_test(
                        times[pre_mask],
                        values[pre_mask],
                        times[post_mask],
                        values[post_mask],
                        kernel,
                        screening.alpha,
                    )
                    screened = check.passed
                    reason = check.reason
                else:
                    reason = "too few points for screening"
            else:
                reason = "detection outside recency window"
            result.detections.append(
                {
                    "time": float(event.changepoint),
                    "detected_at": float(event.time),
                    "map_weight": float(event.map_weight),
                    "screened": bool(screened),
                    **({"note": reason} if reason else {}),
                }
            )
            if screened:
                result.windows.append(
                    [float(event.changepoint), float(event.changepoint + screening.positive_window)]
                )
        entity_results.append(result)

        if s.labels is not None:
            pairs = [
                (d["detected_at"], d["time"]) for d in result.detections if d["screened"]
            ]
            scored.append(
                window_confusion(
                    s.times[n0:],
                    s.labels[n0:],
                    pairs,
                    window=screening.positive_window,
                    lateness_cutoff=screening.lateness_cutoff,
                )
            )

    return PipelineResult(
        kernel=kernel,
        screening=screening,
        entities=entity_results,
        score=_combine_scores(scored),
        warnings=warnings,
    )


def threshold_classifier_score(
    series: dict[str, EntitySeries],
    n0: int,
    *,
    window: float = 7.0,
    lateness_cutoff: float = 14.0,
    n_thresholds: int = 101,
) -> tuple[float, WindowScore]:
    """Best fixed-threshold classifier on the raw probability sequences.

    For each candidate threshold, every monitored time whose probability
    exceeds it acts like a detected changepoint at that time; the usual
    positive window and lateness rules then apply. Returns the threshold that
    maximizes pooled F1 together with its score.
    """
    finite = np.concatenate(
        [s.values[n0:][np.isfinite(s.values[n0:])] for s in series.values()]
    )
    if finite.size == 0:
        raise DataError("no finite probabilities to threshold")
    thresholds = np.quantile(finite, np.linspace(0.0, 1.0, n_thresholds))
    best: tuple[float, WindowScore] | None = None
    for threshold in np.unique(thresholds):
        scores = []
        for s in series.values():
            if s.labels is None or len(s.values) < n0 + 1:
                continue
            times = s.times[n0:]
            values = s.values[n0:]
            crossings = times[np.isfinite(values) & (values > threshold)]
            pairs = [(float(t), float(t)) for t in crossings]
            scores.append(
                window_confusion(
                    times,
                    s.labels[n0:],
                    pairs,
                    window=window,
                    lateness_cutoff=lateness_cutoff,
                )
            )
        combined = _combine_scores(scores)
        if combined is None:
            continue
        if best is None or combined.f1 > best[1].f1:
            best = (float(threshold), combined)
    if best is None:
        raise DataError("threshold classifier needs labeled entities")
    return best
