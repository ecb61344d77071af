"""Command-line interface.

Subcommands: ``detect`` (run the correlated-data detector over CSV series),
``simulate`` (write scenario replicates and ground truth), ``estimate``
(fit range/nugget by marginal likelihood), ``evaluate`` (delay or covering
comparison of skf/bocpd/cusum at a common ARL), and ``pipeline`` (the
integrated probability-sequence pipeline with screening and windows).

A flat ``key = value`` config file can preset any flag of the active
subcommand; explicit flags win. Exit codes: 0 ok, 1 usage, 2 data,
3 numerical/calibration.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .detectors import Hazard, SkfDetector
from .errors import (
    CalibrationError,
    DataError,
    EstimationError,
    InvalidInputError,
    NumericalError,
)
from .estimation import TrainingSet, estimate
from .harness import (
    MultiChangeStudy,
    SingleChangeStudy,
    run_covering_study,
    run_single_change_study,
    timing_benchmark,
)
from .kernels import KernelSpec, TimeGrid
from .pipeline import (
    EntitySeries,
    PipelineConfig,
    ScreeningConfig,
    read_hazard_csv,
    read_series_csv,
    run_pipeline,
    write_series_csv,
)
from .sampling import GpSegmentModel, Scenario, simulate_scenario

__all__ = ["main"]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _master_seed(value) -> int:
    if value is not None:
        return int(value)
    env = os.environ.get("SKFCPD_SEED")
    return int(env) if env else 0


def _read_config_file(path) -> dict:
    out = {}
    try:
        with open(path) as handle:
            for lineno, raw in enumerate(handle, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise _UsageError(f"{path}:{lineno}: expected key = value")
                key, value = (part.strip() for part in line.split("=", 1))
                out[key.replace("-", "_")] = value
    except OSError as exc:
        raise DataError(f"cannot read config file {path}: {exc}")
    return out


def _build_parser() -> tuple[_Parser, dict]:
    parser = _Parser(prog="skfcpd", description=__doc__.split("\n")[0])
    parser.add_argument("--config", help="flat key=value file with flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers = {}

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help=argparse.SUPPRESS)
        p.add_argument("--seed", type=int, default=None, help="master seed (or env SKFCPD_SEED)")
        subparsers[name] = p
        return p

    p = add("detect", "detect changepoints in CSV series")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--kernel", default="matern12", choices=["matern12", "matern52"])
    p.add_argument("--range", dest="range_", type=float, default=None)
    p.add_argument("--nugget", type=float, default=None)
    p.add_argument("--hazard", type=float, default=0.01)
    p.add_argument("--hazard-file", default=None, help="CSV time,hazard")
    p.add_argument("--train", type=int, default=0, help="observations used to fit range/nugget")
    p.add_argument("--min-segment", type=int, default=2)
    p.add_argument("--posterior-csv", default=None, help="write step,candidate,weight rows")

    p = add("simulate", "write scenario replicates and ground truth")
    p.add_argument("--scenario", required=True, choices=["mean-shift", "variance-shift", "range-shift"])
    p.add_argument("--kernel", default="matern52", choices=["matern12", "matern52"])
    p.add_argument("--range", dest="range_", type=float, default=4.0)
    p.add_argument("--nugget", type=float, default=0.1)
    p.add_argument("--pre-mean", type=float, default=0.0)
    p.add_argument("--pre-var", type=float, default=1.0)
    p.add_argument("--post-mean", type=float, default=None)
    p.add_argument("--post-var", type=float, default=None)
    p.add_argument("--post-range", type=float, default=None)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--cp", default="50", help="changepoint index or comma list")
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--output", required=True, help="output directory")

    p = add("estimate", "fit range and nugget on change-free series")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--kernel", default="matern12", choices=["matern12", "matern52"])
    p.add_argument("--train", type=int, default=0, help="use only the first N points per entity")

    p = add("evaluate", "compare detectors on a simulated scenario")
    p.add_argument("--detectors", default="skf,bocpd,cusum")
    p.add_argument("--scenario", required=True, choices=["mean-shift", "variance-shift", "range-shift"])
    p.add_argument("--kernel", default="matern52", choices=["matern12", "matern52"])
    p.add_argument("--range", dest="range_", type=float, default=4.0)
    p.add_argument("--nugget", type=float, default=0.1)
    p.add_argument("--post-mean", type=float, default=None)
    p.add_argument("--post-var", type=float, default=None)
    p.add_argument("--post-range", type=float, default=None)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--cp", default="50")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--target-arl", type=float, default=50.0)
    p.add_argument("--calibration-reps", type=int, default=200)
    p.add_argument("--output", required=True, help="metrics CSV path")

    p = add("pipeline", "integrated probability-sequence pipeline")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--kernel", default="matern12", choices=["matern12", "matern52"])
    p.add_argument("--range", dest="range_", type=float, default=None)
    p.add_argument("--nugget", type=float, default=None)
    p.add_argument("--hazard", type=float, default=0.01)
    p.add_argument("--hazard-file", default=None)
    p.add_argument("--n0", type=int, default=20, help="training prefix length per entity")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--recency", type=float, default=7.0)
    p.add_argument("--raw-values", action="store_true", help="values are not probabilities; skip logit")

    p = add("benchmark", "timing table for the detector vs the dense baseline")
    p.add_argument("--kernel", default="matern12", choices=["matern12", "matern52"])
    p.add_argument("--range", dest="range_", type=float, default=12.0)
    p.add_argument("--nugget", type=float, default=0.1)
    p.add_argument("--n", default="250,500,1000,2000")
    p.add_argument("--dense-at", type=int, default=None)
    p.add_argument("--output", required=True)

    return parser, subparsers


def _apply_config(parser_map, command, config):
    sub = parser_map[command]
    known = {
        action.dest
        for action in sub._actions
        if action.dest not in ("help",)
    }
    unknown = set(config) - known
    if unknown:
        raise _UsageError(f"config keys not recognized for '{command}': {sorted(unknown)}")
    typed = {}
    for action in sub._actions:
        if action.dest in config:
            raw = config[action.dest]
            if action.type is int:
                typed[action.dest] = int(raw)
            elif action.type is float:
                typed[action.dest] = float(raw)
            elif isinstance(action, argparse._StoreTrueAction):
                typed[action.dest] = raw.lower() in ("1", "true", "yes")
            else:
                typed[action.dest] = raw
    sub.set_defaults(**typed)


def _scenario_from_args(args) -> Scenario:
    kernel = KernelSpec(family=args.kernel, range_=args.range_, nugget=args.nugget)
    pre = GpSegmentModel(mean=args.pre_mean if hasattr(args, "pre_mean") else 0.0,
                         signal_variance=args.pre_var if hasattr(args, "pre_var") else 1.0,
                         kernel=kernel)
    kind = args.scenario.replace("-shift", "")
    post_value = {"mean": args.post_mean, "variance": args.post_var, "range": args.post_range}[kind]
    if post_value is None:
        raise _UsageError(f"--post-{'var' if kind == 'variance' else kind} is required for {args.scenario}")
    cps = tuple(int(c) for c in str(args.cp).split(",") if c.strip())
    if len(cps) == 1:
        return Scenario.single_shift(kind, pre=pre, post_value=post_value, changepoint=cps[0], n=args.n)
    return Scenario.alternating(kind, pre=pre, post_value=post_value, changepoints=cps, n=args.n)


def _training_from_series(series, train: int) -> TrainingSet:
    pairs = []
    for s in series.values():
        cut = train if train > 0 else len(s.values)
        keep = np.isfinite(s.values[:cut])
        if keep.sum() >= 4:
            pairs.append((TimeGrid(s.times[:cut][keep]), s.values[:cut][keep]))
    if not pairs:
        raise DataError("no entity has 4 or more finite training observations")
    return TrainingSet.from_arrays(pairs)


def _resolve_kernel(args, series) -> KernelSpec:
    if args.range_ is not None and args.nugget is not None:
        return KernelSpec(family=args.kernel, range_=args.range_, nugget=args.nugget)
    training = _training_from_series(series, args.train if hasattr(args, "train") else 0)
    result = estimate(training, args.kernel)
    return result.kernel(args.kernel)


def _cmd_detect(args) -> int:
    series = read_series_csv(args.input)
    kernel = _resolve_kernel(args, series)
    hazard = read_hazard_csv(args.hazard_file) if args.hazard_file else Hazard.constant(args.hazard)
    out_entities = []
    posterior_rows = []
    for entity in sorted(series):
        s = series[entity]
        detector = SkfDetector(kernel, hazard, min_segment_for_report=args.min_segment)
        values = [None if np.isnan(v) else float(v) for v in s.values]
        run = detector.run(values, s.times)
        out_entities.append(
            {
                "id": entity,
                "changepoints": [
                    {
                        "time": float(e.changepoint),
                        "detected_at": float(e.time),
                        "map_weight": float(e.map_weight),
                    }
                    for e in run.events
                ],
                "map_path": [
                    {"time": float(p.time), "map": float(p.map_time)} for p in run.posteriors if p
                ],
            }
        )
        if args.posterior_csv:
            for step, posterior in enumerate(run.posteriors, start=1):
                if posterior is None:
                    continue
                for start, weight in zip(posterior.start_times, posterior.weights):
                    posterior_rows.append((entity, step, float(start), float(weight)))
    payload = {
        "config": {
            "kernel": {"family": kernel.family.value, "range": kernel.range_, "nugget": kernel.nugget},
            "min_segment": args.min_segment,
        },
        "entities": out_entities,
    }
    with open(args.output, "w") as handle:
        json.dump(payload, handle, indent=2)
        handle.write("\n")
    if args.posterior_csv:
        with open(args.posterior_csv, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["entity", "step", "candidate", "weight"])
            writer.writerows(posterior_rows)
    return 0


def _cmd_simulate(args) -> int:
    scenario = _scenario_from_args(args)
    os.makedirs(args.output, exist_ok=True)
    seed = _master_seed(args.seed)
    root = np.random.SeedSequence(seed)
    series = {}
    truth = {}
    for rep, child in enumerate(root.spawn(args.reps)):
        y, segmentation = simulate_scenario(scenario, np.random.default_rng(child))
        name = f"rep{rep:04d}"
        series[name] = EntitySeries(
            entity=name,
            times=scenario.grid.times,
            values=y,
            time_strings=[repr(float(t)) for t in scenario.grid.times],
        )
        truth[name] = list(segmentation.changepoints)
    write_series_csv(os.path.join(args.output, "series.csv"), series)
    with open(os.path.join(args.output, "truth.json"), "w") as handle:
        json.dump(
            {
                "scenario": scenario.name,
                "n": scenario.n,
                "seed": seed,
                "changepoints": truth,
            },
            handle,
            indent=2,
        )
        handle.write("\n")
    return 0


def _cmd_estimate(args) -> int:
    series = read_series_csv(args.input)
    training = _training_from_series(series, args.train)
    result = estimate(training, args.kernel)
    payload = {
        "kernel": args.kernel,
        "range": result.range_,
        "nugget": result.nugget,
        "loglik": result.loglik,
        "n_evaluations": result.n_evaluations,
        "converged": result.converged,
        "at_bound": result.at_bound,
    }
    with open(args.output, "w") as handle:
        json.dump(payload, handle, indent=2)
        handle.write("\n")
    return 0


def _cmd_evaluate(args) -> int:
    scenario = _scenario_from_args(args)
    detectors = tuple(d.strip() for d in args.detectors.split(",") if d.strip())
    seed = _master_seed(args.seed)
    if len(scenario.changepoints) == 1:
        study = SingleChangeStudy(
            scenario=scenario,
            target_arl=args.target_arl,
            n_replicates=args.reps,
            seed=seed,
            calibration_replicates=args.calibration_reps,
        )
        reports = run_single_change_study(study, detectors)
    else:
        study = MultiChangeStudy(
            scenario=scenario,
            target_arl=args.target_arl,
            n_replicates=args.reps,
            seed=seed,
            calibration_replicates=args.calibration_reps,
        )
        reports = run_covering_study(study, detectors)
    rows = [reports[name].as_dict() for name in detectors]
    fields = sorted({key for row in rows for key in row}, key=lambda k: (k != "detector", k))
    with open(args.output, "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    return 0


def _cmd_pipeline(args) -> int:
    series = read_series_csv(args.input)
    hazard = read_hazard_csv(args.hazard_file) if args.hazard_file else None
    config = PipelineConfig(
        family=args.kernel,
        range_=args.range_,
        nugget=args.nugget,
        hazard=args.hazard,
        probability_mode=not args.raw_values,
        seed=_master_seed(args.seed),
    )
    screening = ScreeningConfig(alpha=args.alpha, recency_window=args.recency, train_len=args.n0)
    result = run_pipeline(series, config, screening, hazard)
    with open(args.output, "w") as handle:
        handle.write(result.to_json())
        handle.write("\n")
    return 0


def _cmd_benchmark(args) -> int:
    kernel = KernelSpec(family=args.kernel, range_=args.range_, nugget=args.nugget)
    n_values = [int(x) for x in str(args.n).split(",") if x.strip()]
    rows = timing_benchmark(n_values, kernel, dense_at=args.dense_at, seed=_master_seed(args.seed))
    with open(args.output, "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=["method", "n", "seconds"])
        writer.writeheader()
        writer.writerows(rows)
    return 0


_COMMANDS = {
    "detect": _cmd_detect,
    "simulate": _cmd_simulate,
    "estimate": _cmd_estimate,
    "evaluate": _cmd_evaluate,
    "pipeline": _cmd_pipeline,
    "benchmark": _cmd_benchmark,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, parser_map = _build_parser()
    try:
        config_path = None
        if "--config" in argv:
            config_path = argv[argv.index("--config") + 1] if argv.index("--config") + 1 < len(argv) else None
            if config_path is None:
                raise _UsageError("--config requires a path")
        command = next((tok for tok in argv if not tok.startswith("-") and tok in parser_map), None)
        if config_path and command:
            _apply_config(parser_map, command, _read_config_file(config_path))
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, InvalidInputError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, CalibrationError, EstimationError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
