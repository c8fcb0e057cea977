"""Command-line front end: ingest, generate, train, abstract, evaluate.

Exit status is 0 on success, 2 on bad input, 1 on internal failure. Data goes
to files; progress and diagnostics go to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import abstraction, crf, evaluation, ingestion, petri
from .features import FeatureConfig, FeatureConfigError
from .optim import OptimizationError
from .xes import XesError, read_xes, save_xes

log = logging.getLogger("evabs")

INPUT_ERRORS = (
    XesError,
    ingestion.IngestionError,
    abstraction.AbstractionError,
    FeatureConfigError,
    petri.PetriNetError,
    crf.CrfError,
    OptimizationError,
)

# Built-in defaults for options that may also come from --config.
DEFAULTS = {
    "seed": 0,
    "threads": None,
    "format": "readings",
    "activities": None,
    "timezone": None,
    "boundary": "00:00",
    "unlabeled": "Other",
    "n_traces": 30,
    "stop_probability": 0.5,
    "max_steps": 1000,
    "ngram": ["concept:name:2"],
    "period": ["day"],
    "lifecycle": False,
    "max_components": 8,
    "l1": 0.1,
    "max_iterations": 1000,
    "tolerance": 1e-6,
}


class InputError(Exception):
    pass


def _add_feature_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("features")
    g.add_argument("--ngram", action="append", metavar="KEY:N",
                   help="n-gram feature over an attribute, e.g. concept:name:2 (repeatable)")
    g.add_argument("--no-ngrams", action="store_true", help="disable n-gram features")
    g.add_argument("--period", action="append", choices=("day", "week", "month"),
                   help="circular time feature period (repeatable)")
    g.add_argument("--no-time", action="store_true", help="disable time features")
    g.add_argument("--lifecycle", action="store_const", const=True, default=None,
                   help="add lifecycle duration features")
    g.add_argument("--max-components", type=int, help="largest mixture size tried by BIC")
    t = p.add_argument_group("training")
    t.add_argument("--l1", type=float, help="L1 regularization strength")
    t.add_argument("--max-iterations", type=int)
    t.add_argument("--tolerance", type=float, help="relative objective change to stop at")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evabs", description="Supervised event abstraction for sensor logs.")
    parser.add_argument("--seed", type=int, help="random seed (default 0)")
    parser.add_argument("--threads", type=int, help="worker threads (default: number of processors)")
    parser.add_argument("--config", type=Path, help="JSON file with option values; flags take precedence")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="binary sensor CSV to sensor-level XES")
    p.add_argument("csv", type=Path)
    p.add_argument("out", type=Path)
    p.add_argument("--format", choices=("readings", "intervals"),
                   help="readings: timestamp,sensor_id,state[,label]; intervals: start,end,sensor_id")
    p.add_argument("--activities", type=Path, help="start,end,label CSV used to annotate events")
    p.add_argument("--timezone", help="zone for naive timestamps and day boundaries (+HH:MM, UTC, or IANA name)")
    p.add_argument("--boundary", help="local time of day at which a new case starts (HH:MM)")
    p.add_argument("--unlabeled", help="label for events outside every activity interval")

    p = sub.add_parser("generate", help="simulate the built-in two-activity model")
    p.add_argument("out", type=Path)
    p.add_argument("-n", "--n-traces", type=int)
    p.add_argument("--stop-probability", type=float, help="chance of stopping at a final marking")
    p.add_argument("--max-steps", type=int, help="playout length after which a trace is resampled")

    p = sub.add_parser("train", help="train an abstractor on an annotated XES log")
    p.add_argument("log", type=Path)
    p.add_argument("model", type=Path)
    _add_feature_flags(p)

    p = sub.add_parser("abstract", help="label and collapse a sensor-level XES log")
    p.add_argument("model", type=Path)
    p.add_argument("log", type=Path)
    p.add_argument("out", type=Path)
    p.add_argument("--labeled-out", type=Path, help="also write the per-event labeled log here")

    p = sub.add_parser("evaluate", help="leave-one-trace-out cross-validation")
    p.add_argument("log", type=Path)
    p.add_argument("report", type=Path)
    _add_feature_flags(p)
    return parser


def _load_config(path: Optional[Path]) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise InputError("config file must hold a JSON object")
    data = {k.replace("-", "_"): v for k, v in data.items()}
    unknown = sorted(set(data) - set(DEFAULTS))
    if unknown:
        raise InputError(f"unknown config keys: {', '.join(unknown)}")
    return data


def resolve(args: argparse.Namespace, config: dict) -> dict:
    """Merge built-in defaults, the config file, and explicit flags (in rising precedence)."""
    opts = dict(DEFAULTS)
    opts.update(config)
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            opts[key] = value
    if getattr(args, "no_ngrams", False):
        opts["ngram"] = []
    if getattr(args, "no_time", False):
        opts["period"] = []
    if opts["threads"] is None:
        opts["threads"] = os.cpu_count() or 1
    return opts


def feature_config(opts: dict) -> FeatureConfig:
    ngrams = []
    for item in opts["ngram"]:
        key, _, n = str(item).rpartition(":")
        if not key or not n.isdigit():
            raise InputError(f"n-gram spec {item!r} must look like KEY:N")
        ngrams.append((key, int(n)))
    return FeatureConfig(
        ngrams=tuple(ngrams),
        periods=tuple(opts["period"]),
        lifecycle=bool(opts["lifecycle"]),
        max_components=int(opts["max_components"]),
        seed=int(opts["seed"]),
    )


def train_config(opts: dict) -> crf.TrainConfig:
    return crf.TrainConfig(
        l1_strength=float(opts["l1"]),
        max_iterations=int(opts["max_iterations"]),
        tolerance=float(opts["tolerance"]),
        seed=int(opts["seed"]),
    )


def _need_file(path: Path) -> None:
    if not path.is_file():
        raise InputError(f"no such file: {path}")


def _need_parent(path: Path) -> None:
    parent = path.resolve().parent
    if not parent.is_dir():
        raise InputError(f"output directory does not exist: {parent}")


def cmd_ingest(args, opts) -> int:
    _need_file(args.csv)
    if opts["activities"] is not None:
        _need_file(Path(opts["activities"]))
    _need_parent(args.out)
    tz = ingestion.parse_timezone(opts["timezone"])
    policy = ingestion.SegmentationPolicy(ingestion.parse_boundary(opts["boundary"]), tz)
    reader = ingestion.read_intervals_csv if opts["format"] == "intervals" else ingestion.read_readings_csv
    events = ingestion.readings_to_events(reader(args.csv, tz))
    if opts["activities"] is not None:
        activities = ingestion.read_activities_csv(Path(opts["activities"]), tz)
        events = ingestion.label_events(events, activities, opts["unlabeled"])
    out = ingestion.segment_cases(events, policy)
    save_xes(out, args.out)
    log.info("wrote %d events in %d traces to %s", out.n_events, len(out), args.out)
    return 0


def cmd_generate(args, opts) -> int:
    _need_parent(args.out)
    policy = petri.StopPolicy(int(opts["max_steps"]), float(opts["stop_probability"]))
    out = petri.simulate(petri.motivating_example(), int(opts["n_traces"]), int(opts["seed"]), policy)
    save_xes(out, args.out)
    log.info("wrote %d events in %d traces to %s", out.n_events, len(out), args.out)
    return 0


def cmd_train(args, opts) -> int:
    _need_file(args.log)
    _need_parent(args.model)
    fc, tc = feature_config(opts), train_config(opts)
    model = abstraction.train_abstractor(read_xes(args.log), fc, tc)
    abstraction.save_model(model, args.model)
    info = model.crf_model.info
    log.info("labels: %s", ", ".join(model.labels))
    log.info("observation features: %d", len(model.registry))
    log.info("nonzero weights: %d of %d", info.nonzero_weights, model.crf_model.weights.size)
    log.info("final objective: %.6f after %d iterations%s", info.objective, info.iterations,
             "" if info.converged else " (iteration limit)")
    return 0


def cmd_abstract(args, opts) -> int:
    _need_file(args.model)
    _need_file(args.log)
    _need_parent(args.out)
    if args.labeled_out is not None:
        _need_parent(args.labeled_out)
    model = abstraction.load_model(args.model)
    labeled = abstraction.annotate(model, read_xes(args.log))
    if args.labeled_out is not None:
        save_xes(labeled, args.labeled_out)
    out = abstraction.collapse_log(labeled)
    save_xes(out, args.out)
    log.info("wrote %d activity events in %d traces to %s", out.n_events, len(out), args.out)
    return 0


def cmd_evaluate(args, opts) -> int:
    _need_file(args.log)
    _need_parent(args.report)
    fc, tc = feature_config(opts), train_config(opts)
    report = evaluation.loto_cv(read_xes(args.log), fc, tc, threads=int(opts["threads"]))
    args.report.write_text(report.to_json(), encoding="utf-8")
    print(report.summary(), file=sys.stderr)
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "generate": cmd_generate,
    "train": cmd_train,
    "abstract": cmd_abstract,
    "evaluate": cmd_evaluate,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(message)s",
        stream=sys.stderr,
        force=True,
    )
    try:
        opts = resolve(args, _load_config(args.config))
        return COMMANDS[args.command](args, opts)
    except (InputError, *INPUT_ERRORS) as exc:
        print(f"evabs {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"evabs {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report and map to the internal-error status
        log.debug("internal error", exc_info=True)
        print(f"evabs {args.command}: internal error: {exc!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
