"""Leave-one-trace-out evaluation on an interval-annotated smart-home dataset.

Expects a sensor file ``start,end,sensor_id`` and an activity file
``start,end,label`` (the Van Kasteren layout converted to CSV). Sensor
activations become start/complete events, days become traces, and events
outside every annotated activity get the label given by ``--unlabeled``.

    python scripts/run_dataset.py sensors.csv activities.csv --out results/
"""
import argparse
import logging
import time
from pathlib import Path

from evabs import crf, ingestion
from evabs.evaluation import loto_cv
from evabs.features import FeatureConfig
from evabs.xes import CONCEPT_NAME, save_xes


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("sensors", type=Path)
    p.add_argument("activities", type=Path)
    p.add_argument("--timezone", default=None, help="zone of naive timestamps (default UTC)")
    p.add_argument("--boundary", default="00:00", help="local time of day that starts a new trace")
    p.add_argument("--unlabeled", default="Other")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--max-components", type=int, default=8)
    p.add_argument("--l1", type=float, default=0.1)
    p.add_argument("--lifecycle", action="store_true", help="add start/complete duration features")
    p.add_argument("--out", type=Path, help="directory for the labeled log and the report")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    t0 = time.perf_counter()
    tz = ingestion.parse_timezone(args.timezone)
    events = ingestion.readings_to_events(ingestion.read_intervals_csv(args.sensors, tz))
    events = ingestion.label_events(events, ingestion.read_activities_csv(args.activities, tz), args.unlabeled)
    log = ingestion.segment_cases(events, ingestion.SegmentationPolicy(ingestion.parse_boundary(args.boundary), tz))
    print(f"{log.n_events} events in {len(log)} traces")
    features = FeatureConfig(ngrams=((CONCEPT_NAME, 2),), periods=("day",), lifecycle=args.lifecycle,
                             max_components=args.max_components)
    report = loto_cv(log, features, crf.TrainConfig(l1_strength=args.l1), threads=args.threads)
    print(report.summary())
    print(f"elapsed {time.perf_counter() - t0:.1f}s")
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        save_xes(log, args.out / "dataset.xes")
        (args.out / "report.json").write_text(report.to_json(), encoding="utf-8")


if __name__ == "__main__":
    main()
