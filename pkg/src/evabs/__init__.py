"""Supervised abstraction of sensor-level event logs into human activity events."""
from .abstraction import (
    AbstractorModel,
    abstract_log,
    annotate,
    collapse,
    collapse_log,
    load_model,
    save_model,
    train_abstractor,
)
from .crf import CrfModel, TrainConfig
from .evaluation import damerau_levenshtein, dls, ground_truth_sequence, loto_cv
from .features import FeatureConfig
from .petri import StopPolicy, motivating_example, simulate
from .xes import Event, EventLog, Trace, read_xes, save_xes

__version__ = "0.1.0"
