"""Python front end for the acpc cache simulator and reuse predictor.

Configs and metrics reports are plain dicts; traces and models are opaque
handles backed by the C++ core.
"""

import json

from . import _core
from ._core import (
    AcpcError,
    Model,
    Trace,
    TrainOutput,
    label_trace,
    load_model,
    random_model,
    read_trace,
)

__all__ = [
    "AcpcError",
    "Model",
    "Trace",
    "TrainOutput",
    "compare",
    "derived_improvements",
    "generate_trace",
    "label_trace",
    "load_model",
    "online_feedback_loop",
    "random_model",
    "read_trace",
    "run_policy",
    "train",
]


def generate_trace(config=None):
    return _core._generate_trace(json.dumps(config or {}))


def train(labeled_trace, kind="tcn", config=None):
    return _core._train(labeled_trace, kind, json.dumps(config or {}))


def run_policy(trace, cache=None, policy=None, model=None, seed=0):
    """Returns (report, counters) as dicts."""
    cache = dict(cache or {})
    if policy is not None:
        cache["policy"] = policy.upper()
    report, counters = _core._run_policy(trace, json.dumps(cache), model, seed)
    return json.loads(report), json.loads(counters)


def online_feedback_loop(trace, model, cache=None, online=None, seed=0):
    """Returns (report, updated model, per-batch loss list)."""
    cache = dict(cache or {})
    cache.setdefault("policy", "PARM")
    report, updated, losses = _core._online_feedback_loop(
        trace, json.dumps(cache), model, json.dumps(online or {"enabled": True}), seed
    )
    return json.loads(report), updated, list(losses)


def compare(reports):
    """Comparison CSV text for a list of report dicts from one trace."""
    return _core._compare([json.dumps(r) for r in reports])


def derived_improvements(baseline, candidate):
    return _core._derived_improvements(json.dumps(baseline), json.dumps(candidate))
