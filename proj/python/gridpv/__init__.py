"""Rooftop photovoltaic classification pipeline (Python veneer over the C++ core)."""

import json as _json

try:
    from ._gridpv import *  # noqa: F401,F403  (installed layout)
    from . import _gridpv as _core
except ImportError:  # in-tree layout: the module sits next to the build outputs
    from _gridpv import *  # noqa: F401,F403
    import _gridpv as _core

__version__ = "0.1.0"


def score_report(truth, predicted, cities, weight=0.5):
    """Per-city / global / weighted F1 report as a dict."""
    return _json.loads(_core.score(truth, predicted, cities, weight))


def run_pipeline_report(config, registry_dir=""):
    """Multi-city three-phase run; returns the report as a dict."""
    return _json.loads(_core.run_pipeline(config, registry_dir))
