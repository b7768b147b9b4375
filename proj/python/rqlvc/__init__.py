"""Rate control for variable-rate learned video coding on a simulated codec."""

import json as _json

from ._core import *  # noqa: F401,F403
from ._core import default_benchmark_config_text, run_experiment_text

__version__ = "0.1.0"


def default_benchmark_config():
    """Built-in benchmark configuration as a dict."""
    return _json.loads(default_benchmark_config_text())


def run_experiment(config, jobs=1, base_dir=""):
    """Run an experiment described by a dict (same schema as the JSON files)."""
    return run_experiment_text(_json.dumps(config), jobs, base_dir)
