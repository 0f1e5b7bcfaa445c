"""CoDeGraph zero-shot anomaly detection engine."""

import json as _json

from ._core import *  # noqa: F401,F403
from ._core import __version__, run_pipeline as _run_pipeline


def run(config_path):
    """Run the pipeline from a config file and return the report as a dict."""
    return _json.loads(_run_pipeline(str(config_path)))
