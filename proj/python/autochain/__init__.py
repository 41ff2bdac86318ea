"""Blockchain overlay simulator for connected-vehicle security scenarios."""

from pathlib import Path

from ._autochain import *  # noqa: F401,F403
from ._autochain import build_report, run_scenario


def run_file(path, seed=None):
    """Run a scenario file; returns (trace text, report dict)."""
    trace = run_scenario(Path(path).read_text(), seed)
    return trace, build_report(trace)
