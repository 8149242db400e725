"""
Views module for the HDLSS score bias toolkit.
Progress reporting and plain-text summaries written to standard output.
"""
import logging
import sys
from typing import Dict, Optional, TextIO

from ..states.app_state import AppState, CliConfig
from ..states.models import ExperimentReport

logger = logging.getLogger(__name__)


class ProgressView:
    """
    Logs repetition progress of the running experiment
    """
    def __init__(self, app_state: AppState, every: int = 10):
        self.app_state = app_state
        self.every = max(1, every)
        self.app_state.add_observer(self)

    def update(self):
        """Called by AppState whenever the run status changes"""
        status = self.app_state.status
        if status.is_running and status.completed and status.completed % self.every == 0:
            logger.info(f"{status.experiment}: {status.completed}/{status.total} repetitions")
        elif not status.is_running and status.experiment:
            logger.debug(status.message)


class SummaryView:
    """
    Renders aggregates and manifests as text
    """
    def __init__(self, stream: Optional[TextIO] = None):
        self.stream = stream if stream is not None else sys.stdout

    def _write(self, line: str = ""):
        self.stream.write(line + "\n")

    def show_manifest(self, config: CliConfig, rng_id: str):
        """Print the resolved configuration and the RNG algorithm"""
        self._write("# manifest")
        for key, value in config.as_dict().items():
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            self._write(f"{key} = {value}")
        self._write(f"rng = {rng_id}")

    def show_report(self, report: ExperimentReport):
        """Print mean, sd and count of every numeric column"""
        title = report.metadata.get("config", report.name)
        self._write(f"== {report.name} [{title}] ({len(report.rows)} reps, {report.excluded} excluded)")
        self._write(f"{'column':<28}{'mean':>12}{'sd':>12}{'count':>8}")
        for column, (mean, sd, count) in report.aggregate().items():
            self._write(f"{column:<28}{mean:>12.4f}{sd:>12.4f}{count:>8d}")

    def show_values(self, title: str, values: Dict[str, object]):
        """Print one key/value block"""
        self._write(f"== {title}")
        for key, value in values.items():
            if isinstance(value, float):
                value = f"{value:.4f}"
            self._write(f"{key:<28}{value!s:>12}")

    def show_files(self, paths):
        for path in paths:
            self._write(f"wrote {path}")
