"""Run logging for calibration stages."""

from .logger import JSONLLogger, RunLogger, get_run_logger, set_run_logger
from .models import RunEvent

__all__ = ["JSONLLogger", "RunEvent", "RunLogger", "get_run_logger", "set_run_logger"]
