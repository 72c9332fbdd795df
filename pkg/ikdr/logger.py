"""Logging functionality for the I-KDR toolkit."""

import os
import logging
from logging.handlers import RotatingFileHandler
from typing import Dict, Optional, Sequence

from dotenv import load_dotenv
from rich.logging import RichHandler

load_dotenv()

# Configure logging
LOG_DIRECTORY = os.environ.get("IKDR_LOG_DIR", os.path.join(os.path.expanduser("~"), ".ikdr", "logs"))
LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"
CONSOLE_FORMAT = "%(name)s: %(message)s"
RUN_LOG_FORMAT = "%(asctime)s [RUN] %(message)s"

# Ensure log directory exists
os.makedirs(LOG_DIRECTORY, exist_ok=True)

# Store logger instances for reuse
_loggers: Dict[str, logging.Logger] = {}


def console_level() -> int:
    """Resolve the console log level from the IKDR_LOG environment variable."""
    name = os.environ.get("IKDR_LOG", "INFO").strip().upper()
    level = logging.getLevelName(name)
    return level if isinstance(level, int) else logging.INFO


def get_logger(name: str) -> logging.Logger:
    """Get a logger instance.

    Args:
        name: The name of the logger, typically __name__

    Returns:
        A configured logger instance
    """
    if name in _loggers:
        return _loggers[name]

    logger = logging.getLogger(name)
    logger.setLevel(logging.DEBUG)
    logger.propagate = False

    # Console goes through rich, level follows IKDR_LOG
    console_handler = RichHandler(show_path=False, rich_tracebacks=False)
    console_handler.setLevel(console_level())
    console_handler.setFormatter(logging.Formatter(CONSOLE_FORMAT))

    # Everything from DEBUG up lands in the rotating file
    log_file = os.path.join(LOG_DIRECTORY, f"{name.split('.')[-1]}.log")
    file_handler = RotatingFileHandler(log_file, maxBytes=1024 * 1024 * 10, backupCount=5)
    file_handler.setLevel(logging.DEBUG)
    file_handler.setFormatter(logging.Formatter(LOG_FORMAT))

    logger.addHandler(console_handler)
    logger.addHandler(file_handler)

    _loggers[name] = logger
    return logger


def set_console_level(level: int) -> None:
    """Change the console level of every logger created so far."""
    for logger in _loggers.values():
        for handler in logger.handlers:
            if isinstance(handler, RichHandler):
                handler.setLevel(level)


class RunLogger:
    """One line per ikdr invocation in runs.log: command, exit status, time, settings and files written."""

    def __init__(self):
        """Initialize the run logger."""
        self.logger = logging.getLogger("ikdr.runs")
        self.logger.setLevel(logging.INFO)
        self.logger.propagate = False

        # Remove any existing handlers
        for handler in self.logger.handlers[:]:
            self.logger.removeHandler(handler)

        log_file = os.path.join(LOG_DIRECTORY, "runs.log")
        file_handler = RotatingFileHandler(log_file, maxBytes=1024 * 1024 * 10, backupCount=5)
        file_handler.setLevel(logging.INFO)
        file_handler.setFormatter(logging.Formatter(RUN_LOG_FORMAT))

        self.logger.addHandler(file_handler)

    def log_run(self, command: str, config_digest: str, exit_code: int, elapsed: Optional[float] = None,
                outputs: Sequence[str] = (), error: Optional[str] = None) -> str:
        """Log a CLI run.

        Args:
            command: The subcommand that was executed
            config_digest: Short description of the effective configuration
            exit_code: Process exit status (0, 1 or 2)
            elapsed: Wall-clock seconds spent in the command
            outputs: Files the command wrote
            error: Failure reason, if any

        Returns:
            The logged line
        """
        status = "SUCCESS" if exit_code == 0 else "FAILED"
        message = f"[{status}] ikdr {command} exit={exit_code}"
        if elapsed is not None:
            message += f" time={elapsed:.2f}s"
        message += f", Config: {config_digest}"

        if outputs:
            message += f", Outputs: {', '.join(outputs)}"
        if error:
            message += f", Error: {error}"

        self.logger.info(message)
        return message


# Create a global run logger instance
run_logger = RunLogger()
