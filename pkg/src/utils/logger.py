# utils/logger.py
import logging
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional

DEFAULT_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

# top-level packages under src/, plus the stage loggers ("stage.<name>")
PACKAGES = ("core", "corpus", "vocab", "objectives", "model", "mi", "tasks", "stage", "stages", "utils", "run")

# torch/numpy warnings (e.g. nested tensor fallbacks) arrive via logging.captureWarnings
WARNINGS_LOGGER = "py.warnings"


def setup_logging(
    level: str = "INFO",
    log_format: Optional[str] = None,
    log_file: Optional[str] = None,
    color: Optional[bool] = None,
    max_bytes: int = 10_485_760,  # 10MB
    backup_count: int = 3,
):
    """
    Configure the root logger once per process.

    Console logs go to stderr: stdout is reserved for stage results such as
    the report table. Colors default to on when stderr is a terminal.
    Training runs that pass log_file also get a rotating plain-text copy.
    """
    log_format = log_format or DEFAULT_FORMAT
    numeric_level = logging.getLevelName(level.upper())
    if not isinstance(numeric_level, int):
        numeric_level = logging.INFO

    if color is None:
        color = sys.stderr.isatty()

    root_logger = logging.getLogger()
    root_logger.setLevel(numeric_level)
    for handler in list(root_logger.handlers):
        root_logger.removeHandler(handler)
        handler.close()

    project_filter = DialopreLogFilter()

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(
        ColoredFormatter(log_format, datefmt=DATE_FORMAT) if color else logging.Formatter(log_format, datefmt=DATE_FORMAT)
    )
    console_handler.addFilter(project_filter)
    root_logger.addHandler(console_handler)

    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        file_handler = RotatingFileHandler(log_file, maxBytes=max_bytes, backupCount=backup_count, encoding="utf-8")
        file_handler.setFormatter(logging.Formatter(log_format, datefmt=DATE_FORMAT))
        file_handler.addFilter(project_filter)
        root_logger.addHandler(file_handler)

    logging.captureWarnings(True)
    for noisy in ("torch", "numpy", "matplotlib"):
        logging.getLogger(noisy).setLevel(logging.ERROR)

    logging.getLogger(__name__).debug(f"Logging initialized at {logging.getLevelName(numeric_level)} level")


class DialopreLogFilter(logging.Filter):
    """Pass records from this project's packages, the root logger and captured warnings"""

    ALLOWED = frozenset((*PACKAGES, "__main__", "root", WARNINGS_LOGGER))

    def filter(self, record: logging.LogRecord) -> bool:
        return record.name.split(".", 1)[0] in self.ALLOWED


class ColoredFormatter(logging.Formatter):
    COLORS = {
        "DEBUG": "\033[36m",
        "INFO": "\033[32m",
        "WARNING": "\033[33m",
        "ERROR": "\033[31m",
        "CRITICAL": "\033[35m",
    }
    RESET = "\033[0m"
    BOLD = "\033[1m"

    def format(self, record: logging.LogRecord) -> str:
        color = self.COLORS.get(record.levelname)
        if color is None:
            return super().format(record)
        # format a copy; the file handler shares the record and must stay plain
        colored = logging.makeLogRecord(record.__dict__)
        colored.levelname = f"{color}{self.BOLD}{record.levelname:8s}{self.RESET}"
        return super().format(colored)
