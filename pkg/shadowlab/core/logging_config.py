"""
SHADOWLAB Logging
Console and JSON log configuration. Experiment summaries carry their
parameters as structured fields so JSON logs can be filtered by kind and seed.
"""

import json
import logging
import os
import sys
from datetime import datetime, timezone
from typing import Any, Dict


class JsonFormatter(logging.Formatter):
    """
    Formatter that emits one JSON object per record for structured logs.
    """
    def format(self, record: logging.LogRecord) -> str:
        log_record: Dict[str, Any] = {
            "timestamp": datetime.fromtimestamp(record.created, tz=timezone.utc).isoformat(),
            "level": record.levelname,
            "name": record.name,
            "message": record.getMessage(),
            "module": record.module,
            "funcName": record.funcName,
            "lineno": record.lineno,
        }

        # Experiment fields passed through ``extra={"extra_fields": {...}}``
        if hasattr(record, "extra_fields"):
            log_record.update(record.extra_fields)

        if record.exc_info:
            log_record["exception"] = self.formatException(record.exc_info)

        return json.dumps(log_record, default=str)


def setup_logging(level: int = logging.INFO, use_json: bool = False) -> None:
    """
    Configure the root logger for library or batch use.
    """
    if os.getenv("SHADOWLAB_LOG_JSON", "").lower() == "true":
        use_json = True

    handler = logging.StreamHandler(sys.stderr)

    if use_json:
        handler.setFormatter(JsonFormatter())
    else:
        handler.setFormatter(logging.Formatter(
            "%(asctime)s | %(name)-25s | %(levelname)-7s | %(message)s",
            datefmt="%H:%M:%S",
        ))

    root_logger = logging.getLogger()
    root_logger.setLevel(level)

    for h in root_logger.handlers[:]:
        root_logger.removeHandler(h)

    root_logger.addHandler(handler)

    # matplotlib font discovery is chatty at DEBUG
    logging.getLogger("matplotlib").setLevel(logging.WARNING)


def get_logger(name: str) -> logging.Logger:
    return logging.getLogger(name)


def log_summary(logger: logging.Logger, message: str, **fields: Any) -> None:
    """INFO line whose keyword fields land in ``extra_fields`` (top-level keys in JSON output)."""
    logger.info(message, extra={"extra_fields": fields}, stacklevel=2)
