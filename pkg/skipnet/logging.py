"""Logging configuration for SKIPNet.

Records carry the fields bound with ``log_context`` (command, seed, epoch,
...), as top-level JSON keys in prod and as a ``[key=value]`` suffix
otherwise.
"""

import json
import logging
import sys
from collections.abc import Iterator
from contextlib import contextmanager
from contextvars import ContextVar
from typing import Any

from skipnet.config import get_settings

_context: ContextVar[dict[str, Any]] = ContextVar("log_context", default={})

# Keys a context field may not shadow
_RESERVED = frozenset({"level", "msg", "logger", "exc_info"})


@contextmanager
def log_context(**fields: Any) -> Iterator[None]:
    """Attach ``fields`` to every record logged inside the block."""
    clash = _RESERVED.intersection(fields)
    if clash:
        raise ValueError(f"Reserved log field(s): {', '.join(sorted(clash))}")
    token = _context.set({**_context.get(), **fields})
    try:
        yield
    finally:
        _context.reset(token)


class ContextFilter(logging.Filter):
    """Copy the current ``log_context`` fields onto each record."""

    def filter(self, record: logging.LogRecord) -> bool:
        record.context = dict(_context.get())
        return True


class JsonFormatter(logging.Formatter):
    """JSON formatter for production logging."""

    def format(self, record: logging.LogRecord) -> str:
        base: dict[str, Any] = {
            "level": record.levelname,
            "msg": record.getMessage(),
            "logger": record.name,
            **getattr(record, "context", {}),
        }
        if record.exc_info:
            base["exc_info"] = self.formatException(record.exc_info)
        return json.dumps(base, default=str)


class ContextFormatter(logging.Formatter):
    """Human-readable lines with the context fields appended."""

    def format(self, record: logging.LogRecord) -> str:
        line = super().format(record)
        context = getattr(record, "context", {})
        if context:
            line += " [" + " ".join(f"{k}={v}" for k, v in context.items()) + "]"
        return line


def setup_logging() -> None:
    """Configure logging based on environment.

    Diagnostics go to stderr; stdout is reserved for command output.
    """
    settings = get_settings()
    handler = logging.StreamHandler(sys.stderr)
    handler.addFilter(ContextFilter())

    if settings.env == "prod":
        handler.setFormatter(JsonFormatter())
    else:
        handler.setFormatter(
            ContextFormatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")
        )

    root = logging.getLogger()
    root.handlers.clear()
    root.addHandler(handler)
    root.setLevel(settings.log_level)
