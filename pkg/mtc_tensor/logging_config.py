"""
Logging configuration.
JSON logs in production, human-readable otherwise; always on stderr so
that stdout stays free for results.
"""

from __future__ import annotations

import logging
import sys

from mtc_tensor.config import get_settings


def setup_logging(level: str | None = None) -> None:
    """Configure the root logger from settings; `level` overrides LOG_LEVEL."""
    settings = get_settings()
    name = (level or settings.log_level).upper()
    numeric = getattr(logging, name, logging.INFO)

    if settings.env == "production":
        try:
            import json_log_formatter

            handler = logging.StreamHandler(sys.stderr)
            handler.setFormatter(json_log_formatter.JSONFormatter())
            root = logging.getLogger()
            root.setLevel(numeric)
            root.handlers = [handler]
        except ImportError:
            _setup_basic_logging(numeric)
    else:
        _setup_basic_logging(numeric)


def _setup_basic_logging(level: int) -> None:
    logging.basicConfig(
        level=level,
        format="%(asctime)s [%(levelname)-8s] %(name)s: %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        handlers=[logging.StreamHandler(sys.stderr)],
        force=True,
    )
