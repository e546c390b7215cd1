# core/logs.py
from __future__ import annotations

import json
import logging
import sys
from datetime import datetime, timezone
from typing import Any, Dict

from core.config import get_settings

_ROOT = "bmg"
_configured = False


def _payload(record: logging.LogRecord) -> Dict[str, Any]:
    data: Dict[str, Any] = {
        "ts": datetime.fromtimestamp(record.created, tz=timezone.utc).isoformat(),
        "level": record.levelname,
        "logger": record.name,
        "event": record.getMessage(),
    }
    fields = getattr(record, "fields", None)
    if fields:
        data.update(fields)
    if record.exc_info:
        data["exc"] = logging.Formatter().formatException(record.exc_info)
    return data


class JsonFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        payload = _payload(record)
        record.payload = payload
        return json.dumps(payload, default=str)


class _PayloadFilter(logging.Filter):
    def filter(self, record: logging.LogRecord) -> bool:
        record.payload = _payload(record)
        return True


def configure_logging(force: bool = False) -> logging.Logger:
    """Install the JSON stderr handler (and the Kafka sink when configured)."""
    global _configured
    root = logging.getLogger(_ROOT)
    if _configured and not force:
        return root
    settings = get_settings()
    root.handlers.clear()
    root.setLevel(settings.log_level.upper())
    root.propagate = False

    stream = logging.StreamHandler(sys.stderr)
    stream.setFormatter(JsonFormatter())
    root.addHandler(stream)

    if settings.kafka_bootstrap:
        from core.kafka_producer import KafkaLogHandler

        kafka = KafkaLogHandler(settings.kafka_bootstrap, settings.log_topic)
        kafka.addFilter(_PayloadFilter())
        root.addHandler(kafka)

    _configured = True
    return root


def get_logger(name: str) -> logging.Logger:
    configure_logging()
    short = name.split(".")[-1]
    return logging.getLogger(f"{_ROOT}.{short}")


def log_event(logger: logging.Logger, event: str, level: int = logging.INFO, **fields: Any) -> None:
    logger.log(level, event, extra={"fields": fields})
