# core/kafka_producer.py
from __future__ import annotations

import json
import logging
from typing import Any, Dict, Optional

from confluent_kafka import Producer


class KafkaLogHandler(logging.Handler):
    """Ships log records (already rendered as dicts) to a Kafka topic."""

    def __init__(self, bootstrap: str, topic: str, producer: Optional[Any] = None):
        super().__init__()
        self.topic = topic
        self.producer = producer or Producer({"bootstrap.servers": bootstrap})

    def emit(self, record: logging.LogRecord) -> None:
        try:
            payload: Dict[str, Any] = getattr(record, "payload", None) or {
                "level": record.levelname,
                "logger": record.name,
                "event": record.getMessage(),
            }
            self.producer.produce(self.topic, value=json.dumps(payload).encode("utf-8"))
            self.producer.poll(0)
        except Exception:
            # swallow: logging errors stay out of the caller
            self.handleError(record)

    def flush(self) -> None:
        try:
            self.producer.flush(1.0)
        except Exception:
            pass
