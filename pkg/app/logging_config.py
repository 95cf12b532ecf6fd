"""
Structured JSON logging configuration with run correlation context.
Logs include run_id, seed, episodes (K) and environment for traceability
across parallel experiment runs.
"""

import logging
import sys
from datetime import datetime, timezone
from typing import Optional, Dict, Any
from contextvars import ContextVar
from pythonjsonlogger import jsonlogger

from app.config import settings

# Context variables for run correlation
_run_id: ContextVar[Optional[str]] = ContextVar('run_id', default=None)
_seed: ContextVar[Optional[int]] = ContextVar('seed', default=None)
_episodes: ContextVar[Optional[int]] = ContextVar('episodes', default=None)
_environment: ContextVar[Optional[str]] = ContextVar('environment', default=None)


def set_context(
    run_id: Optional[str] = None,
    seed: Optional[int] = None,
    episodes: Optional[int] = None,
    environment: Optional[str] = None
) -> None:
    """Set run correlation context variables"""
    if run_id:
        _run_id.set(run_id)
    if seed is not None:
        _seed.set(seed)
    if episodes is not None:
        _episodes.set(episodes)
    if environment:
        _environment.set(environment)


def clear_context() -> None:
    """Clear all context variables"""
    _run_id.set(None)
    _seed.set(None)
    _episodes.set(None)
    _environment.set(None)


def get_context() -> Dict[str, Any]:
    """Get current run context"""
    return {
        "run_id": _run_id.get(),
        "seed": _seed.get(),
        "episodes": _episodes.get(),
        "environment": _environment.get()
    }


class RunContextFilter(logging.Filter):
    """Add run correlation fields to log records"""

    def filter(self, record: logging.LogRecord) -> bool:
        record.run_id = _run_id.get() or "-"
        seed = _seed.get()
        record.seed = "-" if seed is None else seed
        episodes = _episodes.get()
        record.episodes = "-" if episodes is None else episodes
        record.environment = _environment.get() or "-"
        return True


class JsonFormatter(jsonlogger.JsonFormatter):
    """JSON formatter with run context and UTC timestamps"""

    def add_fields(
        self,
        log_record: Dict[str, Any],
        record: logging.LogRecord,
        message_dict: Dict[str, Any]
    ) -> None:
        super().add_fields(log_record, record, message_dict)

        log_record['timestamp'] = datetime.now(timezone.utc).isoformat().replace('+00:00', 'Z')

        log_record['run_id'] = getattr(record, 'run_id', '-')
        log_record['seed'] = getattr(record, 'seed', '-')
        log_record['episodes'] = getattr(record, 'episodes', '-')
        log_record['environment'] = getattr(record, 'environment', '-')

        log_record['service'] = settings.service_name
        log_record['level'] = record.levelname


def configure_logging(log_level: Optional[str] = None) -> None:
    """Configure structured JSON logging on stderr (stdout carries CLI results)"""
    level = (log_level or settings.log_level).upper()

    root_logger = logging.getLogger()
    for existing in list(root_logger.handlers):
        if getattr(existing, "_lowswitch", False):
            root_logger.removeHandler(existing)

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonFormatter('%(message)s %(levelname)s %(name)s'))
    handler.addFilter(RunContextFilter())
    handler._lowswitch = True

    root_logger.setLevel(level)
    root_logger.addHandler(handler)

    logging.getLogger('app').setLevel(level)

    # Suppress verbose libraries
    logging.getLogger('asyncio').setLevel(logging.WARNING)


def get_logger(name: str) -> logging.Logger:
    """Get logger instance with context support"""
    return logging.getLogger(name)
