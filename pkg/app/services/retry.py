import logging
from typing import Callable, TypeVar

from tenacity import Retrying, before_sleep_log, retry_if_exception_type, stop_after_attempt, wait_none

from app.errors import ConstructionError

logger = logging.getLogger(__name__)

MAX_ATTEMPTS = 8

T = TypeVar("T")


def construct_with_retries(build: Callable[[], T], attempts: int = MAX_ATTEMPTS) -> T:
    """
    Call a randomized builder until it stops raising ConstructionError.
    The builder must draw fresh randomness on every call; the last
    ConstructionError is re-raised once attempts are exhausted.
    """
    retrying = Retrying(
        stop=stop_after_attempt(attempts),
        wait=wait_none(),
        retry=retry_if_exception_type(ConstructionError),
        before_sleep=before_sleep_log(logger, logging.WARNING),
        reraise=True,
    )
    return retrying(build)
