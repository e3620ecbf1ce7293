import time
import functools
from typing import Callable, Any, Optional, Tuple, Type

from config.settings import NetSynthSettings
from utils.logger import logger

TRANSIENT_IO_ERRORS: Tuple[Type[BaseException], ...] = (
    BlockingIOError,
    InterruptedError,
    TimeoutError,
)


def retry_on_exception(
    max_attempts: Optional[int] = None,
    delay: Optional[float] = None,
    exceptions: Tuple[Type[BaseException], ...] = TRANSIENT_IO_ERRORS,
    backoff_factor: float = 2.0
):
    """
    Decorator to retry functions on specific exceptions

    Args:
        max_attempts: Maximum number of attempts (defaults to RETRY_COUNT)
        delay: Initial delay between retries in seconds (defaults to RETRY_DELAY)
        exceptions: Tuple of exceptions to catch and retry
        backoff_factor: Multiplier for delay on each retry
    """
    def decorator(func: Callable) -> Callable:
        @functools.wraps(func)
        def wrapper(*args, **kwargs) -> Any:
            attempts = max_attempts or NetSynthSettings.RETRY_COUNT
            current_delay = NetSynthSettings.RETRY_DELAY if delay is None else delay
            last_exception = None

            for attempt in range(attempts):
                try:
                    return func(*args, **kwargs)

                except exceptions as e:
                    last_exception = e
                    if attempt < attempts - 1:
                        logger.warning(
                            f"Attempt {attempt + 1} failed for {func.__name__}: {str(e)}. "
                            f"Retrying in {current_delay} seconds..."
                        )
                        time.sleep(current_delay)
                        current_delay *= backoff_factor
                    else:
                        logger.error(
                            f"All {attempts} attempts failed for {func.__name__}. "
                            f"Last error: {str(e)}"
                        )

            raise last_exception
        return wrapper
    return decorator
