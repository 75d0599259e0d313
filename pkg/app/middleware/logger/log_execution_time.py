from app.middleware.logger.logging import file_logger

import functools
import time
from typing import Callable


def log_execution_time(func: Callable) -> Callable:
    """
    Decorator that logs the wall time of a simulation entry point.
    """
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        start_time = time.perf_counter()
        try:
            return func(*args, **kwargs)
        finally:
            execution_time = time.perf_counter() - start_time
            file_logger.info(
                f"{func.__module__}.{func.__name__} executed in {execution_time:.3f} seconds",
                extra={
                    "ctx": "TIMING",
                    "function": f"{func.__module__}.{func.__name__}",
                    "execution_time": execution_time,
                }
            )

    return wrapper
