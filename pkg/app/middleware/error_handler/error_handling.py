import functools
import sys
from typing import Callable

from pydantic import ValidationError

from app.exceptions import ConfigError, FedCoreError, MechanismError
from app.middleware.logger.error_logger import ErrorLogger
from app.middleware.logger.logging import file_logger
from app.middleware.logger.RunContextManager import RunContextManager

EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_RUNTIME_ERROR = 2

error_logger = ErrorLogger()


def handle_command_errors(func: Callable[..., int]) -> Callable[..., int]:
    """Turn exceptions escaping a command handler into its exit code."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs) -> int:
        try:
            return func(*args, **kwargs)

        except (ConfigError, ValidationError) as config_exc:
            # Config problems: nothing has been written yet
            key = getattr(config_exc, "key", None)
            file_logger.error(f"ConfigError: {config_exc}", extra={"ctx": "CONFIG"})
            print(f"config error{f' [{key}]' if key else ''}: {config_exc}", file=sys.stderr)
            return EXIT_CONFIG_ERROR

        except MechanismError as mech_exc:
            diagnostics = mech_exc.solution.diagnostics() if mech_exc.solution is not None else {}
            error_logger.log_error(
                mech_exc,
                RunContextManager.get_run_id(),
                {"round": mech_exc.round_index, **diagnostics},
            )
            print(f"mechanism error in round {mech_exc.round_index}: {mech_exc}", file=sys.stderr)
            return EXIT_RUNTIME_ERROR

        except FedCoreError as run_exc:
            error_logger.log_error(run_exc, RunContextManager.get_run_id())
            print(f"error: {run_exc}", file=sys.stderr)
            return EXIT_RUNTIME_ERROR

        except Exception as exc:
            # Anything else is a bug; keep the traceback in the run log
            file_logger.exception(f"Unexpected error: {exc}", extra={"ctx": "UNEXPECTED"})
            print(f"unexpected error: {exc}", file=sys.stderr)
            return EXIT_RUNTIME_ERROR

        finally:
            RunContextManager.clear_run_context()

    return wrapper
