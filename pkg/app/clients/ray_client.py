from typing import Any, Callable, Iterable, List, Optional
from configs.envs import env_variables
import logging

try:
    import ray
except ImportError:
    ray = None

logger = logging.getLogger(__name__)


def _apply(fn: Callable[[Any], Any], item: Any) -> Any:
    return fn(item)


class RayClientConfig:
    _instance = None

    def __new__(cls) -> 'RayClientConfig':
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __init__(self):
        if hasattr(self, "_is_initialized") and self._is_initialized:
            return
        self._is_initialized = True

        self.client = None
        self.ray_address: Optional[str] = env_variables.RAY_HEAD_ADDRESS

    def _connect_client(self):
        if ray is None:
            logger.warning("ray is not installed; fan-out runs in-process")
            self.client = None
            return
        try:
            # If ray is already initialized, don't call init again.
            if ray.is_initialized():
                logger.info("Ray already initialized")
                self.client = ray
                return

            if self.ray_address:
                ray.init(address=self.ray_address, ignore_reinit_error=True, log_to_driver=False)
            else:
                ray.init(ignore_reinit_error=True, log_to_driver=False)
            self.client = ray
            logger.info("Connected to Ray cluster at %s", self.ray_address or "local")
        except Exception as e:
            logger.exception("Failed to initialize Ray client: %s", e)
            self.client = None

    def get_client(self):
        if self.client is None:
            self._connect_client()
        return self.client

    def map(self, fn: Callable[[Any], Any], items: Iterable[Any]) -> List[Any]:
        """
        Run fn over items as Ray tasks. Results come back in input order, so
        completion order never leaks into callers. Falls back to an in-process
        map when Ray cannot be reached.
        """
        items = list(items)
        client = self.get_client()
        if client is None:
            return [fn(item) for item in items]
        remote_fn = client.remote(_apply)
        return client.get([remote_fn.remote(fn, item) for item in items])


ray_client = RayClientConfig()


def fan_out(fn: Callable[[Any], Any], items: Iterable[Any], backend: Optional[str] = None) -> List[Any]:
    """Ordered map over items on the configured parallel backend."""
    backend = backend or env_variables.PARALLEL_BACKEND
    if backend == "ray":
        return ray_client.map(fn, items)
    return [fn(item) for item in items]
