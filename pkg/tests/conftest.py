import os
import tempfile

# settings and the run log directory are read at import time
os.environ.setdefault("LOG_DIR", tempfile.mkdtemp(prefix="fedcore-logs-"))
os.environ.setdefault("PARALLEL_BACKEND", "local")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from app.services.datasets.service import generate_synthetic, partition  # noqa: E402
from app.services.game.model import AccuracyModel, CharacteristicTable, Coalition, ValuationParams  # noqa: E402
from app.services.game.service import analytic_oracle, build_characteristic_table  # noqa: E402


def random_table(n: int, seed: int, b0: float = 2.0, k: float = 2.0) -> CharacteristicTable:
    """Complete table from random coalition accuracies, the way the mechanism builds one."""
    rng = np.random.default_rng(seed)
    solo = rng.uniform(0.3, 0.8, size=n)
    accuracies = {c: float(rng.uniform(0.3, 0.95)) for c in Coalition.all_nonempty(n)}
    for i in range(n):
        accuracies[Coalition.of([i], n)] = float(solo[i])
    vp = ValuationParams(k=[k] * n, b0=b0, solo_accuracy=solo.tolist())
    return build_characteristic_table(n, accuracies, vp)


def oracle_table(n: int, degrees=None, b0: float = 2.0, k: float = 2.0) -> CharacteristicTable:
    degrees = [0.0] * n if degrees is None else list(degrees)
    accuracy = analytic_oracle(degrees, AccuracyModel())
    solo = [accuracy(Coalition.of([i], n)) for i in range(n)]
    vp = ValuationParams(k=[k] * n, b0=b0, solo_accuracy=solo)
    return build_characteristic_table(n, {c: accuracy(c) for c in Coalition.all_nonempty(n)}, vp)


@pytest.fixture
def blobs():
    return generate_synthetic(200, 4, 2, 3.0, seed=7)


@pytest.fixture
def small_split():
    data = generate_synthetic(240, 3, 3, 2.0, seed=11)
    return partition(data, 4, 0.25, seed=5)


@pytest.fixture
def write_config(tmp_path):
    """Write a KEY=VALUE experiment file; returns its path."""

    def _write(name: str = "experiment.env", **values) -> str:
        path = tmp_path / name
        path.write_text("".join(f"{key.upper()}={value}\n" for key, value in values.items()), encoding="utf-8")
        return str(path)

    return _write
