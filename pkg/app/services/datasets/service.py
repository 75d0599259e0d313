import logging
import math
import os
from typing import List, Tuple

import numpy as np
import pandas as pd

from app.exceptions import CsvParseError, ParameterError, SchemaError
from app.services.datasets.model import InputStrategy, LabeledDataset, StrategyKind

logger = logging.getLogger(__name__)


def generate_synthetic(
    n_samples: int,
    n_features: int,
    n_classes: int,
    class_separation: float,
    seed: int,
) -> LabeledDataset:
    """
    Gaussian class blobs with unit variance. Class c is centred at
    c * class_separation along the unit diagonal, so neighbouring means are
    exactly class_separation apart. Labels are balanced within one sample.
    """
    if n_classes < 2 or n_samples < n_classes:
        raise ParameterError(f"need n_samples >= n_classes >= 2, got {n_samples}, {n_classes}")
    if n_features < 1:
        raise ParameterError(f"need n_features >= 1, got {n_features}")

    rng = np.random.default_rng(seed)
    direction = np.ones(n_features) / math.sqrt(n_features)
    means = class_separation * np.arange(n_classes)[:, None] * direction[None, :]
    labels = rng.permutation(np.arange(n_samples) % n_classes)
    features = means[labels] + rng.standard_normal((n_samples, n_features))
    return LabeledDataset(features=features, labels=labels, n_classes=n_classes, name="synthetic")


def load_csv(path: str, label_column: str) -> LabeledDataset:
    """
    Read a UTF-8 comma-separated file with a header row. Every column other
    than label_column must be numeric. Label values are mapped to class ids by
    sorted order (integer labels 0..C-1 map to themselves). Row numbers in
    errors are file line numbers, header being line 1.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"CSV file not found: {path}")
    try:
        frame = pd.read_csv(path, encoding="utf-8", dtype=str, keep_default_na=False)
    except pd.errors.ParserError as e:
        raise CsvParseError(f"{path}: malformed CSV: {e}") from e
    except pd.errors.EmptyDataError as e:
        raise SchemaError(f"{path}: no header row") from e

    if label_column not in frame.columns:
        raise SchemaError(f"{path}: label column '{label_column}' not found in header {list(frame.columns)}")

    feature_columns = [column for column in frame.columns if column != label_column]
    if not feature_columns:
        raise SchemaError(f"{path}: no feature columns besides '{label_column}'")

    features = np.empty((len(frame), len(feature_columns)), dtype=np.float64)
    for j, column in enumerate(feature_columns):
        raw = frame[column].str.strip()
        parsed = pd.to_numeric(raw, errors="coerce")
        bad = parsed.isna() | ~np.isfinite(parsed.to_numpy(dtype=np.float64, na_value=np.nan))
        if bad.any():
            position = int(np.flatnonzero(bad.to_numpy())[0])
            raise CsvParseError(
                f"{path}: row {position + 2}, column '{column}': non-numeric value {frame[column].iloc[position]!r}",
                row=position + 2,
                column=column,
            )
        features[:, j] = parsed.to_numpy(dtype=np.float64)

    raw_labels = frame[label_column].str.strip()
    missing = raw_labels.isna() | (raw_labels == "")
    if missing.any():
        position = int(np.flatnonzero(missing.to_numpy())[0])
        raise CsvParseError(
            f"{path}: row {position + 2}: missing label in column '{label_column}'",
            row=position + 2,
            column=label_column,
        )

    numeric_labels = pd.to_numeric(raw_labels, errors="coerce")
    values = numeric_labels.to_numpy() if not numeric_labels.isna().any() else raw_labels.to_numpy()
    classes, labels = np.unique(values, return_inverse=True)
    if len(classes) < 2:
        raise SchemaError(f"{path}: label column '{label_column}' has fewer than 2 classes")

    logger.debug("loaded %s: %d rows, %d features, %d classes", path, len(frame), len(feature_columns), len(classes))
    return LabeledDataset(
        features=features,
        labels=labels,
        n_classes=len(classes),
        name=os.path.splitext(os.path.basename(path))[0],
    )


def partition(
    data: LabeledDataset,
    n_participants: int,
    test_fraction: float,
    seed: int,
) -> Tuple[List[LabeledDataset], LabeledDataset]:
    """Shuffle, hold out round(test_fraction * m) rows for the server, split the rest evenly."""
    if not 0.0 < test_fraction < 1.0:
        raise ParameterError(f"test_fraction must be in (0, 1), got {test_fraction}")
    if n_participants < 1:
        raise ParameterError(f"n_participants must be >= 1, got {n_participants}")

    m = data.n_samples
    n_test = int(round(test_fraction * m))
    if n_test < 1 or m - n_test < n_participants:
        raise ParameterError(
            f"{m} samples cannot give a non-empty test set and {n_participants} non-empty shards"
        )

    order = np.random.default_rng(seed).permutation(m)
    test = data.subset(order[:n_test], name=f"{data.name}-test")
    shards = [
        data.subset(chunk, name=f"{data.name}-shard{i}")
        for i, chunk in enumerate(np.array_split(order[n_test:], n_participants))
    ]
    return shards, test


def _fraction_count(fraction: float, m: int) -> int:
    return int(math.floor(fraction * m + 1e-9))


def apply_strategy(data: LabeledDataset, strategy: InputStrategy, seed: int) -> LabeledDataset:
    """Transform a participant's true data according to its input strategy."""
    kind = strategy.kind
    if kind == StrategyKind.truthful:
        return data
    if kind == StrategyKind.quit:
        return LabeledDataset(
            features=np.empty((0, data.n_features)),
            labels=np.empty(0, dtype=np.int64),
            n_classes=data.n_classes,
            name=f"{data.name}-quit",
        )

    f = strategy.degree
    m = data.n_samples
    if f == 0.0 or m == 0:
        return data

    rng = np.random.default_rng(seed)
    name = f"{data.name}-{strategy.label()}"

    if kind == StrategyKind.noise:
        scale = f * data.features.std(axis=0)
        noisy = data.features + rng.standard_normal(data.features.shape) * scale[None, :]
        return LabeledDataset(features=noisy, labels=data.labels, n_classes=data.n_classes, name=name)

    count = _fraction_count(f, m)
    if kind == StrategyKind.removal:
        keep = np.sort(rng.choice(m, size=m - count, replace=False))
        return data.subset(keep, name=name)

    # label_flip: a uniform offset in 1..C-1 always lands on a different class
    flipped = data.labels.copy()
    chosen = rng.choice(m, size=count, replace=False)
    offsets = rng.integers(1, data.n_classes, size=count)
    flipped[chosen] = (flipped[chosen] + offsets) % data.n_classes
    return LabeledDataset(features=data.features, labels=flipped, n_classes=data.n_classes, name=name)
