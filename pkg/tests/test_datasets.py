from collections import Counter

import numpy as np
import pytest
from pydantic import ValidationError

from app.exceptions import CsvParseError, ParameterError, SchemaError
from app.services.datasets.model import InputStrategy, LabeledDataset, StrategyKind, TRUTHFUL
from app.services.datasets.service import apply_strategy, generate_synthetic, load_csv, partition
from app.services.learning.model import ModelArch, TrainConfig
from app.services.learning.service import evaluate_accuracy, init_params, local_update


def test_synthetic_shape_and_balance(blobs):
    assert blobs.features.shape == (200, 4)
    counts = Counter(blobs.labels.tolist())
    assert set(counts) == {0, 1}
    assert all(abs(count - 100) <= 1 for count in counts.values())


def test_synthetic_is_deterministic():
    a = generate_synthetic(200, 4, 2, 3.0, seed=7)
    b = generate_synthetic(200, 4, 2, 3.0, seed=7)
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.labels, b.labels)


def test_well_separated_blobs_are_learnable():
    data = generate_synthetic(200, 4, 2, 5.0, seed=1)
    shards, test = partition(data, 1, 0.2, seed=1)
    arch = ModelArch.logistic_regression(4, 2)
    model = local_update(init_params(arch, 0), shards[0], TrainConfig(local_epochs=20), seed=3)
    assert evaluate_accuracy(model, test) >= 0.95


@pytest.mark.parametrize(
    "args",
    [(1, 4, 2, 1.0), (10, 0, 2, 1.0), (10, 4, 1, 1.0)],
)
def test_synthetic_rejects_bad_counts(args):
    with pytest.raises(ParameterError):
        generate_synthetic(*args, seed=0)


def test_dataset_invariants():
    with pytest.raises(ValidationError):
        LabeledDataset(features=np.zeros((3, 2)), labels=[0, 1], n_classes=2)
    with pytest.raises(ValidationError):
        LabeledDataset(features=np.zeros((2, 2)), labels=[0, 2], n_classes=2)
    with pytest.raises(ValidationError):
        LabeledDataset(features=[[0.0, np.nan], [1.0, 1.0]], labels=[0, 1], n_classes=2)


def test_load_csv_small_file(tmp_path):
    path = tmp_path / "tiny.csv"
    path.write_text("x1,x2,label\n0.5,1.0,a\n1.5,-2.0,b\n3.0,0.0,a\n", encoding="utf-8")
    data = load_csv(str(path), "label")
    assert data.n_samples == 3
    assert data.n_features == 2
    assert data.labels.tolist() == [0, 1, 0]


def test_load_csv_missing_label_column(tmp_path):
    path = tmp_path / "nolabel.csv"
    path.write_text("x1,x2\n0.5,1.0\n", encoding="utf-8")
    with pytest.raises(SchemaError, match="species"):
        load_csv(str(path), "species")


def test_load_csv_reports_bad_cell_location(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x1,x2,label\n0.5,1.0,0\n0.5,oops,1\n", encoding="utf-8")
    with pytest.raises(CsvParseError) as info:
        load_csv(str(path), "label")
    assert info.value.row == 3
    assert info.value.column == "x2"


def test_load_csv_missing_label_value(tmp_path):
    path = tmp_path / "blank.csv"
    path.write_text("x1,label\n0.5,0\n0.7,\n", encoding="utf-8")
    with pytest.raises(CsvParseError) as info:
        load_csv(str(path), "label")
    assert info.value.row == 3


def test_load_csv_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_csv(str(tmp_path / "absent.csv"), "label")


def test_load_csv_iris_shaped(tmp_path):
    rng = np.random.default_rng(0)
    species = ["setosa", "versicolor", "virginica"]
    lines = ["sepal_length,sepal_width,petal_length,petal_width,species"]
    for row in range(150):
        values = ",".join(f"{v:.2f}" for v in rng.uniform(0.1, 7.9, size=4))
        lines.append(f"{values},{species[row % 3]}")
    path = tmp_path / "iris.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    data = load_csv(str(path), "species")
    assert data.n_samples == 150
    assert data.n_features == 4
    assert data.n_classes == 3


def test_partition_ten_participants():
    data = generate_synthetic(150, 4, 3, 2.0, seed=3)
    shards, test = partition(data, 10, 0.1, seed=4)
    assert test.n_samples == 15
    assert len(shards) == 10
    assert {shard.n_samples for shard in shards} <= {13, 14}
    assert sum(shard.n_samples for shard in shards) == 135


def test_partition_single_participant():
    data = generate_synthetic(100, 2, 2, 2.0, seed=3)
    shards, test = partition(data, 1, 0.1, seed=4)
    assert [shard.n_samples for shard in shards] == [90]
    assert test.n_samples == 10


def test_partition_preserves_samples():
    data = generate_synthetic(120, 3, 3, 2.0, seed=8)
    shards, test = partition(data, 5, 0.2, seed=9)
    parts = shards + [test]
    labels = np.concatenate([part.labels for part in parts])
    assert Counter(labels.tolist()) == Counter(data.labels.tolist())
    rows = np.vstack([part.features for part in parts])
    assert sorted(map(tuple, rows)) == sorted(map(tuple, data.features))


def test_partition_is_deterministic():
    data = generate_synthetic(120, 3, 3, 2.0, seed=8)
    first, _ = partition(data, 3, 0.2, seed=9)
    second, _ = partition(data, 3, 0.2, seed=9)
    assert all(np.array_equal(a.features, b.features) for a, b in zip(first, second))


def test_partition_too_few_samples():
    data = generate_synthetic(10, 2, 2, 2.0, seed=0)
    with pytest.raises(ParameterError):
        partition(data, 10, 0.1, seed=0)
    with pytest.raises(ParameterError):
        partition(data, 2, 1.0, seed=0)


def test_truthful_is_identity(blobs):
    assert apply_strategy(blobs, TRUTHFUL, seed=1) is blobs


@pytest.mark.parametrize("kind", [StrategyKind.noise, StrategyKind.removal, StrategyKind.label_flip])
def test_zero_degree_is_identity(blobs, kind):
    out = apply_strategy(blobs, InputStrategy(kind=kind, degree=0.0), seed=1)
    assert np.array_equal(out.features, blobs.features)
    assert np.array_equal(out.labels, blobs.labels)


def test_quit_gives_empty_dataset(blobs):
    out = apply_strategy(blobs, InputStrategy(kind=StrategyKind.quit), seed=1)
    assert out.is_empty
    assert out.n_features == blobs.n_features


def test_removal_drops_floor_fraction():
    data = generate_synthetic(100, 3, 2, 2.0, seed=2)
    out = apply_strategy(data, InputStrategy(kind=StrategyKind.removal, degree=0.3), seed=5)
    assert out.n_samples == 70
    original = set(map(tuple, data.features))
    assert all(tuple(row) in original for row in out.features)


def test_label_flip_two_classes():
    data = generate_synthetic(100, 3, 2, 2.0, seed=2)
    out = apply_strategy(data, InputStrategy(kind=StrategyKind.label_flip, degree=0.5), seed=5)
    assert np.count_nonzero(out.labels != data.labels) == 50
    assert np.array_equal(out.features, data.features)


def test_label_flip_always_changes_class():
    data = generate_synthetic(90, 3, 3, 2.0, seed=2)
    out = apply_strategy(data, InputStrategy(kind=StrategyKind.label_flip, degree=1.0), seed=5)
    assert np.all(out.labels != data.labels)
    assert out.labels.max() < 3


def test_noise_scales_with_feature_spread(blobs):
    out = apply_strategy(blobs, InputStrategy(kind=StrategyKind.noise, degree=0.5), seed=5)
    assert out.features.shape == blobs.features.shape
    assert np.array_equal(out.labels, blobs.labels)
    ratio = (out.features - blobs.features).std(axis=0) / blobs.features.std(axis=0)
    assert np.all(np.abs(ratio - 0.5) < 0.1)


def test_strategies_are_seeded(blobs):
    strategy = InputStrategy(kind=StrategyKind.label_flip, degree=0.3)
    a = apply_strategy(blobs, strategy, seed=42)
    b = apply_strategy(blobs, strategy, seed=42)
    assert np.array_equal(a.labels, b.labels)


def test_strategy_parsing():
    assert InputStrategy.parse("label_flip:0.5") == InputStrategy(kind=StrategyKind.label_flip, degree=0.5)
    assert InputStrategy.parse("quit").kind == StrategyKind.quit
    with pytest.raises(ValidationError):
        InputStrategy.parse("noise:1.5")
