import json
from pathlib import Path

import pandas as pd
import pytest

from app.exceptions import ConfigError
from app.middleware.error_handler.error_handling import EXIT_CONFIG_ERROR, EXIT_OK, EXIT_RUNTIME_ERROR
from app.middleware.logger.RunContextManager import RunContextManager
from app.services.datasets.model import InputStrategy, StrategyKind
from app.services.experiments.route import build_parser, dispatch
from app.services.experiments.service import (
    BENCH_COLUMNS,
    ROUNDS_COLUMNS,
    SWEEP_COLUMNS,
    VALIDATION_COLUMNS,
    load_experiment_config,
)
from app.services.mechanism.model import MechanismMode
from main import main

EXAMPLE_CONFIGS = Path(__file__).resolve().parents[1] / "configs" / "examples"


@pytest.fixture
def oracle_config(write_config, tmp_path):
    """Oracle-backed config writer with outputs under tmp_path/out and plots off by default."""

    def _write(**values):
        fields = dict(accuracy_source="oracle", out=str(tmp_path / "out"), plots="off")
        fields.update(values)
        return write_config(**fields)

    return _write


def test_config_parsing(oracle_config):
    path = oracle_config(n=4, strategies="0:label_flip:0.5;2:quit", k="2", sweep_degrees="0, 0.5", m_grid="10,ALL")
    cfg, raw = load_experiment_config(path)
    assert cfg.n == 4
    assert cfg.strategies == {0: InputStrategy(kind=StrategyKind.label_flip, degree=0.5), 2: InputStrategy(kind=StrategyKind.quit)}
    assert cfg.strategy_profile()[1].kind == StrategyKind.truthful
    assert cfg.sweep_degrees == [0.0, 0.5]
    assert cfg.resolved_m_grid(4) == [10, 15]
    assert cfg.plots is False
    assert "STRATEGIES=0:label_flip:0.5;2:quit" in raw
    assert cfg.mechanism_config().preferences == [2.0] * 4


def test_overrides_replace_file_values(oracle_config, tmp_path):
    cfg, _ = load_experiment_config(oracle_config(n=3, seed=1), {"seed": "5", "out": str(tmp_path / "other"), "plots": None})
    assert cfg.seed == 5
    assert cfg.out == str(tmp_path / "other")


@pytest.mark.parametrize(
    "values, key",
    [
        (dict(n=4, delta=1.5), "delta"),
        (dict(n=4, bogus=1), "bogus"),
        (dict(n=4, strategies="5:quit"), "strategies"),
        (dict(n=4, strategies="1:quit;1:noise:0.2"), "strategies"),
        (dict(n=4, model="mlp"), "hidden"),
        (dict(n=4, dataset="csv"), "csv_path"),
        (dict(n=4, plots="maybe"), "plots"),
        (dict(n=4, k="1,2"), "k"),
    ],
)
def test_bad_configs_name_the_key(oracle_config, values, key):
    with pytest.raises(ConfigError) as info:
        load_experiment_config(oracle_config(**values))
    assert info.value.key == key
    assert key in str(info.value)


def test_mode_lists_split_on_commas(oracle_config):
    cfg, _ = load_experiment_config(oracle_config(n=4, bench_modes="exact, vcg_only", sweep_modes="classical"))
    assert cfg.bench_modes == [MechanismMode.exact, MechanismMode.vcg_only]
    assert cfg.sweep_modes == [MechanismMode.classical]


@pytest.mark.parametrize("name", ["simulate", "validate", "sweep", "bench"])
def test_shipped_example_configs_load(name, tmp_path):
    path = EXAMPLE_CONFIGS / f"{name}.env"
    cfg, raw = load_experiment_config(str(path), {"out": str(tmp_path / name)})
    assert raw == path.read_text(encoding="utf-8")
    assert cfg.out == str(tmp_path / name)


def test_iris_example_needs_a_user_supplied_csv(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    path = str(EXAMPLE_CONFIGS / "iris.env")
    overrides = {"out": str(tmp_path / "iris")}
    with pytest.raises(ConfigError) as info:
        load_experiment_config(path, overrides)
    assert info.value.key == "csv_path"

    (tmp_path / "data").mkdir()
    (tmp_path / "data" / "iris.csv").write_text(
        "sepal_length,sepal_width,petal_length,petal_width,species\n"
        "5.1,3.5,1.4,0.2,setosa\n"
        "7.0,3.2,4.7,1.4,versicolor\n"
        "6.3,3.3,6.0,2.5,virginica\n",
        encoding="utf-8",
    )
    cfg, _ = load_experiment_config(path, overrides)
    assert cfg.csv_path == "data/iris.csv"
    assert cfg.label_column == "species"


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_experiment_config(str(tmp_path / "absent.env"))


def test_parser_requires_a_subcommand_and_config():
    parser = build_parser()
    with pytest.raises(SystemExit):
        parser.parse_args([])
    with pytest.raises(SystemExit):
        parser.parse_args(["simulate"])
    args = parser.parse_args(["sweep", "--config", "x.env", "--seed", "4", "--plots", "on"])
    assert (args.command, args.seed, args.plots) == ("sweep", 4, "on")


def test_simulate_writes_rounds_and_summary(oracle_config, tmp_path):
    path = oracle_config(n=4, rounds=2, mode="exact")
    assert dispatch(["simulate", "--config", path]) == EXIT_OK
    out = tmp_path / "out"
    frame = pd.read_csv(out / "rounds.csv")
    assert list(frame.columns) == ROUNDS_COLUMNS
    assert len(frame) == 8
    assert frame["core_accuracy"].eq(1.0).all()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config"] == (tmp_path / "experiment.env").read_text()
    assert summary["coalitions_evaluated"] == [15, 15]
    assert not list(out.glob("*.svg"))


def test_simulate_bad_delta_exits_with_config_error(oracle_config, tmp_path, capsys):
    path = oracle_config(n=4, delta=1.5)
    assert dispatch(["simulate", "--config", path]) == EXIT_CONFIG_ERROR
    assert "delta" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


@pytest.mark.parametrize("values", [dict(n=3), dict(n=3, delta=1.5)], ids=["ok", "config-error"])
def test_run_context_is_cleared_after_a_command(oracle_config, values):
    dispatch(["simulate", "--config", oracle_config(**values)])
    assert RunContextManager.get_run_id() == ""
    assert RunContextManager.get_command() == ""
    assert RunContextManager.get_round() is None


def test_simulate_reruns_are_byte_identical(write_config, tmp_path):
    path = write_config(n=4, rounds=2, n_samples=200, n_features=3, n_classes=2, seed=9, plots="off")
    first, second = tmp_path / "first", tmp_path / "second"
    assert main(["simulate", "--config", path, "--out", str(first)]) == EXIT_OK
    assert main(["simulate", "--config", path, "--out", str(second)]) == EXIT_OK
    assert (first / "rounds.csv").read_bytes() == (second / "rounds.csv").read_bytes()


def test_simulate_optional_artifacts(write_config, tmp_path):
    path = write_config(
        n=3, rounds=2, n_samples=150, n_features=2, n_classes=2, checkpoints="on", export_tables="on", plots="on"
    )
    out = tmp_path / "artifacts"
    assert dispatch(["simulate", "--config", path, "--out", str(out)]) == EXIT_OK
    assert (out / "checkpoint_round001.json").exists()
    table = pd.read_csv(out / "table_round002.csv")
    assert list(table.columns) == ["coalition_bitmask", "size", "accuracy", "w"]
    for name in ("utility.svg", "accuracy.svg"):
        assert (out / name).read_text().lstrip().startswith("<?xml")


def test_validate_rows(oracle_config, tmp_path):
    path = oracle_config(n=6, m_grid="10,30,all", validation_seeds=3)
    assert dispatch(["validate", "--config", path, "--plots", "on"]) == EXIT_OK
    frame = pd.read_csv(tmp_path / "out" / "validation.csv")
    assert list(frame.columns) == VALIDATION_COLUMNS
    assert frame["m"].tolist() == [10, 30, 63]
    assert frame["sigma2_error"].iloc[-1] <= 1e-6
    assert frame["core_accuracy"].iloc[-1] == 1.0
    assert (tmp_path / "out" / "validation_sigma2.svg").exists()


def test_validate_beyond_cap_is_a_runtime_error(oracle_config, capsys):
    assert dispatch(["validate", "--config", oracle_config(n=13)]) == EXIT_RUNTIME_ERROR
    assert "capped" in capsys.readouterr().err


def test_sweep_rows_and_identity_cells(oracle_config, tmp_path):
    path = oracle_config(
        n=3, rounds=2, sweep_modes="vcg_only,exact,sampled", sweep_strategies="label_flip,removal", sweep_degrees="0,1", repeats=2
    )
    assert dispatch(["sweep", "--config", path]) == EXIT_OK
    frame = pd.read_csv(tmp_path / "out" / "sweep.csv")
    assert list(frame.columns) == SWEEP_COLUMNS
    assert len(frame) == 3 * 2 * 2
    for mode in ("vcg_only", "exact", "sampled"):
        cells = frame[frame["mode"] == mode]
        baseline = cells[cells["degree"] == 0.0]["mean_utility"]
        assert baseline.max() - baseline.min() <= 1e-9
        flipped = cells[(cells["strategy"] == "label_flip") & (cells["degree"] == 1.0)]["mean_utility"].iloc[0]
        assert flipped <= baseline.iloc[0]


def test_bench_rows(oracle_config, tmp_path):
    path = oracle_config(n=3, bench_n="4,3", bench_modes="exact,sampled,vcg_only")
    assert dispatch(["bench", "--config", path, "--plots", "on"]) == EXIT_OK
    frame = pd.read_csv(tmp_path / "out" / "bench.csv")
    assert list(frame.columns) == BENCH_COLUMNS
    assert frame["n"].tolist() == [3, 3, 3, 4, 4, 4]
    exact = frame[frame["mode"] == MechanismMode.exact.value]
    assert exact["coalitions_evaluated"].tolist() == [7, 15]
    vcg_only = frame[frame["mode"] == MechanismMode.vcg_only.value]
    assert vcg_only["coalitions_evaluated"].tolist() == [4, 5]
    assert (tmp_path / "out" / "bench.svg").exists()
