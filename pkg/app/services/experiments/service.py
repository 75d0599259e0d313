import json
import logging
import os
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from dotenv import dotenv_values
from pydantic import ValidationError

from app.exceptions import ConfigError
from app.middleware.logger.logging import file_logger
from app.services.datasets.model import InputStrategy, LabeledDataset
from app.services.datasets.service import generate_synthetic, load_csv, partition
from app.services.experiments.model import BENCH_EXACT_MAX_PARTICIPANTS, DatasetKind, ExperimentConfig
from app.services.game.model import CharacteristicTable, Coalition
from app.services.mechanism.model import AccuracySource, MechanismConfig, SimulationResult, ValidationRow
from app.services.mechanism.service import IncentiveMechanism, run_exact_vs_sampled, run_simulation
from utility.utils import current_utc_time, derive_seed

logger = logging.getLogger(__name__)

ROUNDS_COLUMNS = ["round", "participant", "v", "pi", "p", "P", "R", "eps", "core_accuracy", "u"]
VALIDATION_COLUMNS = ["m", "sigma2_error", "core_accuracy", "time_ms", "vcg_core_accuracy"]
SWEEP_COLUMNS = ["mode", "strategy", "degree", "mean_utility", "std_utility", "mean_global_accuracy"]
BENCH_COLUMNS = ["n", "mode", "coalitions_evaluated", "round_time_ms"]


def _first_error_key(error: ValidationError) -> Optional[str]:
    for detail in error.errors():
        if detail.get("loc"):
            return str(detail["loc"][0])
        # cross-field checks prefix their message with the key
        message = detail.get("msg", "")
        head = message.removeprefix("Value error, ").split(":", 1)[0]
        if head.isidentifier():
            return head
    return None


def load_experiment_config(path: str, overrides: Optional[Dict[str, str]] = None) -> Tuple[ExperimentConfig, str]:
    """Parse and validate a KEY=VALUE experiment file; returns the config and the raw text."""
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}", key="config")
    with open(path, "r", encoding="utf-8") as handle:
        raw_text = handle.read()

    values = {key.strip().lower(): value for key, value in dotenv_values(path).items() if value is not None}
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value

    try:
        config = ExperimentConfig(**values)
    except ValidationError as e:
        key = _first_error_key(e)
        detail = e.errors()[0].get("msg", str(e))
        raise ConfigError(f"invalid config key '{key}': {detail}" if key else f"invalid config: {detail}", key=key) from e

    _check_writable(config.out)
    return config, raw_text


def _check_writable(out: str) -> None:
    probe = os.path.abspath(out)
    while not os.path.exists(probe):
        parent = os.path.dirname(probe)
        if parent == probe:
            break
        probe = parent
    if not os.path.isdir(probe) or not os.access(probe, os.W_OK):
        raise ConfigError(f"output directory is not writable: {out}", key="out")


def prepare_data(
    cfg: ExperimentConfig, n: Optional[int] = None
) -> Tuple[Optional[List[LabeledDataset]], Optional[LabeledDataset]]:
    """Participant shards and the server test set; nothing to load under the analytic oracle."""
    if cfg.accuracy_source == AccuracySource.oracle:
        return None, None
    n = n or cfg.n
    if cfg.dataset == DatasetKind.csv:
        data = load_csv(cfg.csv_path, cfg.label_column)
    else:
        data = generate_synthetic(
            cfg.n_samples, cfg.n_features, cfg.n_classes, cfg.class_separation, derive_seed(cfg.seed, "dataset")
        )
    return partition(data, n, cfg.test_fraction, derive_seed(cfg.seed, "dataset", "partition"))


def _mechanism_config(cfg: ExperimentConfig, test: Optional[LabeledDataset], **updates) -> MechanismConfig:
    if test is not None:
        updates.setdefault("arch", cfg.model_arch(test.n_features, test.n_classes))
    return cfg.mechanism_config(**updates)


def rounds_frame(result: SimulationResult) -> pd.DataFrame:
    rows = []
    for report in result.reports:
        for i in range(report.n):
            rows.append(
                {
                    "round": report.round,
                    "participant": i,
                    "v": report.valuations[i],
                    "pi": report.surplus[i],
                    "p": report.payments[i],
                    "P": report.accumulated_payments[i],
                    "R": report.reputations[i],
                    "eps": report.eps,
                    "core_accuracy": report.core_accuracy,
                    "u": report.utilities[i],
                }
            )
    return pd.DataFrame(rows, columns=ROUNDS_COLUMNS)


def _write_csv(frame: pd.DataFrame, path: str) -> None:
    frame.to_csv(path, index=False, float_format="%.12g", lineterminator="\n")


def simulate(cfg: ExperimentConfig, raw_text: str) -> Tuple[SimulationResult, pd.DataFrame]:
    shards, test = prepare_data(cfg)
    mechanism_cfg = _mechanism_config(cfg, test)
    result = run_simulation(mechanism_cfg, cfg.strategy_profile(), shards, test)

    os.makedirs(cfg.out, exist_ok=True)
    frame = rounds_frame(result)
    _write_csv(frame, os.path.join(cfg.out, "rounds.csv"))

    summary = {
        "config": raw_text,
        "created_at": current_utc_time().isoformat(),
        "rounds": len(result.reports),
        "accumulated_payments": result.accumulated_payments.tolist(),
        "accumulated_utility": result.accumulated_utility.tolist(),
        "final_reputation": result.reputation.R.tolist(),
        "global_accuracy": [report.global_accuracy for report in result.reports],
        "coalitions_evaluated": [report.coalition_count for report in result.reports],
        "sigma2": [report.sigma2 for report in result.reports],
    }
    with open(os.path.join(cfg.out, "summary.json"), "w", encoding="utf-8") as handle:
        json.dump(summary, handle, indent=2)

    for report in result.reports:
        if cfg.checkpoints and report.global_params is not None:
            with open(os.path.join(cfg.out, f"checkpoint_round{report.round:03d}.json"), "w", encoding="utf-8") as handle:
                handle.write(report.global_params.to_json())
        if cfg.export_tables:
            table = CharacteristicTable(report.n)
            for bits, w in report.w.items():
                table.set(Coalition(bits, report.n), w, report.accuracies.get(bits))
            table.to_csv(os.path.join(cfg.out, f"table_round{report.round:03d}.csv"))

    file_logger.info(f"simulation written to {cfg.out}", extra={"ctx": "OUTPUT"})
    return result, frame


def validation_frame(rows: Sequence[ValidationRow]) -> pd.DataFrame:
    """Seed-averaged rows, ascending in m."""
    per_seed = pd.DataFrame(
        [
            {
                "m": row.m,
                "sigma2_error": row.sigma2_error,
                "core_accuracy": row.core_accuracy,
                "time_ms": row.time_ms,
                "vcg_core_accuracy": row.vcg_core_accuracy,
            }
            for row in rows
        ],
        columns=VALIDATION_COLUMNS,
    )
    return per_seed.groupby("m", sort=True, as_index=False).mean()[VALIDATION_COLUMNS]


def validate(cfg: ExperimentConfig) -> pd.DataFrame:
    shards, test = prepare_data(cfg)
    mechanism_cfg = _mechanism_config(cfg, test)
    seeds = [derive_seed(cfg.seed, "validation", s) for s in range(cfg.validation_seeds)]
    rows = run_exact_vs_sampled(mechanism_cfg, cfg.resolved_m_grid(cfg.n), seeds, shards, test)
    frame = validation_frame(rows)

    os.makedirs(cfg.out, exist_ok=True)
    _write_csv(frame, os.path.join(cfg.out, "validation.csv"))
    return frame


def sweep(cfg: ExperimentConfig) -> pd.DataFrame:
    """
    One deviating participant, everyone else truthful. Every cell reuses the
    same repeat seeds so cells are paired.
    """
    shards, test = prepare_data(cfg)
    seeds = [derive_seed(cfg.seed, "repeat", r) for r in range(cfg.repeats)]
    rows = []
    for mode in cfg.sweep_modes:
        for kind in cfg.sweep_strategies:
            for degree in cfg.sweep_degrees:
                profile = cfg.strategy_profile(overrides={cfg.deviator: InputStrategy(kind=kind, degree=degree)})
                utilities, accuracies = [], []
                for seed in seeds:
                    mechanism_cfg = _mechanism_config(cfg, test, mode=mode, seed=seed)
                    result = run_simulation(mechanism_cfg, profile, shards, test)
                    utilities.append(result.accumulated_utility[cfg.deviator])
                    accuracies.append(result.final_global_accuracy)
                rows.append(
                    {
                        "mode": mode.value,
                        "strategy": kind.value,
                        "degree": degree,
                        "mean_utility": float(np.mean(utilities)),
                        "std_utility": float(np.std(utilities)),
                        "mean_global_accuracy": float(np.mean(accuracies)),
                    }
                )
                logger.debug("sweep cell %s/%s/%.2f done", mode.value, kind.value, degree)
    frame = pd.DataFrame(rows, columns=SWEEP_COLUMNS)

    os.makedirs(cfg.out, exist_ok=True)
    _write_csv(frame, os.path.join(cfg.out, "sweep.csv"))
    return frame


def bench(cfg: ExperimentConfig) -> pd.DataFrame:
    rows = []
    for n in sorted(set(cfg.bench_n)):
        shards, test = prepare_data(cfg, n)
        for mode in cfg.bench_modes:
            if mode.uses_all_coalitions and n > BENCH_EXACT_MAX_PARTICIPANTS:
                logger.warning("skipping %s at n=%d: exact rows are capped at n=%d", mode.value, n, BENCH_EXACT_MAX_PARTICIPANTS)
                continue
            mechanism_cfg = _mechanism_config(cfg, test, n=n, mode=mode, rounds=1)
            mechanism = IncentiveMechanism(mechanism_cfg, cfg.strategy_profile(n, overrides={}), shards, test)
            _, report = mechanism.run_round(mechanism.initial_state(), 1)
            rows.append(
                {
                    "n": n,
                    "mode": mode.value,
                    "coalitions_evaluated": report.coalition_count,
                    "round_time_ms": 1000.0 * report.wall_times.total,
                }
            )
    frame = pd.DataFrame(rows, columns=BENCH_COLUMNS)

    os.makedirs(cfg.out, exist_ok=True)
    _write_csv(frame, os.path.join(cfg.out, "bench.csv"))
    return frame
