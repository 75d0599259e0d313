import os
from typing import List

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from app.services.mechanism.model import SimulationResult  # noqa: E402

# fixed ids and no timestamp, so reruns give identical SVG bytes
matplotlib.rcParams["svg.hashsalt"] = "fedcore"
SVG_METADATA = {"Date": None}


def _save(fig, path: str) -> str:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=SVG_METADATA)
    plt.close(fig)
    return path


def plot_simulation(result: SimulationResult, out: str) -> List[str]:
    rounds = [report.round for report in result.reports]
    paths = []

    fig, ax = plt.subplots(figsize=(6, 4))
    cumulative = pd.DataFrame([report.utilities for report in result.reports], index=rounds).cumsum()
    for participant in cumulative.columns:
        ax.plot(rounds, cumulative[participant], marker="o", label=f"participant {participant}")
    ax.set_xlabel("round")
    ax.set_ylabel("accumulated utility")
    ax.legend(fontsize="small")
    paths.append(_save(fig, os.path.join(out, "utility.svg")))

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(rounds, [report.global_accuracy for report in result.reports], marker="o")
    ax.set_xlabel("round")
    ax.set_ylabel("global model accuracy")
    paths.append(_save(fig, os.path.join(out, "accuracy.svg")))
    return paths


def plot_validation(frame: pd.DataFrame, out: str) -> List[str]:
    paths = []
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(frame["m"], frame["sigma2_error"], marker="o")
    ax.set_xlabel("sampled coalitions m")
    ax.set_ylabel("sigma^2 error")
    paths.append(_save(fig, os.path.join(out, "validation_sigma2.svg")))

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(frame["m"], frame["core_accuracy"], marker="o", label="core-selecting (sampled)")
    ax.plot(frame["m"], frame["vcg_core_accuracy"], linestyle="--", label="VCG")
    ax.set_xlabel("sampled coalitions m")
    ax.set_ylabel("core accuracy")
    ax.set_ylim(0.0, 1.05)
    ax.legend(fontsize="small")
    paths.append(_save(fig, os.path.join(out, "validation_core_accuracy.svg")))
    return paths


def plot_sweep(frame: pd.DataFrame, out: str) -> List[str]:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for (mode, strategy), cell in frame.groupby(["mode", "strategy"], sort=True):
        ax.plot(cell["degree"], cell["mean_utility"], marker="o", label=f"{mode} / {strategy}")
    ax.set_xlabel("degree of false data")
    ax.set_ylabel("mean accumulated utility of the deviator")
    ax.legend(fontsize="x-small")
    return [_save(fig, os.path.join(out, "sweep.svg"))]


def plot_bench(frame: pd.DataFrame, out: str) -> List[str]:
    fig, ax = plt.subplots(figsize=(6, 4))
    for mode, cell in frame.groupby("mode", sort=True):
        ax.plot(cell["n"], cell["round_time_ms"], marker="o", label=mode)
    ax.set_yscale("log")
    ax.set_xlabel("participants n")
    ax.set_ylabel("round time (ms)")
    ax.legend(fontsize="small")
    return [_save(fig, os.path.join(out, "bench.svg"))]
