import uuid
from typing import Dict, Optional

from app.middleware.error_handler.error_handling import EXIT_OK, handle_command_errors
from app.middleware.logger.log_execution_time import log_execution_time
from app.middleware.logger.logging import logger
from app.middleware.logger.RunContextManager import RunContextManager
from app.services.experiments import plots
from app.services.experiments.service import bench, load_experiment_config, simulate, sweep, validate


class ExperimentController:
    def uuid_generator(self) -> str:
        return str(uuid.uuid4())

    def _load(self, command: str, config_path: str, out: Optional[str], seed: Optional[int], plots_flag: Optional[str]):
        RunContextManager.set_run_id(self.uuid_generator())
        RunContextManager.set_command(command)
        overrides: Dict[str, str] = {"out": out, "seed": None if seed is None else str(seed), "plots": plots_flag}
        cfg, raw_text = load_experiment_config(config_path, overrides)
        logger.info("%s: run %s, output in %s", command, RunContextManager.get_run_id(), cfg.out)
        return cfg, raw_text

    @handle_command_errors
    @log_execution_time
    def cmd_simulate(self, config_path: str, out: Optional[str] = None, seed: Optional[int] = None, plots_flag: Optional[str] = None) -> int:
        cfg, raw_text = self._load("simulate", config_path, out, seed, plots_flag)
        result, _ = simulate(cfg, raw_text)
        if cfg.plots:
            plots.plot_simulation(result, cfg.out)
        return EXIT_OK

    @handle_command_errors
    @log_execution_time
    def cmd_validate(self, config_path: str, out: Optional[str] = None, seed: Optional[int] = None, plots_flag: Optional[str] = None) -> int:
        cfg, _ = self._load("validate", config_path, out, seed, plots_flag)
        frame = validate(cfg)
        if cfg.plots:
            plots.plot_validation(frame, cfg.out)
        return EXIT_OK

    @handle_command_errors
    @log_execution_time
    def cmd_sweep(self, config_path: str, out: Optional[str] = None, seed: Optional[int] = None, plots_flag: Optional[str] = None) -> int:
        cfg, _ = self._load("sweep", config_path, out, seed, plots_flag)
        frame = sweep(cfg)
        if cfg.plots:
            plots.plot_sweep(frame, cfg.out)
        return EXIT_OK

    @handle_command_errors
    @log_execution_time
    def cmd_bench(self, config_path: str, out: Optional[str] = None, seed: Optional[int] = None, plots_flag: Optional[str] = None) -> int:
        cfg, _ = self._load("bench", config_path, out, seed, plots_flag)
        frame = bench(cfg)
        if cfg.plots:
            plots.plot_bench(frame, cfg.out)
        return EXIT_OK
