import logging
import os
from typing import IO, Optional

from .experiments import TABLES, reproduce, run_config, scan_scale, with_overrides
from .models import ExperimentConfig, RunSummary, SuiteSummary, load_config
from .simulation import SimConfig

logger = logging.getLogger(__name__)

DEFAULT_OUT = "out"
RUN_FORMAT = "{name: <28} {mode: <13} {scale: >12} {J: >12} {path: >10}  {reason}\n"
CHECK_FORMAT = "{name: <28} {value: >12}  {status}\n"


def _cell(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.6g}"


class CLI:
    def __init__(
        self,
        output: IO,
        out: Optional[str] = None,
        dt: Optional[float] = None,
        tmax: Optional[float] = None,
        seed: Optional[int] = None,
        parallel: int = 1,
    ) -> None:
        self.output = output
        self.out = out
        self.dt = dt
        self.tmax = tmax
        self.seed = seed
        self.workers = max(1, parallel)

    def run(self, command: str, **kwargs) -> bool:
        if command is None:
            raise ValueError("No command specified")
        func = getattr(self, command, None)
        if command.startswith("_") or not callable(func):
            raise ValueError(f"Invalid command: {command}")
        return func(**kwargs)

    def _simulation(self, base: SimConfig) -> SimConfig:
        return with_overrides(base, dt=self.dt, t_max=self.tmax)

    def _directory(self, config: Optional[ExperimentConfig] = None, default: str = DEFAULT_OUT) -> str:
        if self.out is not None:
            return self.out
        if config is not None and config.output is not None:
            return config.output
        return default

    def _load(self, config: str) -> ExperimentConfig:
        loaded = load_config(config)
        if self.seed is not None:
            loaded = loaded.model_copy(update={"seed": self.seed})
        return loaded

    def _render(self, summary: SuiteSummary, directory: str) -> bool:
        for run in summary.runs:
            self._render_run(run)
        for check in summary.checks:
            status = {True: "ok", False: "FAILED", None: "reported"}[check.passed]
            self.output.write(CHECK_FORMAT.format(name=check.name, value=_cell(check.value), status=status))
        failed = [c for c in summary.paper_comparisons if c.failed]
        for comparison in failed:
            self.output.write(
                f"{comparison.table} {comparison.row} {comparison.quantity}: "
                f"paper {comparison.paper:g}, computed {_cell(comparison.computed)}\n"
            )
        self.output.write(f"Wrote {summary.name} to {directory}\n")
        return summary.ok

    def _render_run(self, run: RunSummary) -> None:
        self.output.write(
            RUN_FORMAT.format(
                name=run.name,
                mode=run.mode,
                scale=_cell(run.final_scale),
                J=_cell(run.J),
                path=_cell(run.total_path),
                reason=run.termination_reason,
            )
        )

    def run_config(self, config: str) -> bool:
        loaded = self._load(config)
        directory = self._directory(loaded, os.path.join(DEFAULT_OUT, loaded.name))
        summary = run_config(loaded, directory, self._simulation(loaded.simulation), self.workers)
        return self._render(summary, directory)

    def scan_scale(self, config: str) -> bool:
        loaded = self._load(config)
        directory = self._directory(loaded, os.path.join(DEFAULT_OUT, f"{loaded.name}-scan"))
        summary = scan_scale(loaded, directory, self._simulation(loaded.simulation), self.workers)
        return self._render(summary, directory)

    def reproduce(self, table: str) -> bool:
        if table not in TABLES:
            raise ValueError(f"Invalid table: {table}")
        directory = self._directory(default=os.path.join(DEFAULT_OUT, table))
        summary = reproduce(
            table,
            directory,
            sim=self._simulation(SimConfig()),
            workers=self.workers,
            seed=0 if self.seed is None else self.seed,
        )
        return self._render(summary, directory)
