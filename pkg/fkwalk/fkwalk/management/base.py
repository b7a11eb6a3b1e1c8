import logging
import os
import time
from typing import Any, Optional

from django.core.management.base import BaseCommand, CommandError, CommandParser

from fkwalk.fkwalk.config import RunConfig, load_run_config, write_run_record
from fkwalk.fkwalk.errors import FkwalkError
from fkwalk.fkwalk.estimator import FieldGrid
from fkwalk.fkwalk.fieldio import write_field_csv, write_pgm
from fkwalk.run_context import RunLoggingContext

# Exit code for failures that are not one of the solver's own errors
UNEXPECTED_FAILURE = 3


class SolverCommand(BaseCommand):
    """
    Base class of the solver commands.

    Commands that take a run configuration get the shared --config/--preset options and the
    flag overrides, and receive the resolved RunConfig in ``run``. Solver errors become
    CommandErrors carrying the error's exit code; anything else is logged and exits 3.
    """

    requires_system_checks: list = []
    uses_run_config = True
    default_preset: Optional[str] = None
    # section of the run configuration that --nx/--ny set
    grid_section = "grid"

    logger = logging.getLogger("SolverCommand")

    @property
    def command_name(self) -> str:
        return self.__module__.rsplit(".", 1)[-1]

    def add_arguments(self, parser: CommandParser) -> None:
        if self.uses_run_config:
            self.add_run_arguments(parser)
        self.add_command_arguments(parser)

    def add_run_arguments(self, parser: CommandParser) -> None:
        parser.add_argument("--config", help="YAML run configuration file.")
        parser.add_argument("--preset", default=self.default_preset, help="Named preset, e.g. benchmark.")
        parser.add_argument("--nx", type=int, help="Grid nodes along x.")
        parser.add_argument("--ny", type=int, help="Grid nodes along y.")
        parser.add_argument("--walks", type=int, help="Walks per grid node.")
        parser.add_argument("--dt", type=float, help="Time step in machine-time units.")
        parser.add_argument("--seed", type=int, help="Base seed of the walk streams.")
        parser.add_argument("--workers", type=int, help="Worker processes; 0 means one per CPU.")
        parser.add_argument("--alpha", type=float, help="Diffusion coefficient.")
        parser.add_argument("--omega-x", type=float, help="Drift along x.")
        parser.add_argument("--omega-y", type=float, help="Drift along y.")
        parser.add_argument("--sigma", type=float, help="Absorption coefficient.")
        parser.add_argument("--source", type=float, help="Constant source term.")
        parser.add_argument("--exit-mode", choices=["naive", "interp"], help="Exit detection mode.")
        parser.add_argument("--out", help="Output path prefix.")
        parser.add_argument("--range", help="Render range as lo:hi.")

    def add_command_arguments(self, parser: CommandParser) -> None:
        """Options specific to one command."""

    def handle(self, *args, **options):
        try:
            config = None
            if self.uses_run_config:
                config = load_run_config(
                    preset=options.get("preset"),
                    config_path=options.get("config"),
                    options=options,
                    grid_section=self.grid_section,
                )
            with RunLoggingContext(self.command_name, config.to_dict() if config else None):
                self.run(config, options)
        except CommandError:
            raise
        except FkwalkError as exc:
            self.logger.error(f"{self.command_name} failed: {exc}")
            raise CommandError(str(exc), returncode=exc.exit_code) from exc
        except Exception as exc:
            self.logger.exception(f"{self.command_name} failed unexpectedly")
            raise CommandError(f"Unexpected failure: {exc}", returncode=UNEXPECTED_FAILURE) from exc

    def run(self, config: Optional[RunConfig], options: dict[str, Any]) -> None:
        raise NotImplementedError

    @staticmethod
    def output_path(prefix: str, suffix: str) -> str:
        path = f"{prefix}{suffix}"
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        return path

    def write_field(self, field_grid: FieldGrid, prefix: str, image: bool, lo: float, hi: float) -> None:
        csv_path = self.output_path(prefix, ".csv")
        write_field_csv(field_grid, csv_path)
        self.logger.info(f"Field written to {csv_path}")
        if image:
            image_path = self.output_path(prefix, ".pgm")
            write_pgm(field_grid, image_path, lo, hi)
            self.logger.info(f"Image written to {image_path}")

    def write_record(self, config: RunConfig) -> None:
        write_run_record(config, self.output_path(config.output.prefix, "-run.yaml"))

    def write_summary(self, field_grid: FieldGrid, started: float) -> None:
        walks, censored = field_grid.totals()
        seconds = time.perf_counter() - started
        rate = walks / seconds if seconds > 0 else 0.0
        self.stdout.write(f"walks={walks} censored={censored} seconds={seconds:.3f} walks_per_second={rate:.1f}")
