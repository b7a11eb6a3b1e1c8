import time

from fkwalk.fkwalk.estimator import solve_field
from fkwalk.fkwalk.geometry import read_lookup
from fkwalk.fkwalk.management.base import SolverCommand
from fkwalk.fkwalk.sde import LookupBoundary


class Command(SolverCommand):
    help = (
        "Solve on a grid by Monte Carlo with a lookup table as the only boundary oracle: the table's "
        "characteristic flag halts a walk and its decoded value is the boundary value."
    )

    def add_command_arguments(self, parser):
        parser.add_argument("--lut", required=True, help="Lookup table written by make_lut.")

    def run(self, config, options):
        oracle = read_lookup(options["lut"], extent=config.domain.outer_half_width)
        self.logger.info(f"Loaded {oracle.resolution}x{oracle.resolution} lookup table from {options['lut']}")
        started = time.perf_counter()
        field_grid = solve_field(
            config.domain,
            config.params,
            config.machine,
            config.walk,
            config.grid,
            config.n_walks,
            config.seed,
            workers=config.workers,
            noise_config=config.noise,
            boundary=LookupBoundary(oracle, config.domain.outer_boundary_value),
        )
        lo, hi = config.output.range
        self.write_field(field_grid, config.output.prefix, config.output.image, lo, hi)
        self.write_record(config)
        self.write_summary(field_grid, started)
