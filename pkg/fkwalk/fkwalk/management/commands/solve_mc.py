import time

from fkwalk.fkwalk.estimator import solve_field
from fkwalk.fkwalk.management.base import SolverCommand


class Command(SolverCommand):
    help = "Solve the boundary value problem on a grid by Monte Carlo random walks."

    def run(self, config, options):
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
        )
        lo, hi = config.output.range
        self.write_field(field_grid, config.output.prefix, config.output.image, lo, hi)
        self.write_record(config)
        self.write_summary(field_grid, started)
