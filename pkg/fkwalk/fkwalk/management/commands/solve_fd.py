import time

from fkwalk.fkwalk.fdref import rasterize, solve_fd
from fkwalk.fkwalk.management.base import SolverCommand


class Command(SolverCommand):
    help = "Solve the boundary value problem with the finite-difference reference solver."

    grid_section = "fd"

    def add_command_arguments(self, parser):
        parser.add_argument("--tol", type=float, help="Relative residual tolerance.")
        parser.add_argument("--max-iter", type=int, help="Iteration budget of the linear solver.")
        parser.add_argument(
            "--boundary-treatment", choices=["cut_cell", "staircase"], help="How curved boundaries are resolved."
        )

    def run(self, config, options):
        started = time.perf_counter()
        fd = config.fd
        system = rasterize(
            config.domain, fd.nx, fd.ny, options.get("boundary_treatment") or fd.boundary_treatment
        )
        field_grid = solve_fd(
            system,
            config.params,
            tol=options.get("tol") or fd.tol,
            max_iter=options.get("max_iter") or fd.max_iter,
        )
        lo, hi = config.output.range
        self.write_field(field_grid, config.output.prefix, config.output.image, lo, hi)
        self.write_record(config)
        seconds = time.perf_counter() - started
        self.stdout.write(
            f"unknowns={system.n_unknowns} residual={field_grid.residual:.3e} seconds={seconds:.3f}"
        )
