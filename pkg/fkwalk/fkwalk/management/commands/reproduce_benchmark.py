import math
import time

from fkwalk.fkwalk.estimator import solve_field
from fkwalk.fkwalk.fdref import compare, rasterize, solve_fd
from fkwalk.fkwalk.management.base import SolverCommand

# Reference resolution the finite-difference field is refined to at least
MIN_FD_NODES = 200
MAX_ABS_BAND = 0.15
MEAN_ABS_BAND = 0.05


def node_matching_size(coarse: int, minimum: int = MIN_FD_NODES) -> tuple[int, int]:
    """Smallest fine node count >= minimum whose lattice contains the coarse one, and the stride."""
    stride = math.ceil((minimum - 1) / (coarse - 1))
    return (coarse - 1) * stride + 1, stride


class Command(SolverCommand):
    help = (
        "Reproduce the benchmark at desk scale: Monte Carlo field, finite-difference reference on a "
        "node-matching finer grid, signed error field and a pass/fail verdict."
    )

    default_preset = "benchmark"

    def run(self, config, options):
        started = time.perf_counter()
        mc = solve_field(
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
        mc_seconds = time.perf_counter() - started
        prefix = config.output.prefix
        lo, hi = config.output.range
        self.write_field(mc, prefix, config.output.image, lo, hi)

        fd_nx, stride_x = node_matching_size(config.grid.nx, max(MIN_FD_NODES, config.fd.nx))
        fd_ny, stride_y = node_matching_size(config.grid.ny, max(MIN_FD_NODES, config.fd.ny))
        if stride_x != stride_y:
            # both axes share one stride so the fine grid must refine them equally
            stride = max(stride_x, stride_y)
            fd_nx, fd_ny = (config.grid.nx - 1) * stride + 1, (config.grid.ny - 1) * stride + 1
        else:
            stride = stride_x
        self.logger.info(f"Finite-difference reference on {fd_nx}x{fd_ny} nodes, stride {stride}")
        system = rasterize(config.domain, fd_nx, fd_ny, config.fd.boundary_treatment)
        fd = solve_fd(system, config.params, tol=config.fd.tol, max_iter=config.fd.max_iter).downsample(stride)
        self.write_field(fd, f"{prefix}-fd", config.output.image, lo, hi)

        stats = compare(mc, fd)
        err_lo, err_hi = config.output.error_range
        self.write_field(stats.error, f"{prefix}-error", config.output.image, err_lo, err_hi)
        self.write_record(config)

        walks, censored = mc.totals()
        rate = walks / mc_seconds if mc_seconds > 0 else 0.0
        self.stdout.write(
            f"walks={walks} censored={censored} seconds={mc_seconds:.3f} walks_per_second={rate:.1f}"
        )
        self.stdout.write(stats.summary())
        passed = stats.max_abs <= MAX_ABS_BAND and stats.mean_abs <= MEAN_ABS_BAND
        if not passed:
            self.logger.warning(
                f"Benchmark outside the acceptance bands (max_abs <= {MAX_ABS_BAND}, mean_abs <= {MEAN_ABS_BAND})"
            )
        self.stdout.write(f"benchmark={'pass' if passed else 'fail'}")
