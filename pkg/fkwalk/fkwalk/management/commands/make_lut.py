from fkwalk.fkwalk.geometry import CHI_FLAG, build_lookup, write_lookup
from fkwalk.fkwalk.management.base import SolverCommand


class Command(SolverCommand):
    help = "Write the lookup table (characteristic flag and quantized boundary value per cell) of a domain."

    def add_command_arguments(self, parser):
        parser.add_argument("--resolution", type=int, help="Cells per side, a power of two in [16, 4096].")
        parser.add_argument("--lut-out", help="Table path (default <prefix>.lut).")

    def run(self, config, options):
        resolution = options.get("resolution") or config.lut_resolution
        oracle = build_lookup(config.domain, resolution=resolution)
        path = options.get("lut_out") or self.output_path(config.output.prefix, ".lut")
        size = write_lookup(oracle, path)
        halt_cells = int((oracle.words & CHI_FLAG).astype(bool).sum())
        self.logger.info(f"Lookup table written to {path}")
        self.stdout.write(f"bytes={size} resolution={resolution} halt_cells={halt_cells}")
