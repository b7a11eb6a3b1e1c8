from pathlib import Path

from fkwalk.fkwalk.config import parse_range
from fkwalk.fkwalk.fieldio import read_field_csv, write_pgm
from fkwalk.fkwalk.management.base import SolverCommand


class Command(SolverCommand):
    help = "Render a field CSV as an 8-bit binary graymap (PGM)."

    uses_run_config = False

    def add_command_arguments(self, parser):
        parser.add_argument("field", help="Field CSV.")
        parser.add_argument("--out", help="Image path (default: the CSV path with a .pgm extension).")
        parser.add_argument("--range", default="-1:1", help="Value range mapped to black..white, as lo:hi.")

    def run(self, config, options):
        lo, hi = parse_range(options["range"])
        field_grid = read_field_csv(options["field"])
        path = options.get("out") or str(Path(options["field"]).with_suffix(".pgm"))
        write_pgm(field_grid, self.output_path(path, ""), lo, hi)
        self.stdout.write(f"image={path} width={field_grid.nx} height={field_grid.ny}")
