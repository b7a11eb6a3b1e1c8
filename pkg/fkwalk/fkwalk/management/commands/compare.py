from pathlib import Path

from fkwalk.fkwalk.config import parse_range
from fkwalk.fkwalk.fdref import compare
from fkwalk.fkwalk.fieldio import read_field_csv
from fkwalk.fkwalk.management.base import SolverCommand

DEFAULT_ERROR_RANGE = "-0.15:0.15"


class Command(SolverCommand):
    help = "Compare two field CSVs over the cells solved in both and write the signed error field."

    uses_run_config = False

    def add_command_arguments(self, parser):
        parser.add_argument("field_a", help="Field CSV.")
        parser.add_argument("field_b", help="Field CSV subtracted from field_a.")
        parser.add_argument("--out", help="Output prefix (default: field_a without its extension).")
        parser.add_argument("--range", default=DEFAULT_ERROR_RANGE, help="Error image range as lo:hi.")
        parser.add_argument("--no-image", action="store_true", help="Skip the error image.")

    def run(self, config, options):
        lo, hi = parse_range(options["range"])
        stats = compare(read_field_csv(options["field_a"]), read_field_csv(options["field_b"]))
        prefix = options.get("out") or str(Path(options["field_a"]).with_suffix(""))
        self.write_field(stats.error, f"{prefix}-error", not options["no_image"], lo, hi)
        self.logger.info(f"Compared {stats.n_compared} cells")
        self.stdout.write(stats.summary())
