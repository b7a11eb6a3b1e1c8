import csv
import math

from fkwalk.fkwalk.errors import ConfigurationError
from fkwalk.fkwalk.geometry import Point2
from fkwalk.fkwalk.management.base import SolverCommand
from fkwalk.fkwalk.sde import exit_time_study

CSV_FIELDS = ["dt", "mean_tau_naive", "mean_tau_interp", "stderr", "stderr_interp", "n_pairs"]


def _numbers(text: str, where: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigurationError(f"{where} must be a comma-separated list of numbers, got {text!r}")


class Command(SolverCommand):
    help = "Mean exit time under naive and interpolated exit detection for a decreasing list of time steps."

    def add_command_arguments(self, parser):
        parser.add_argument("--dt-list", help="Comma-separated, strictly decreasing time steps.")
        parser.add_argument("--start", help="Start point as x,y.")

    def run(self, config, options):
        study = config.study
        dt_list = _numbers(options["dt_list"], "--dt-list") if options.get("dt_list") else list(study.dt_list)
        if len(dt_list) < 2:
            raise ConfigurationError(f"The bias study needs at least two time steps, got {len(dt_list)}")
        start = study.start
        if options.get("start"):
            coordinates = _numbers(options["start"], "--start")
            if len(coordinates) != 2:
                raise ConfigurationError(f"--start needs x,y, got {options['start']!r}")
            start = Point2(*coordinates)
        n_walks = options.get("walks") or study.walks

        rows = exit_time_study(
            config.domain,
            config.params,
            config.machine,
            start,
            dt_list,
            n_walks,
            config.seed,
            max_steps=config.walk.max_steps,
            noise_config=config.noise,
        )

        path = self.output_path(config.output.prefix, "-bias.csv")
        with open(path, "w", newline="", encoding="utf-8") as csvfile:
            writer = csv.writer(csvfile, lineterminator="\n")
            writer.writerow(CSV_FIELDS)
            for row in rows:
                writer.writerow(
                    [
                        "%.12g" % row.dt,
                        "%.12g" % row.mean_tau_naive,
                        "%.12g" % row.mean_tau_interpolated,
                        "%.12g" % row.stderr,
                        "%.12g" % row.stderr_interpolated,
                        row.n_pairs,
                    ]
                )
        self.write_record(config)
        self.logger.info(f"Bias study written to {path}")

        ordered = all(row.mean_tau_naive >= row.mean_tau_interpolated for row in rows)
        # smaller steps must not lengthen the naive exit time beyond the noise
        monotone = all(
            finer.mean_tau_naive <= coarser.mean_tau_naive + 2.0 * math.hypot(finer.stderr, coarser.stderr)
            for coarser, finer in zip(rows, rows[1:])
        )
        self.stdout.write(
            f"rows={len(rows)} naive_above_interp={'pass' if ordered else 'fail'} "
            f"naive_monotone={'pass' if monotone else 'fail'}"
        )
