"""
Field files: the node CSV shared by the Monte Carlo and finite-difference solvers, and 8-bit
binary graymap (PGM, P5) renderings of a field.
"""

import csv
import logging
import math
import re
from pathlib import Path

import numpy as np

from fkwalk.fkwalk.errors import FileFormatError
from fkwalk.fkwalk.estimator import CellClass, FieldGrid, GridSpec

logger = logging.getLogger(__name__)

CSV_FIELDS = ["x", "y", "u", "stderr", "n", "flag"]
FLAGS = {cell.flag: cell for cell in CellClass}
NUMBER_FORMAT = "%.12g"
COORDINATE_TOLERANCE = 1e-9
PGM_HEADER = re.compile(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s")


def _number(value: float) -> str:
    return "nan" if math.isnan(value) else NUMBER_FORMAT % value


def write_field_csv(field_grid: FieldGrid, path: str | Path) -> None:
    """One row per node, row-major with rows in ascending y."""
    xs, ys = field_grid.coordinates()
    with open(path, "w", newline="", encoding="utf-8") as csvfile:
        writer = csv.writer(csvfile, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for iy in range(field_grid.ny):
            for ix in range(field_grid.nx):
                writer.writerow(
                    [
                        _number(xs[iy, ix]),
                        _number(ys[iy, ix]),
                        _number(field_grid.mean[iy, ix]),
                        _number(field_grid.stderr[iy, ix]),
                        int(field_grid.n[iy, ix]),
                        CellClass(int(field_grid.cls[iy, ix])).flag,
                    ]
                )
    logger.debug(f"Wrote {field_grid.nx}x{field_grid.ny} field to {path}")


def read_field_csv(path: str | Path) -> FieldGrid:
    """Read a field CSV; the grid shape and extent are recovered from the node coordinates."""
    try:
        with open(path, newline="", encoding="utf-8") as csvfile:
            reader = csv.DictReader(csvfile)
            if reader.fieldnames != CSV_FIELDS:
                raise FileFormatError(f"{path}: expected header {','.join(CSV_FIELDS)}, got {reader.fieldnames}")
            rows = list(reader)
    except OSError as exc:
        raise FileFormatError(f"Unable to read field file {path}: {exc}") from exc
    except (csv.Error, UnicodeDecodeError) as exc:
        raise FileFormatError(f"{path} is not a field CSV: {exc}") from exc
    if len(rows) < 4:
        raise FileFormatError(f"{path} holds {len(rows)} nodes, too few for a grid")

    try:
        x = np.array([float(row["x"]) for row in rows])
        y = np.array([float(row["y"]) for row in rows])
        u = np.array([float(row["u"]) for row in rows])
        stderr = np.array([float(row["stderr"]) for row in rows])
        n = np.array([int(row["n"]) for row in rows], dtype=np.int64)
        cls = np.array([FLAGS[row["flag"]] for row in rows], dtype=np.int8)
    except (KeyError, TypeError, ValueError) as exc:
        raise FileFormatError(f"{path}: malformed row: {exc}") from exc

    nx = int(np.count_nonzero(np.abs(y - y[0]) <= COORDINATE_TOLERANCE))
    if nx < 2 or len(rows) % nx:
        raise FileFormatError(f"{path}: {len(rows)} nodes do not form a grid with {nx} nodes per row")
    ny = len(rows) // nx
    extent = float(x[nx - 1])
    if ny < 2 or not extent > 0:
        raise FileFormatError(f"{path}: node coordinates do not span a grid")
    field_grid = FieldGrid.empty(GridSpec(nx, ny, extent))
    gx, gy = field_grid.coordinates()
    if (
        np.abs(gx.ravel() - x).max() > COORDINATE_TOLERANCE * max(1.0, extent) * 10
        or np.abs(gy.ravel() - y).max() > COORDINATE_TOLERANCE * max(1.0, extent) * 10
    ):
        raise FileFormatError(f"{path}: nodes are not a regular row-major grid")

    shape = (ny, nx)
    field_grid.cls = cls.reshape(shape)
    field_grid.mean = u.reshape(shape)
    field_grid.stderr = stderr.reshape(shape)
    field_grid.n = n.reshape(shape)
    return field_grid


def pixel_values(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    scaled = np.floor((values - lo) / (hi - lo) * 255.0 + 0.5)
    return np.clip(np.nan_to_num(scaled, nan=0.0), 0, 255).astype(np.uint8)


def render_pgm(field_grid: FieldGrid, lo: float = -1.0, hi: float = 1.0) -> bytes:
    """
    Map u linearly from [lo, hi] to grey levels 0..255 with clamping. Invalid cells are black
    and the first image row is the top of the grid (y = +extent).
    """
    if not lo < hi:
        raise FileFormatError(f"Render range low must be below high, got {lo}:{hi}")
    values = np.where(field_grid.cls == CellClass.INVALID, np.nan, field_grid.mean)
    pixels = pixel_values(values, lo, hi)
    pixels[field_grid.cls == CellClass.INVALID] = 0
    header = f"P5\n{field_grid.nx} {field_grid.ny}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(pixels[::-1]).tobytes()


def write_pgm(field_grid: FieldGrid, path: str | Path, lo: float = -1.0, hi: float = 1.0) -> None:
    Path(path).write_bytes(render_pgm(field_grid, lo, hi))
    logger.debug(f"Wrote {field_grid.nx}x{field_grid.ny} image to {path}")


def read_pgm(path: str | Path) -> np.ndarray:
    """Pixels of a binary graymap as a (height, width) array, top row first."""
    data = Path(path).read_bytes()
    header = PGM_HEADER.match(data)
    if header is None or header.group(3) != b"255":
        raise FileFormatError(f"{path} is not an 8-bit binary graymap")
    width, height = int(header.group(1)), int(header.group(2))
    pixels = np.frombuffer(data[header.end() :], dtype=np.uint8)
    if pixels.size != width * height:
        raise FileFormatError(f"{path} holds {pixels.size} pixels, expected {width * height}")
    return pixels.reshape(height, width)
