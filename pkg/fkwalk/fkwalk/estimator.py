"""
Point and field estimates from many walks.

Every walk draws from its own counter-based stream seeded by ``seed_for(base_seed, ix, iy, j)``,
so a cell's estimate depends only on the inputs and the base seed. Grid rows are the unit of
parallel work; within a row every walk of every interior node runs as one vectorised batch
and payoffs are accumulated per node in walk order.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Callable, Optional

import numpy as np

from fkwalk.fkwalk.errors import EmptyEstimateError, NumericalFailure, UsageError
from fkwalk.fkwalk.geometry import DomainSpec, Point2, RegionKind
from fkwalk.fkwalk.machine import MachineModel, NoiseConfig, NoiseSource
from fkwalk.fkwalk.runner import run_tasks
from fkwalk.fkwalk.sde import AnalyticBoundary, LookupBoundary, SdeParams, WalkConfig, simulate_walks
from fkwalk.fkwalk.utils.seeding import combine

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PointEstimate:
    """Welford running statistics of accepted payoffs, plus the count of censored walks."""

    mean: float = 0.0
    m2: float = 0.0
    n: int = 0
    n_censored: int = 0

    @property
    def stderr(self) -> float:
        if self.n < 2:
            return math.nan
        return math.sqrt(self.m2 / (self.n * (self.n - 1)))


def accumulate(est: PointEstimate, sample: float) -> PointEstimate:
    if not math.isfinite(sample):
        raise NumericalFailure(f"Non-finite payoff {sample}")
    n = est.n + 1
    delta = sample - est.mean
    mean = est.mean + delta / n
    return replace(est, mean=mean, m2=est.m2 + delta * (sample - mean), n=n)


def merge(a: PointEstimate, b: PointEstimate) -> PointEstimate:
    """Pooled statistics of two disjoint sample sets (Chan et al. pairwise update)."""
    n_censored = a.n_censored + b.n_censored
    if b.n == 0:
        return replace(a, n_censored=n_censored)
    if a.n == 0:
        return replace(b, n_censored=n_censored)
    n = a.n + b.n
    delta = b.mean - a.mean
    mean = a.mean + delta * (b.n / n)
    m2 = a.m2 + b.m2 + delta * delta * (a.n * b.n / n)
    return PointEstimate(mean=mean, m2=m2, n=n, n_censored=n_censored)


def seed_for(base_seed: int, ix: int, iy: int, j: int) -> int:
    """Stream seed of walk j at grid node (ix, iy): chained SplitMix64 mixes of the four keys."""
    return int(combine(base_seed, ix, iy, j))


def walk_seeds(base_seed: int, ix, iy, n_walks: int) -> np.ndarray:
    """seed_for over walks 0..n_walks-1 of each node, shaped (nodes, n_walks)."""
    ix = np.atleast_1d(np.asarray(ix, dtype=np.uint64))[:, None]
    iy = np.atleast_1d(np.asarray(iy, dtype=np.uint64))[:, None]
    return combine(base_seed, ix, iy, np.arange(n_walks, dtype=np.uint64)[None, :])


def _accumulate_payoffs(payoffs: np.ndarray) -> PointEstimate:
    est = PointEstimate()
    for value in payoffs.tolist():
        if math.isnan(value):
            est = replace(est, n_censored=est.n_censored + 1)
        else:
            est = accumulate(est, value)
    return est


def estimate_point(
    domain: DomainSpec,
    params: SdeParams,
    machine: MachineModel,
    cfg: WalkConfig,
    start: Point2,
    n_walks: int,
    base_seed: int,
    point_index: tuple[int, int] = (0, 0),
    noise_config: Optional[NoiseConfig] = None,
    boundary: AnalyticBoundary | LookupBoundary | None = None,
) -> PointEstimate:
    """
    Mean payoff of ``n_walks`` walks from ``start``. Censored walks are counted, not averaged.

    :param point_index: grid indices (ix, iy) that key the walk seeds
    :param boundary: halt detector, by default the exact geometry of ``domain``
    """
    if n_walks < 1:
        raise UsageError(f"n_walks must be at least 1, got {n_walks}")
    boundary = boundary or AnalyticBoundary(domain)
    seeds = walk_seeds(base_seed, point_index[0], point_index[1], n_walks).ravel()
    batch = simulate_walks(
        boundary,
        params,
        machine,
        cfg,
        np.full(n_walks, start.x),
        np.full(n_walks, start.y),
        NoiseSource(seeds, noise_config),
    )
    est = _accumulate_payoffs(batch.payoffs(params))
    if est.n == 0:
        raise EmptyEstimateError(f"All {n_walks} walks from ({start.x}, {start.y}) were censored")
    return est


class CellClass(IntEnum):
    SOLVED = 0
    FIXED = 1
    INVALID = 2

    @property
    def flag(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class GridSpec:
    """Nodes x_i = -extent + 2 extent i / (nx - 1), edges included; likewise y_j."""

    nx: int
    ny: int
    extent: float = 1.0

    def __post_init__(self) -> None:
        if self.nx < 2 or self.ny < 2:
            raise UsageError(f"Grid needs at least 2x2 nodes, got {self.nx}x{self.ny}")
        if not (math.isfinite(self.extent) and self.extent > 0):
            raise UsageError(f"Grid extent must be positive, got {self.extent}")

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(-self.extent, self.extent, self.nx)

    @property
    def ys(self) -> np.ndarray:
        return np.linspace(-self.extent, self.extent, self.ny)


@dataclass
class FieldGrid:
    """
    Node values of a solution field. Arrays are (ny, nx) with row iy at y_iy, rows in
    ascending y. Fixed cells hold their boundary value in ``mean``; Invalid cells hold NaN.
    ``residual`` is the certified relative residual of finite-difference fields.
    """

    nx: int
    ny: int
    extent: float
    cls: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n: np.ndarray
    n_censored: np.ndarray
    diagnostics: dict[tuple[int, int], str] = field(default_factory=dict)
    residual: Optional[float] = None

    @classmethod
    def empty(cls, grid: GridSpec) -> "FieldGrid":
        shape = (grid.ny, grid.nx)
        return cls(
            nx=grid.nx,
            ny=grid.ny,
            extent=grid.extent,
            cls=np.full(shape, CellClass.INVALID, dtype=np.int8),
            mean=np.full(shape, np.nan),
            stderr=np.full(shape, np.nan),
            n=np.zeros(shape, dtype=np.int64),
            n_censored=np.zeros(shape, dtype=np.int64),
        )

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.nx, self.ny, self.extent)

    @property
    def shape(self) -> tuple[int, int]:
        return self.ny, self.nx

    @property
    def solved(self) -> np.ndarray:
        return self.cls == CellClass.SOLVED

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.grid.xs, self.grid.ys)

    def set_cell(self, ix: int, iy: int, cell_class: CellClass, mean: float, est: PointEstimate | None = None) -> None:
        self.cls[iy, ix] = cell_class
        self.mean[iy, ix] = mean
        if est is not None:
            self.stderr[iy, ix] = est.stderr
            self.n[iy, ix] = est.n
            self.n_censored[iy, ix] = est.n_censored
        elif cell_class != CellClass.INVALID:
            self.stderr[iy, ix] = 0.0

    def estimate(self, ix: int, iy: int) -> PointEstimate:
        if self.cls[iy, ix] != CellClass.SOLVED:
            raise UsageError(f"Cell ({ix}, {iy}) was not solved")
        n = int(self.n[iy, ix])
        stderr = float(self.stderr[iy, ix])
        m2 = stderr * stderr * n * (n - 1) if n >= 2 else 0.0
        return PointEstimate(float(self.mean[iy, ix]), m2, n, int(self.n_censored[iy, ix]))

    def totals(self) -> tuple[int, int]:
        """(walks run, walks censored) over the whole field."""
        censored = int(self.n_censored.sum())
        return int(self.n.sum()) + censored, censored

    def downsample(self, stride: int) -> "FieldGrid":
        """Every ``stride``-th node in each direction; the node lattices must line up."""
        if stride < 1 or (self.nx - 1) % stride or (self.ny - 1) % stride:
            raise UsageError(f"Stride {stride} does not divide a {self.nx}x{self.ny} grid")
        sub = np.s_[::stride, ::stride]
        return FieldGrid(
            nx=(self.nx - 1) // stride + 1,
            ny=(self.ny - 1) // stride + 1,
            extent=self.extent,
            cls=self.cls[sub].copy(),
            mean=self.mean[sub].copy(),
            stderr=self.stderr[sub].copy(),
            n=self.n[sub].copy(),
            n_censored=self.n_censored[sub].copy(),
            diagnostics={
                (ix // stride, iy // stride): message
                for (ix, iy), message in self.diagnostics.items()
                if ix % stride == 0 and iy % stride == 0
            },
            residual=self.residual,
        )


@dataclass(frozen=True)
class RowTask:
    iy: int
    y: float
    xs: tuple[float, ...]
    boundary: AnalyticBoundary | LookupBoundary
    params: SdeParams
    machine: MachineModel
    cfg: WalkConfig
    n_walks: int
    base_seed: int
    noise_config: Optional[NoiseConfig] = None


@dataclass
class RowResult:
    iy: int
    kinds: np.ndarray
    fixed_values: np.ndarray
    estimates: dict[int, PointEstimate]
    failures: dict[int, str]


def solve_row(task: RowTask) -> RowResult:
    """Classify one grid row and estimate every interior node of it in a single batch."""
    xs = np.asarray(task.xs)
    ys = np.full(xs.shape, task.y)
    kinds, fixed_values = task.boundary.classify_nodes(xs, ys)
    interior = np.flatnonzero(kinds == RegionKind.INTERIOR)
    estimates: dict[int, PointEstimate] = {}
    failures: dict[int, str] = {}
    if interior.size:
        n_walks = task.n_walks
        seeds = walk_seeds(task.base_seed, interior, task.iy, n_walks)
        batch = simulate_walks(
            task.boundary,
            task.params,
            task.machine,
            task.cfg,
            np.repeat(xs[interior], n_walks),
            np.repeat(ys[interior], n_walks),
            NoiseSource(seeds.ravel(), task.noise_config),
        )
        payoffs = batch.payoffs(task.params).reshape(interior.size, n_walks)
        for ix, row_payoffs in zip(interior.tolist(), payoffs):
            est = _accumulate_payoffs(row_payoffs)
            if est.n == 0:
                failures[ix] = f"All {n_walks} walks were censored"
            estimates[ix] = est
    return RowResult(iy=task.iy, kinds=kinds, fixed_values=fixed_values, estimates=estimates, failures=failures)


def solve_field(
    domain: DomainSpec,
    params: SdeParams,
    machine: MachineModel,
    cfg: WalkConfig,
    grid: GridSpec,
    n_walks: int,
    base_seed: int,
    workers: Optional[int] = None,
    noise_config: Optional[NoiseConfig] = None,
    boundary: AnalyticBoundary | LookupBoundary | None = None,
    progress: Optional[Callable[[int, int], None]] = None,
) -> FieldGrid:
    """
    Estimate the solution at every node of ``grid``.

    Interior nodes are Solved by Monte Carlo; nodes on a boundary or inside an inclusion are
    Fixed at the boundary value; nodes outside the domain are Invalid. A node whose walks are
    all censored is marked Invalid with a diagnostic and the sweep carries on.
    """
    if n_walks < 1:
        raise UsageError(f"n_walks must be at least 1, got {n_walks}")
    boundary = boundary or AnalyticBoundary(domain)
    xs = tuple(grid.xs.tolist())
    tasks = [
        RowTask(
            iy=iy,
            y=y,
            xs=xs,
            boundary=boundary,
            params=params,
            machine=machine,
            cfg=cfg,
            n_walks=n_walks,
            base_seed=base_seed,
            noise_config=noise_config,
        )
        for iy, y in enumerate(grid.ys.tolist())
    ]

    def report(done: int, total: int, result: RowResult) -> None:
        logger.info(f"Row {result.iy + 1}/{total} done ({done}/{total} rows, {len(result.estimates)} solved nodes)")
        if progress is not None:
            progress(done, total)

    field_grid = FieldGrid.empty(grid)
    for result in run_tasks(solve_row, tasks, workers=workers, progress=report):
        iy = result.iy
        for ix, kind in enumerate(result.kinds.tolist()):
            if kind == RegionKind.BOUNDARY:
                field_grid.set_cell(ix, iy, CellClass.FIXED, float(result.fixed_values[ix]))
        for ix, est in result.estimates.items():
            if ix in result.failures:
                field_grid.set_cell(ix, iy, CellClass.INVALID, math.nan, est)
                field_grid.diagnostics[(ix, iy)] = result.failures[ix]
                logger.warning(f"Cell ({ix}, {iy}) is invalid: {result.failures[ix]}")
            else:
                field_grid.set_cell(ix, iy, CellClass.SOLVED, est.mean, est)
    return field_grid
