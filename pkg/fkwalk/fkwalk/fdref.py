"""
Finite-difference reference solver for

    alpha * Laplacian(u) + omega . grad(u) - sigma * u + f = 0,   u = g on the boundary

on the node lattice of a FieldGrid. Interior nodes carry a five-point stencil. Where a stencil
arm reaches a fixed node, the cut-cell treatment shortens the arm to the boundary crossing and
takes the boundary value there (Shortley-Weller); the staircase treatment keeps the full arm
and the fixed node's own value.
"""

import logging
import math
from dataclasses import dataclass
from enum import StrEnum
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, bicgstab, spilu

from fkwalk.fkwalk.errors import ConfigurationError, NumericalFailure, UsageError
from fkwalk.fkwalk.estimator import CellClass, FieldGrid, GridSpec
from fkwalk.fkwalk.geometry import (
    DomainSpec,
    OuterShape,
    RegionKind,
    boundary_values_at,
    classify_points,
    segment_exits,
)
from fkwalk.fkwalk.sde import SdeParams

logger = logging.getLogger(__name__)

# Shortest arm kept, as a fraction of the grid spacing
MIN_ARM_FRACTION = 1e-8
MAX_RESTARTS = 20

# (dx, dy) index offsets of the stencil arms
ARMS = {"east": (1, 0), "west": (-1, 0), "north": (0, 1), "south": (0, -1)}


class BoundaryTreatment(StrEnum):
    CUT_CELL = "cut_cell"
    STAIRCASE = "staircase"


@dataclass(frozen=True)
class StencilArm:
    """
    One arm of every unknown's stencil. ``neighbour`` is the unknown index at the arm end,
    or -1 where the arm ends on the boundary with ``value``; ``fraction`` is the arm length
    over the grid spacing.
    """

    neighbour: np.ndarray
    fraction: np.ndarray
    value: np.ndarray


@dataclass(frozen=True)
class StencilSystem:
    grid: GridSpec
    kind: np.ndarray
    fixed_values: np.ndarray
    index: np.ndarray
    arms: dict[str, StencilArm]
    treatment: BoundaryTreatment

    @property
    def n_unknowns(self) -> int:
        return int((self.index >= 0).sum())

    @property
    def spacing(self) -> tuple[float, float]:
        return 2.0 * self.grid.extent / (self.grid.nx - 1), 2.0 * self.grid.extent / (self.grid.ny - 1)

    @property
    def h(self) -> float:
        return max(self.spacing)


def _check_resolution(domain: DomainSpec, h: float) -> None:
    w = domain.outer_half_width
    for idx, inc in enumerate(domain.inclusions):
        if domain.outer_shape == OuterShape.SQUARE:
            gap = w - max(abs(inc.center.x), abs(inc.center.y)) - inc.radius
        else:
            gap = w - math.hypot(inc.center.x, inc.center.y) - inc.radius
        if gap <= h:
            raise ConfigurationError(
                f"Grid spacing {h:.4g} cannot resolve the gap of {gap:.4g} between inclusion {idx} "
                "and the outer boundary"
            )
        for other_idx, other in enumerate(domain.inclusions[:idx]):
            gap = math.hypot(inc.center.x - other.center.x, inc.center.y - other.center.y) - inc.radius - other.radius
            if gap <= h:
                raise ConfigurationError(
                    f"Grid spacing {h:.4g} cannot resolve the gap of {gap:.4g} between inclusions {other_idx} and {idx}"
                )


def rasterize(
    domain: DomainSpec,
    nx: int,
    ny: int,
    boundary_treatment: BoundaryTreatment | str = BoundaryTreatment.CUT_CELL,
) -> StencilSystem:
    """
    Classify the nodes of an nx x ny grid spanning the outer boundary into unknowns and
    fixed nodes, and lay out the stencil arms of every unknown.
    """
    treatment = BoundaryTreatment(boundary_treatment)
    if nx < 8 or ny < 8:
        raise ConfigurationError(f"The finite-difference grid needs at least 8x8 nodes, got {nx}x{ny}")
    grid = GridSpec(nx, ny, domain.outer_half_width)
    xs, ys = np.meshgrid(grid.xs, grid.ys)
    h = max(2.0 * grid.extent / (nx - 1), 2.0 * grid.extent / (ny - 1))
    _check_resolution(domain, h)

    kind, region = classify_points(domain, xs, ys)
    unknown = kind == RegionKind.INTERIOR
    if not unknown.any():
        raise ConfigurationError("The grid has no interior nodes")
    if unknown[0, :].any() or unknown[-1, :].any() or unknown[:, 0].any() or unknown[:, -1].any():
        raise ConfigurationError("Interior nodes on the grid border have no outer neighbours")
    fixed_values = np.where(unknown, np.nan, boundary_values_at(domain, region, xs, ys))

    index = np.full(kind.shape, -1, dtype=np.int64)
    index[unknown] = np.arange(int(unknown.sum()))
    iy, ix = np.nonzero(unknown)
    px, py = xs[iy, ix], ys[iy, ix]

    arms = {}
    for name, (dx, dy) in ARMS.items():
        jy, jx = iy + dy, ix + dx
        neighbour = index[jy, jx]
        fraction = np.ones(neighbour.size)
        value = np.full(neighbour.size, np.nan)
        ends_fixed = neighbour < 0
        if ends_fixed.any():
            end_values = fixed_values[jy, jx][ends_fixed]
            if treatment == BoundaryTreatment.CUT_CELL:
                exits = segment_exits(
                    domain, px[ends_fixed], py[ends_fixed], xs[jy, jx][ends_fixed], ys[jy, jx][ends_fixed]
                )
                crossing_values = boundary_values_at(domain, exits.region, exits.x, exits.y)
                fraction[ends_fixed] = np.where(exits.hit, np.clip(exits.fraction, MIN_ARM_FRACTION, 1.0), 1.0)
                value[ends_fixed] = np.where(exits.hit, crossing_values, end_values)
            else:
                value[ends_fixed] = end_values
        arms[name] = StencilArm(neighbour=neighbour, fraction=fraction, value=value)

    system = StencilSystem(
        grid=grid, kind=kind, fixed_values=fixed_values, index=index, arms=arms, treatment=treatment
    )
    logger.debug(f"Rasterized {nx}x{ny} grid: {system.n_unknowns} unknowns, {treatment} boundaries")
    return system


def assemble(system: StencilSystem, params: SdeParams) -> tuple[sp.csr_matrix, np.ndarray]:
    """
    Sparse system A u = b of the negated operator, so A has a positive diagonal and, under
    the cell Peclet condition, non-positive off-diagonals.
    """
    alpha = params.alpha
    if not alpha > 0:
        raise ConfigurationError(f"The finite-difference solver needs alpha > 0, got {alpha}")
    hx, hy = system.spacing
    wx, wy = params.omega
    peclet = max(abs(wx) * hx, abs(wy) * hy) / (2.0 * alpha)
    if peclet >= 1.0:
        raise ConfigurationError(f"Cell Peclet number {peclet:.3g} >= 1; central differences would be unstable")

    n = system.n_unknowns
    diag = np.full(n, params.sigma_abs)
    b = np.full(n, params.source_f)
    rows, cols, vals = [], [], []
    unknowns = np.arange(n)
    for plus, minus, h, w in (("east", "west", hx, wx), ("north", "south", hy, wy)):
        h_plus = system.arms[plus].fraction * h
        h_minus = system.arms[minus].fraction * h
        span = h_plus + h_minus
        coefficients = (
            (system.arms[plus], (2.0 * alpha + w * h_minus) / (h_plus * span)),
            (system.arms[minus], (2.0 * alpha - w * h_plus) / (h_minus * span)),
        )
        for arm, coef in coefficients:
            diag += coef
            linked = arm.neighbour >= 0
            rows.append(unknowns[linked])
            cols.append(arm.neighbour[linked])
            vals.append(-coef[linked])
            b[~linked] += coef[~linked] * arm.value[~linked]

    rows.append(unknowns)
    cols.append(unknowns)
    vals.append(diag)
    matrix = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return matrix.tocsr(), b


def relative_residual(matrix: sp.spmatrix, u: np.ndarray, b: np.ndarray) -> float:
    norm_b = np.linalg.norm(b)
    residual = np.linalg.norm(b - matrix @ u)
    return float(residual / norm_b) if norm_b > 0 else float(residual)


def solve_fd(
    system: StencilSystem,
    params: SdeParams,
    tol: float = 1e-8,
    max_iter: int = 10_000,
) -> FieldGrid:
    """
    Solve the stencil system with ILU-preconditioned BiCGSTAB, restarting from the current
    iterate until an independently computed relative residual is at most ``tol``.

    :return: FieldGrid with unknowns Solved (stderr 0, n 0), fixed nodes Fixed and nodes
        outside the domain Invalid; ``residual`` holds the certified relative residual
    """
    if not tol > 0:
        raise UsageError(f"tol must be positive, got {tol}")
    if max_iter < 1:
        raise UsageError(f"max_iter must be positive, got {max_iter}")
    matrix, b = assemble(system, params)
    n = b.size
    u = np.zeros(n)
    iterations = 0
    residual = 0.0

    if np.any(b != 0):
        ilu = spilu(matrix.tocsc(), drop_tol=1e-6, fill_factor=20)
        preconditioner = LinearOperator((n, n), matvec=ilu.solve)

        def count(_xk) -> None:
            nonlocal iterations
            iterations += 1

        for restart in range(MAX_RESTARTS):
            budget = max_iter - iterations
            if budget <= 0:
                break
            u, info = bicgstab(
                matrix, b, x0=u, rtol=tol * 0.1, atol=0.0, maxiter=budget, M=preconditioner, callback=count
            )
            if info < 0 or not np.isfinite(u).all():
                raise NumericalFailure(f"BiCGSTAB broke down (info={info}) after {iterations} iterations")
            residual = relative_residual(matrix, u, b)
            logger.debug(f"Restart {restart}: relative residual {residual:.3e} after {iterations} iterations")
            if residual <= tol:
                break
        if residual > tol:
            raise NumericalFailure(
                f"Finite-difference solve did not reach tol={tol:g} within {max_iter} iterations "
                f"(relative residual {residual:.3e})"
            )
    logger.info(f"Solved {n} unknowns in {iterations} iterations, relative residual {residual:.3e}")

    field_grid = FieldGrid.empty(system.grid)
    unknown = system.index >= 0
    fixed = system.kind == RegionKind.BOUNDARY
    field_grid.cls[unknown] = CellClass.SOLVED
    field_grid.mean[unknown] = u[system.index[unknown]]
    field_grid.cls[fixed] = CellClass.FIXED
    field_grid.mean[fixed] = system.fixed_values[fixed]
    field_grid.stderr[unknown | fixed] = 0.0
    field_grid.residual = residual
    return field_grid


@dataclass
class ErrorStats:
    max_abs: float
    mean_abs: float
    rms: float
    n_compared: int
    error: FieldGrid

    def summary(self) -> str:
        return f"max_abs={self.max_abs:.6g} mean_abs={self.mean_abs:.6g} rms={self.rms:.6g}"


def compare(a: FieldGrid, b: FieldGrid) -> ErrorStats:
    """Signed error a - b over the cells Solved in both fields."""
    if a.shape != b.shape or not math.isclose(a.extent, b.extent):
        raise UsageError(
            f"Cannot compare a {a.nx}x{a.ny} field of extent {a.extent} "
            f"with a {b.nx}x{b.ny} field of extent {b.extent}"
        )
    both = a.solved & b.solved
    n_compared = int(both.sum())
    if n_compared == 0:
        raise UsageError("The fields have no Solved cells in common")
    error = FieldGrid.empty(a.grid)
    diff = a.mean[both] - b.mean[both]
    error.cls[both] = CellClass.SOLVED
    error.mean[both] = diff
    error.stderr[both] = np.hypot(np.nan_to_num(a.stderr[both]), np.nan_to_num(b.stderr[both]))
    error.n[both] = a.n[both] + b.n[both]
    abs_diff = np.abs(diff)
    return ErrorStats(
        max_abs=float(abs_diff.max()),
        mean_abs=float(abs_diff.mean()),
        rms=float(np.sqrt(np.mean(diff * diff))),
        n_compared=n_compared,
        error=error,
    )


@dataclass(frozen=True)
class RefinementStudy:
    spacings: tuple[float, ...]
    max_errors: tuple[float, ...]
    order: float


def refinement_study(
    domain: DomainSpec,
    params: SdeParams,
    sizes: list[int],
    exact: Callable[[np.ndarray, np.ndarray], np.ndarray],
    boundary_treatment: BoundaryTreatment | str = BoundaryTreatment.CUT_CELL,
    tol: float = 1e-10,
    max_iter: int = 50_000,
) -> RefinementStudy:
    """
    Max-norm error against an exact solution over a sequence of grids, and the observed
    order of convergence from a least-squares fit of log error against log spacing.
    """
    if len(sizes) < 2:
        raise UsageError("A refinement study needs at least two grid sizes")
    spacings, errors = [], []
    for size in sizes:
        solution = solve_fd(rasterize(domain, size, size, boundary_treatment), params, tol=tol, max_iter=max_iter)
        xs, ys = solution.coordinates()
        solved = solution.solved
        errors.append(float(np.abs(solution.mean[solved] - exact(xs[solved], ys[solved])).max()))
        spacings.append(2.0 * domain.outer_half_width / (size - 1))
        logger.info(f"{size}x{size}: max error {errors[-1]:.3e}")
    order, _ = np.polyfit(np.log(spacings), np.log(errors), 1)
    return RefinementStudy(spacings=tuple(spacings), max_errors=tuple(errors), order=float(order))


def solve_reference(
    domain: DomainSpec,
    params: SdeParams,
    nx: int,
    ny: Optional[int] = None,
    boundary_treatment: BoundaryTreatment | str = BoundaryTreatment.CUT_CELL,
    tol: float = 1e-8,
    max_iter: int = 10_000,
) -> FieldGrid:
    return solve_fd(rasterize(domain, nx, ny or nx, boundary_treatment), params, tol=tol, max_iter=max_iter)
