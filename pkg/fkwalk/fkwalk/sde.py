"""
Random walks of the Ito diffusion dX = omega dt + beta dW from a start point to the first
boundary contact, and the Feynman-Kac payoff of each walk.

The diffusion amplitude is fixed by beta = sqrt(2 alpha), so the generator of the process is
alpha * Laplacian + omega . grad and the expected payoff solves

    alpha * Laplacian(u) + omega . grad(u) - sigma * u + f = 0

with u = g on the boundary. Conventions differing by a factor of two in beta are common; this
one is used throughout the package.
"""

import logging
import math
from dataclasses import dataclass
from enum import IntEnum, StrEnum
from typing import Optional

import numpy as np

from fkwalk.fkwalk.errors import CensoredWalkError, NumericalFailure, UsageError
from fkwalk.fkwalk.geometry import (
    OUTER,
    DomainSpec,
    LookupBoundaryOracle,
    Point2,
    RegionKind,
    boundary_distance,
    boundary_values_at,
    classify_points,
    lookup_values,
    project_to_outer,
    segment_exits,
)
from fkwalk.fkwalk.machine import MachineModel, NoiseConfig, NoiseSource
from fkwalk.fkwalk.utils.seeding import combine

logger = logging.getLogger(__name__)

# Region reported for walks halted by the lookup table, which knows values but not regions
UNRESOLVED = -2


class ExitMode(StrEnum):
    NAIVE = "naive"
    INTERPOLATED = "interp"


class ExitCause(IntEnum):
    HIT_BOUNDARY = 0
    OVERLOAD = 1
    MAX_STEPS = 2


@dataclass(frozen=True)
class SdeParams:
    """
    Constant PDE coefficients. ``alpha`` may be 0, which leaves a deterministic drift
    (beta = 0); ``sigma_abs`` is the absorption coefficient that discounts the payoff.
    """

    alpha: float = 0.5
    omega: tuple[float, float] = (0.0, 0.0)
    sigma_abs: float = 0.0
    source_f: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "omega", tuple(float(w) for w in self.omega))
        if len(self.omega) != 2:
            raise UsageError("omega needs one component per axis")
        if not (math.isfinite(self.alpha) and self.alpha >= 0):
            raise UsageError(f"alpha must be non-negative, got {self.alpha}")
        if not (math.isfinite(self.sigma_abs) and self.sigma_abs >= 0):
            raise UsageError(f"sigma_abs must be non-negative, got {self.sigma_abs}")
        if not math.isfinite(self.source_f):
            raise UsageError(f"source_f must be finite, got {self.source_f}")

    @property
    def beta(self) -> float:
        return math.sqrt(2.0 * self.alpha)


@dataclass(frozen=True)
class WalkConfig:
    dt: float = 1e-4
    max_steps: int = 1_000_000
    exit_mode: ExitMode = ExitMode.INTERPOLATED

    def __post_init__(self) -> None:
        object.__setattr__(self, "exit_mode", ExitMode(self.exit_mode))
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise UsageError(f"dt must be positive, got {self.dt}")
        if not self.max_steps > 0:
            raise UsageError(f"max_steps must be positive, got {self.max_steps}")

    @property
    def interpolated(self) -> bool:
        return self.exit_mode == ExitMode.INTERPOLATED


@dataclass(frozen=True)
class WalkOutcome:
    exit_point: Point2
    tau: float
    cause: ExitCause
    region_id: Optional[int]
    boundary_value: float
    source_integral: float
    steps_taken: int


@dataclass
class StepDetection:
    hit: np.ndarray
    fraction: np.ndarray
    x: np.ndarray
    y: np.ndarray
    region: np.ndarray
    value: Optional[np.ndarray] = None


class AnalyticBoundary:
    """Comparator-style halt detection on the exact geometry of the domain."""

    def __init__(self, domain: DomainSpec):
        self.domain = domain
        self.overload_value = domain.outer_boundary_value

    def interior(self, x, y) -> np.ndarray:
        kind, _ = classify_points(self.domain, x, y)
        return kind == RegionKind.INTERIOR

    def classify_nodes(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        """RegionKind per node and the boundary value of Boundary nodes (NaN elsewhere)."""
        kind, region = classify_points(self.domain, x, y)
        values = np.where(kind == RegionKind.BOUNDARY, boundary_values_at(self.domain, region, x, y), np.nan)
        return kind, values

    def detect(self, x0, y0, x1, y1, interpolated: bool) -> StepDetection:
        if interpolated:
            # A step can only cross a boundary if it is at least as long as the distance to it
            reach = np.hypot(x1 - x0, y1 - y0) + 1e-12 >= boundary_distance(self.domain, x0, y0)
            n = x0.size
            hit = np.zeros(n, dtype=bool)
            fraction = np.ones(n)
            hx, hy = x1.copy(), y1.copy()
            region = np.full(n, OUTER, dtype=np.int64)
            if reach.any():
                exits = segment_exits(self.domain, x0[reach], y0[reach], x1[reach], y1[reach])
                hit[reach] = exits.hit
                fraction[reach] = np.where(exits.hit, exits.fraction, 1.0)
                hx[reach] = exits.x
                hy[reach] = exits.y
                region[reach] = exits.region
            return StepDetection(hit=hit, fraction=fraction, x=hx, y=hy, region=region)

        kind, region = classify_points(self.domain, x1, y1)
        hit = kind != RegionKind.INTERIOR
        px, py = project_to_outer(self.domain, x1, y1)
        exterior = kind == RegionKind.EXTERIOR
        return StepDetection(
            hit=hit,
            fraction=np.ones(x1.shape),
            x=np.where(exterior, px, x1),
            y=np.where(exterior, py, y1),
            region=region,
        )

    def values(self, region, x, y) -> np.ndarray:
        return boundary_values_at(self.domain, region, x, y)


class LookupBoundary:
    """
    Halt detection through the lookup table only: the characteristic flag at the step end
    halts the walk and the decoded table value is the boundary value. The table cannot
    locate a crossing inside a step, so detection is always at the step end.
    """

    def __init__(self, oracle: LookupBoundaryOracle, outer_boundary_value: float = 0.0):
        self.oracle = oracle
        self.overload_value = outer_boundary_value

    def interior(self, x, y) -> np.ndarray:
        chi, _ = lookup_values(self.oracle, x, y)
        return ~chi

    def classify_nodes(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        chi, value = lookup_values(self.oracle, x, y)
        kind = np.where(chi, RegionKind.BOUNDARY, RegionKind.INTERIOR).astype(np.int8)
        return kind, np.where(chi, value, np.nan)

    def detect(self, x0, y0, x1, y1, interpolated: bool) -> StepDetection:
        chi, value = lookup_values(self.oracle, x1, y1)
        return StepDetection(
            hit=chi,
            fraction=np.ones(x1.shape),
            x=x1,
            y=y1,
            region=np.full(x1.shape, UNRESOLVED, dtype=np.int64),
            value=value,
        )


@dataclass
class WalkBatch:
    """Outcomes of a batch of walks, one array slot per walk."""

    exit_x: np.ndarray
    exit_y: np.ndarray
    tau: np.ndarray
    cause: np.ndarray
    region: np.ndarray
    boundary_value: np.ndarray
    source_integral: np.ndarray
    steps: np.ndarray

    def __len__(self) -> int:
        return self.tau.size

    @property
    def censored(self) -> np.ndarray:
        return self.cause == ExitCause.MAX_STEPS

    def payoffs(self, params: SdeParams) -> np.ndarray:
        """e^(-sigma tau) g + source integral per walk; NaN for censored walks."""
        values = np.exp(-params.sigma_abs * self.tau) * self.boundary_value + self.source_integral
        return np.where(self.censored, np.nan, values)

    def outcome(self, i: int) -> WalkOutcome:
        region = int(self.region[i])
        return WalkOutcome(
            exit_point=Point2(float(self.exit_x[i]), float(self.exit_y[i])),
            tau=float(self.tau[i]),
            cause=ExitCause(int(self.cause[i])),
            region_id=None if region == UNRESOLVED or self.cause[i] == ExitCause.MAX_STEPS else region,
            boundary_value=float(self.boundary_value[i]),
            source_integral=float(self.source_integral[i]),
            steps_taken=int(self.steps[i]),
        )


def simulate_walks(
    boundary: AnalyticBoundary | LookupBoundary,
    params: SdeParams,
    machine: MachineModel,
    cfg: WalkConfig,
    start_x,
    start_y,
    noise: NoiseSource,
) -> WalkBatch:
    """
    Run one walk per noise stream, all in lockstep, until each one halts.

    After every Euler-Maruyama step X' = X + omega dt + beta dW the halt logic runs in the
    order of the selected exit mode. Interpolated: a boundary crossing along the step halts
    at the crossing fraction, otherwise an out-of-range end point is an overload. Naive: an
    out-of-range end point is an overload, otherwise a step end outside the interior halts
    at the step end. Overloads halt at the step end with the position clamped to the range
    box and take the outer boundary value. Walks still running after max_steps are censored.
    """
    x = np.array(start_x, dtype=np.float64, ndmin=1)
    y = np.array(start_y, dtype=np.float64, ndmin=1)
    n = x.size
    if y.size != n or len(noise) != n:
        raise UsageError(f"Need one start point and one noise stream per walk, got {n}, {y.size}, {len(noise)}")
    if not boundary.interior(x, y).all():
        raise UsageError("Every walk must start inside the domain")

    exit_x = np.full(n, np.nan)
    exit_y = np.full(n, np.nan)
    tau = np.full(n, np.nan)
    cause = np.full(n, ExitCause.MAX_STEPS, dtype=np.int8)
    region = np.full(n, OUTER, dtype=np.int64)
    value = np.full(n, np.nan)
    source = np.zeros(n)
    steps = np.zeros(n, dtype=np.int64)

    dt = cfg.dt
    beta = params.beta
    drift_x = params.omega[0] * dt
    drift_y = params.omega[1] * dt
    source_step = params.source_f * dt
    interpolated = cfg.interpolated
    running_source = 0.0
    active = np.arange(n)

    for k in range(cfg.max_steps):
        if active.size == 0:
            break
        # every live walk has the same elapsed time, so the source integral is shared
        step_source = source_step * math.exp(-params.sigma_abs * k * dt) if source_step else 0.0
        running_source += step_source

        dwx, dwy = noise.sample_increment(dt, active)
        x0 = x[active]
        y0 = y[active]
        x1 = x0 + drift_x + beta * dwx
        y1 = y0 + drift_y + beta * dwy
        if not (np.isfinite(x1).all() and np.isfinite(y1).all()):
            raise NumericalFailure(f"Walk state became non-finite at step {k}")

        detection = boundary.detect(x0, y0, x1, y1, interpolated)
        over = machine.overloaded(x1, y1)
        if interpolated:
            hit = detection.hit
            over = over & ~hit
        else:
            hit = detection.hit & ~over
        done = hit | over

        if done.any():
            hit_idx = active[hit]
            frac = detection.fraction[hit]
            qx = machine.quantize(detection.x[hit])
            qy = machine.quantize(detection.y[hit])
            hit_region = detection.region[hit]
            exit_x[hit_idx] = qx
            exit_y[hit_idx] = qy
            tau[hit_idx] = (k + frac) * dt
            cause[hit_idx] = ExitCause.HIT_BOUNDARY
            region[hit_idx] = hit_region
            if detection.value is not None:
                value[hit_idx] = detection.value[hit]
            else:
                value[hit_idx] = boundary.values(hit_region, qx, qy)
            # the last step only counts up to the crossing
            source[hit_idx] = running_source - (1.0 - frac) * step_source
            steps[hit_idx] = k + 1

            over_idx = active[over]
            cx, cy = machine.clamp(x1[over], y1[over])
            exit_x[over_idx] = machine.quantize(cx)
            exit_y[over_idx] = machine.quantize(cy)
            tau[over_idx] = (k + 1) * dt
            cause[over_idx] = ExitCause.OVERLOAD
            region[over_idx] = OUTER
            value[over_idx] = boundary.overload_value
            source[over_idx] = running_source
            steps[over_idx] = k + 1

        x[active] = x1
        y[active] = y1
        active = active[~done]

    if active.size:
        logger.warning(f"{active.size} of {n} walks reached the step budget of {cfg.max_steps} and are censored")
        exit_x[active] = x[active]
        exit_y[active] = y[active]
        tau[active] = cfg.max_steps * dt
        source[active] = running_source
        steps[active] = cfg.max_steps

    return WalkBatch(
        exit_x=exit_x,
        exit_y=exit_y,
        tau=tau,
        cause=cause,
        region=region,
        boundary_value=value,
        source_integral=source,
        steps=steps,
    )


def run_walk(
    domain: DomainSpec,
    params: SdeParams,
    machine: MachineModel,
    cfg: WalkConfig,
    start: Point2,
    noise: NoiseSource,
) -> WalkOutcome:
    if len(noise) != 1:
        raise UsageError(f"run_walk needs a single-stream noise source, got {len(noise)} streams")
    batch = simulate_walks(AnalyticBoundary(domain), params, machine, cfg, start.x, start.y, noise)
    return batch.outcome(0)


def payoff(outcome: WalkOutcome, domain: DomainSpec, params: SdeParams) -> float:
    if outcome.cause == ExitCause.MAX_STEPS:
        raise CensoredWalkError(f"Walk was censored after {outcome.steps_taken} steps and has no payoff")
    g = domain.outer_boundary_value if outcome.cause == ExitCause.OVERLOAD else outcome.boundary_value
    return math.exp(-params.sigma_abs * outcome.tau) * g + outcome.source_integral


@dataclass(frozen=True)
class ExitTimeRow:
    dt: float
    mean_tau_naive: float
    mean_tau_interpolated: float
    stderr: float
    stderr_interpolated: float
    n_pairs: int


def exit_time_study(
    domain: DomainSpec,
    params: SdeParams,
    machine: MachineModel,
    start: Point2,
    dt_list: list[float],
    n_walks: int,
    seed: int,
    max_steps: int = 1_000_000,
    noise_config: NoiseConfig | None = None,
) -> list[ExitTimeRow]:
    """
    Mean exit time from ``start`` under naive and interpolated exit detection, for each
    time step. Both modes replay the same noise streams, so each pair of walks follows
    the same path until the interpolated walk halts; pairs where either walk is censored
    are dropped. ``stderr`` is the standard error of the naive mean.
    """
    if len(dt_list) < 1 or any(b >= a for a, b in zip(dt_list, dt_list[1:])):
        raise UsageError(f"dt_list must be strictly decreasing, got {dt_list}")
    if n_walks < 1000:
        raise UsageError(f"The exit time study needs at least 1000 walks, got {n_walks}")

    seeds = combine(seed, np.arange(n_walks))
    boundary = AnalyticBoundary(domain)
    rows = []
    for dt in dt_list:
        taus = {}
        censored = np.zeros(n_walks, dtype=bool)
        for mode in (ExitMode.NAIVE, ExitMode.INTERPOLATED):
            cfg = WalkConfig(dt=dt, max_steps=max_steps, exit_mode=mode)
            noise = NoiseSource(seeds, noise_config)
            batch = simulate_walks(
                boundary, params, machine, cfg, np.full(n_walks, start.x), np.full(n_walks, start.y), noise
            )
            taus[mode] = batch.tau
            censored |= batch.censored
        keep = ~censored
        n_pairs = int(keep.sum())
        if n_pairs < 2:
            raise NumericalFailure(f"Fewer than two uncensored walk pairs at dt={dt}")
        naive = taus[ExitMode.NAIVE][keep]
        interp = taus[ExitMode.INTERPOLATED][keep]
        row = ExitTimeRow(
            dt=dt,
            mean_tau_naive=float(naive.mean()),
            mean_tau_interpolated=float(interp.mean()),
            stderr=float(naive.std(ddof=1) / math.sqrt(n_pairs)),
            stderr_interpolated=float(interp.std(ddof=1) / math.sqrt(n_pairs)),
            n_pairs=n_pairs,
        )
        logger.info(
            f"dt={dt:g}: naive={row.mean_tau_naive:.6g} interp={row.mean_tau_interpolated:.6g} "
            f"stderr={row.stderr:.3g} pairs={n_pairs}"
        )
        rows.append(row)
    return rows
