"""
Behavioural model of the analog signal chain: noise sources feeding the path integrators,
the optional DC-removal loop, the machine's value range with overload detection, and the
finite precision of the digital readout.
"""

import logging
import math
from dataclasses import dataclass
from enum import StrEnum

import numpy as np

from fkwalk.fkwalk.errors import ConfigurationError, UsageError
from fkwalk.fkwalk.geometry import Point2
from fkwalk.fkwalk.utils.seeding import counter_normals

logger = logging.getLogger(__name__)


class NoiseMode(StrEnum):
    IDEAL = "ideal"
    BIASED = "biased"


@dataclass(frozen=True)
class NoiseConfig:
    """
    Immutable description of a noise source. Workers build their own NoiseSource from it,
    so sources are never shared between workers.

    In biased mode the raw noise signal per axis is ``z + dc_bias`` with z unit normal, and
    a first-order tracking loop with time constant ``highpass_time_constant`` removes the
    running mean.
    """

    mode: NoiseMode = NoiseMode.IDEAL
    dc_bias: tuple[float, float] = (0.0, 0.0)
    highpass_time_constant: float = 0.01

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", NoiseMode(self.mode))
        object.__setattr__(self, "dc_bias", tuple(float(b) for b in self.dc_bias))
        if len(self.dc_bias) != 2:
            raise ConfigurationError("dc_bias needs one value per axis")
        if not self.highpass_time_constant > 0:
            raise ConfigurationError(f"highpass_time_constant must be positive, got {self.highpass_time_constant}")

    def source(self, seeds) -> "NoiseSource":
        return NoiseSource(seeds, self)


class NoiseSource:
    """
    A bank of independent two-axis Wiener increment streams, one per seed.

    Draws come from a counter-based generator: the increment of stream s at step k on
    axis a is a hash of (seed_s, 2k + a) pushed through the inverse normal CDF. A stream
    therefore depends only on its seed and the number of calls made, never on which other
    streams share the bank or on which subset of streams is sampled at a step.

    :ivar seeds: uint64 seed per stream
    :ivar counter: number of sample_increment calls made so far
    :ivar bias_state: (2, n_streams) array of bias estimator states, biased mode only
    """

    def __init__(self, seeds, config: NoiseConfig | None = None):
        self.seeds = np.atleast_1d(np.asarray(seeds, dtype=np.uint64))
        self.config = config or NoiseConfig()
        self.counter = 0
        self.bias_state = np.zeros((2, self.seeds.size), dtype=np.float64)

    def __len__(self) -> int:
        return self.seeds.size

    def sample_increment(self, dt: float, index: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
        """
        Draw one step of per-axis Wiener increments with standard deviation sqrt(dt).

        :param dt: time step in machine-time units, must be positive
        :param index: optional stream indices to draw for; other streams are skipped
            for this step but the shared counter still advances
        :return: (dWx, dWy) arrays
        """
        if not dt > 0:
            raise UsageError(f"dt must be positive, got {dt}")
        seeds = self.seeds if index is None else self.seeds[index]
        k = np.uint64(2 * self.counter)
        self.counter += 1
        zx = counter_normals(seeds, k)
        zy = counter_normals(seeds, k + np.uint64(1))
        root_dt = math.sqrt(dt)
        if self.config.mode == NoiseMode.IDEAL:
            return root_dt * zx, root_dt * zy

        gain = dt / self.config.highpass_time_constant
        cols = slice(None) if index is None else index
        out = []
        for axis, z in enumerate((zx, zy)):
            raw = z + self.config.dc_bias[axis]
            state = self.bias_state[axis, cols]
            out.append(root_dt * (raw - state))
            self.bias_state[axis, cols] = state + gain * (raw - state)
        return out[0], out[1]

    def sample_block(self, dt: float, n_steps: int) -> tuple[np.ndarray, np.ndarray]:
        """
        Draw ``n_steps`` consecutive ideal increments for every stream at once, as
        (n_steps, n_streams) arrays. Equivalent to n_steps calls of sample_increment in
        ideal mode.
        """
        if not dt > 0:
            raise UsageError(f"dt must be positive, got {dt}")
        if self.config.mode != NoiseMode.IDEAL:
            raise UsageError("Block sampling is only available for ideal sources")
        steps = np.arange(self.counter, self.counter + n_steps, dtype=np.uint64)[:, None]
        self.counter += n_steps
        root_dt = math.sqrt(dt)
        zx = counter_normals(self.seeds[None, :], np.uint64(2) * steps)
        zy = counter_normals(self.seeds[None, :], np.uint64(2) * steps + np.uint64(1))
        return root_dt * zx, root_dt * zy


def sample_increment(source: NoiseSource, dt: float) -> tuple[np.ndarray, np.ndarray]:
    return source.sample_increment(dt)


@dataclass(frozen=True)
class MachineModel:
    """
    Value range and readout precision of the machine. Values are in machine units, the
    normalised range [-range_limit, range_limit].
    """

    range_limit: float = 1.0
    readout_quantum: float = 1e-4
    overload_enabled: bool = True

    def __post_init__(self) -> None:
        if not self.range_limit > 0:
            raise ConfigurationError(f"range_limit must be positive, got {self.range_limit}")
        if not 0 <= self.readout_quantum < self.range_limit:
            raise ConfigurationError(f"readout_quantum must lie in [0, range_limit), got {self.readout_quantum}")

    def quantize(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if self.readout_quantum > 0:
            # np.round ties to even
            v = np.round(v / self.readout_quantum) * self.readout_quantum
        return np.clip(v, -self.range_limit, self.range_limit)

    def overloaded(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if not self.overload_enabled:
            return np.zeros(np.broadcast(x, y).shape, dtype=bool)
        return (np.abs(x) > self.range_limit) | (np.abs(y) > self.range_limit)

    def clamp(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        limit = self.range_limit
        return np.clip(x, -limit, limit), np.clip(y, -limit, limit)


def quantize_readout(model: MachineModel, v: float) -> float:
    return float(model.quantize(v))


def check_overload(model: MachineModel, p: Point2) -> bool:
    return bool(model.overloaded(p.x, p.y))
