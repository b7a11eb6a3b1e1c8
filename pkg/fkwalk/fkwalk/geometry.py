"""
Solution domain geometry.

The domain is an outer square (or disk) with circular inclusions cut out of it. Each boundary
piece carries a Dirichlet value. This module classifies points, finds where a walk step first
crosses a boundary, and builds the quantized lookup table that emulates a table-driven boundary
function generator (two ADCs addressing a byte memory whose top bit is the halt flag and whose
low seven bits drive a DAC).

Every operation has a vectorised form working on numpy arrays, used by the walk engine, and a
scalar form taking ``Point2`` values.
"""

import logging
import math
import struct
from dataclasses import dataclass, field
from enum import IntEnum, StrEnum
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from fkwalk.fkwalk.errors import ConfigurationError, FileFormatError, UsageError

logger = logging.getLogger(__name__)

# Region id of the outer boundary; inclusions are numbered from 0
OUTER = -1

VALUE_BITS = 7
CHI_FLAG = 0x80
CODE_ZERO = 64
CODE_SCALE = 63

LUT_MAGIC = b"FKLUT1\x00\x00"
LUT_HEADER = struct.Struct("<8sIB3x")


class RegionKind(IntEnum):
    INTERIOR = 0
    BOUNDARY = 1
    EXTERIOR = 2


class OuterShape(StrEnum):
    SQUARE = "square"
    DISK = "disk"


def _cos_theta(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    r = np.hypot(x, y)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(r > 0, x / r, 1.0)


def _cos_3theta(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.cos(3.0 * np.arctan2(y, x))


def _exp_cos(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.exp(x) * np.cos(y)


# Named outer boundary functions. Harmonic extensions: r cos(t), r^3 cos(3t), e^x cos(y).
BOUNDARY_PROFILES: dict[str, Callable[[np.ndarray, np.ndarray], np.ndarray]] = {
    "cos_theta": _cos_theta,
    "cos_3theta": _cos_3theta,
    "exp_cos": _exp_cos,
}


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise UsageError(f"Point coordinates must be finite, got ({self.x}, {self.y})")


@dataclass(frozen=True)
class Inclusion:
    center: Point2
    radius: float
    boundary_value: float


@dataclass(frozen=True)
class DomainSpec:
    """
    Geometry of the solution domain and its Dirichlet boundary values.

    The outer boundary is the square [-w, w]^2 or the disk of radius w about the origin,
    where w is ``outer_half_width``. Inclusions are open disks removed from the domain;
    points inside them are outside the domain. ``outer_profile`` optionally names a
    position-dependent outer boundary function from ``BOUNDARY_PROFILES`` that replaces
    ``outer_boundary_value`` wherever the boundary value is evaluated at a point.
    """

    outer_half_width: float = 1.0
    inclusions: tuple[Inclusion, ...] = ()
    outer_boundary_value: float = 0.0
    outer_shape: OuterShape = OuterShape.SQUARE
    outer_profile: Optional[str] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "inclusions", tuple(self.inclusions))
        object.__setattr__(self, "outer_shape", OuterShape(self.outer_shape))
        w = self.outer_half_width
        if not (math.isfinite(w) and w > 0):
            raise ConfigurationError(f"outer_half_width must be positive, got {w}")
        if self.outer_profile is not None and self.outer_profile not in BOUNDARY_PROFILES:
            raise ConfigurationError(
                f"Unknown outer profile '{self.outer_profile}'. Known profiles: {', '.join(sorted(BOUNDARY_PROFILES))}"
            )
        _check_value(self.outer_boundary_value, "outer boundary")
        for idx, inc in enumerate(self.inclusions):
            if not inc.radius > 0:
                raise ConfigurationError(f"Inclusion {idx} has non-positive radius {inc.radius}")
            _check_value(inc.boundary_value, f"inclusion {idx}")
            cx, cy = inc.center.x, inc.center.y
            if self.outer_shape == OuterShape.SQUARE:
                inside = abs(cx) + inc.radius < w and abs(cy) + inc.radius < w
            else:
                inside = math.hypot(cx, cy) + inc.radius < w
            if not inside:
                raise ConfigurationError(f"Inclusion {idx} does not lie strictly inside the outer boundary")
            for other_idx, other in enumerate(self.inclusions[:idx]):
                gap = math.hypot(cx - other.center.x, cy - other.center.y)
                if gap <= inc.radius + other.radius:
                    raise ConfigurationError(f"Inclusions {other_idx} and {idx} overlap")

    @classmethod
    def benchmark(cls) -> "DomainSpec":
        """The square with two enclosed circles: -1 on the upper left circle, +1 on the lower right."""
        return cls(
            outer_half_width=1.0,
            inclusions=(
                Inclusion(center=Point2(-0.35, 0.35), radius=0.25, boundary_value=-1.0),
                Inclusion(center=Point2(0.35, -0.35), radius=0.25, boundary_value=1.0),
            ),
            outer_boundary_value=0.0,
        )

    @property
    def region_ids(self) -> list[int]:
        return [OUTER] + list(range(len(self.inclusions)))


def _check_value(value: float, what: str) -> None:
    if not (math.isfinite(value) and -1.0 <= value <= 1.0):
        raise ConfigurationError(f"The {what} value must lie in [-1, 1], got {value}")


@dataclass(frozen=True)
class RegionClass:
    kind: RegionKind
    region_id: Optional[int] = None
    value: Optional[float] = None

    @property
    def is_interior(self) -> bool:
        return self.kind == RegionKind.INTERIOR


@dataclass(frozen=True)
class SegmentHit:
    hit: Point2
    region_id: int
    fraction: float


@dataclass
class SegmentExits:
    """Vectorised segment_exit result. ``fraction`` is inf where a segment stays inside."""

    hit: np.ndarray
    fraction: np.ndarray
    region: np.ndarray
    x: np.ndarray
    y: np.ndarray


def classify_points(domain: DomainSpec, x, y) -> tuple[np.ndarray, np.ndarray]:
    """
    Classify points against the domain.

    :return: (kind, region) arrays. ``kind`` holds RegionKind values; ``region`` holds the
        region id of Boundary points and OUTER elsewhere.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = domain.outer_half_width
    kind = np.full(np.broadcast(x, y).shape, RegionKind.INTERIOR, dtype=np.int8)
    region = np.full(kind.shape, OUTER, dtype=np.int64)

    if domain.outer_shape == OuterShape.SQUARE:
        ax, ay = np.abs(x), np.abs(y)
        outside = (ax > w) | (ay > w)
        on_edge = ~outside & ((ax == w) | (ay == w))
    else:
        r2 = x * x + y * y
        outside = r2 > w * w
        on_edge = r2 == w * w
    kind[on_edge] = RegionKind.BOUNDARY

    for idx, inc in enumerate(domain.inclusions):
        d2 = (x - inc.center.x) ** 2 + (y - inc.center.y) ** 2
        inside = d2 <= inc.radius * inc.radius
        kind[inside] = RegionKind.BOUNDARY
        region[inside] = idx

    kind[outside] = RegionKind.EXTERIOR
    region[outside] = OUTER
    return kind, region


def classify(domain: DomainSpec, p: Point2) -> RegionClass:
    kind, region = classify_points(domain, p.x, p.y)
    kind_value = RegionKind(int(kind))
    if kind_value != RegionKind.BOUNDARY:
        return RegionClass(kind_value)
    region_id = int(region)
    return RegionClass(kind_value, region_id, boundary_value_at(domain, region_id, p))


def boundary_value(domain: DomainSpec, region_id: int) -> float:
    if region_id == OUTER:
        return domain.outer_boundary_value
    if 0 <= region_id < len(domain.inclusions):
        return domain.inclusions[region_id].boundary_value
    raise UsageError(f"Unknown region id {region_id}")


def project_to_outer(domain: DomainSpec, x, y) -> tuple[np.ndarray, np.ndarray]:
    """Nearest point of the outer boundary's closed region: clip to the square, or scale onto the disk."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = domain.outer_half_width
    if domain.outer_shape == OuterShape.SQUARE:
        return np.clip(x, -w, w), np.clip(y, -w, w)
    r = np.hypot(x, y)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(r > w, w / r, 1.0)
    return x * scale, y * scale


def boundary_values_at(domain: DomainSpec, region, x, y) -> np.ndarray:
    """Boundary value of each region id, evaluated at the given boundary points."""
    region = np.asarray(region)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    values = np.full(np.broadcast(region, x, y).shape, domain.outer_boundary_value, dtype=np.float64)
    if domain.outer_profile is not None:
        outer = region == OUTER
        px, py = project_to_outer(domain, x, y)
        values = np.where(outer, BOUNDARY_PROFILES[domain.outer_profile](px, py), values)
    for idx, inc in enumerate(domain.inclusions):
        values = np.where(region == idx, inc.boundary_value, values)
    return values


def boundary_value_at(domain: DomainSpec, region_id: int, p: Point2) -> float:
    boundary_value(domain, region_id)  # validates the id
    return float(boundary_values_at(domain, region_id, p.x, p.y))


def boundary_distance(domain: DomainSpec, x, y) -> np.ndarray:
    """
    Distance from each point to the nearest boundary piece. Exact for points inside the
    outer boundary; for points outside the square it is the Chebyshev distance.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = domain.outer_half_width
    if domain.outer_shape == OuterShape.SQUARE:
        dist = np.abs(w - np.maximum(np.abs(x), np.abs(y)))
    else:
        dist = np.abs(w - np.hypot(x, y))
    for inc in domain.inclusions:
        dist = np.minimum(dist, np.abs(np.hypot(x - inc.center.x, y - inc.center.y) - inc.radius))
    return dist


def segment_exits(domain: DomainSpec, x0, y0, x1, y1) -> SegmentExits:
    """
    Earliest boundary crossing along each segment (x0, y0) -> (x1, y1).

    Start points are assumed Interior. Square edges are solved linearly per axis, circles
    through the segment-circle quadratic using the cancellation-free root form. The smallest
    fraction wins; exact ties go to the lowest region id (outer first, then inclusions in
    order).
    """
    x0 = np.asarray(x0, dtype=np.float64)
    y0 = np.asarray(y0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    y1 = np.asarray(y1, dtype=np.float64)
    dx = x1 - x0
    dy = y1 - y0
    w = domain.outer_half_width
    a = dx * dx + dy * dy

    with np.errstate(divide="ignore", invalid="ignore"):
        if domain.outer_shape == OuterShape.SQUARE:
            lam_x = np.where(x1 >= w, (w - x0) / dx, np.where(x1 <= -w, (-w - x0) / dx, np.inf))
            lam_y = np.where(y1 >= w, (w - y0) / dy, np.where(y1 <= -w, (-w - y0) / dy, np.inf))
            lam = np.minimum(lam_x, lam_y)
        else:
            b = 2.0 * (x0 * dx + y0 * dy)
            c = x0 * x0 + y0 * y0 - w * w
            sq = np.sqrt(np.maximum(b * b - 4.0 * a * c, 0.0))
            # larger root of the quadratic; c < 0 for interior starts so it is positive
            root = np.where(b > 0, -2.0 * c / (b + sq), (-b + sq) / (2.0 * a))
            lam = np.where((x1 * x1 + y1 * y1 >= w * w) & (a > 0), root, np.inf)
        lam = np.where(np.isfinite(lam), np.clip(lam, 0.0, 1.0), np.inf)
        region = np.full(lam.shape, OUTER, dtype=np.int64)

        for idx, inc in enumerate(domain.inclusions):
            px = x0 - inc.center.x
            py = y0 - inc.center.y
            r2 = inc.radius * inc.radius
            c = px * px + py * py - r2
            b = 2.0 * (px * dx + py * dy)
            disc = b * b - 4.0 * a * c
            approaching = (b < 0) & (disc >= 0) & (a > 0)
            root = np.where(approaching, 2.0 * c / (-b + np.sqrt(np.maximum(disc, 0.0))), np.inf)
            ends_inside = (x1 - inc.center.x) ** 2 + (y1 - inc.center.y) ** 2 <= r2
            root = np.where(ends_inside, np.minimum(root, 1.0), root)
            root = np.where(root <= 1.0, np.maximum(root, 0.0), np.inf)
            root = np.where(c <= 0, 0.0, root)
            better = root < lam
            lam = np.where(better, root, lam)
            region = np.where(better, idx, region)

    hit = np.isfinite(lam)
    safe = np.where(hit, lam, 0.0)
    hx = x0 + safe * dx
    hy = y0 + safe * dy
    outer_hit = hit & (region == OUTER)
    if domain.outer_shape == OuterShape.SQUARE:
        # put hits exactly on the crossed edge
        snap_x = outer_hit & (lam_x <= lam_y)
        snap_y = outer_hit & ~snap_x
        hx = np.where(snap_x, np.where(x1 >= w, w, -w), np.clip(hx, -w, w))
        hy = np.where(snap_y, np.where(y1 >= w, w, -w), np.clip(hy, -w, w))
    else:
        r = np.hypot(hx, hy)
        with np.errstate(invalid="ignore", divide="ignore"):
            scale = np.where(outer_hit & (r > 0), w / r, 1.0)
        hx = hx * scale
        hy = hy * scale
    hx = np.where(hit, hx, np.nan)
    hy = np.where(hit, hy, np.nan)
    return SegmentExits(hit=hit, fraction=lam, region=region, x=hx, y=hy)


def segment_exit(domain: DomainSpec, p0: Point2, p1: Point2) -> Optional[SegmentHit]:
    if not classify(domain, p0).is_interior:
        raise UsageError(f"Segment start ({p0.x}, {p0.y}) is not inside the domain")
    exits = segment_exits(domain, p0.x, p0.y, p1.x, p1.y)
    if not bool(exits.hit):
        return None
    return SegmentHit(hit=Point2(float(exits.x), float(exits.y)), region_id=int(exits.region), fraction=float(exits.fraction))


def encode_value(value) -> np.ndarray:
    """Map [-1, 1] onto codes 1..127 with -1, 0, +1 landing exactly on 1, 64, 127."""
    codes = np.rint(np.asarray(value, dtype=np.float64) * CODE_SCALE) + CODE_ZERO
    return np.clip(codes, 1, 127).astype(np.uint8)


def decode_value(code) -> np.ndarray:
    return (np.asarray(code, dtype=np.float64) - CODE_ZERO) / CODE_SCALE


@dataclass(frozen=True, eq=False)
class LookupBoundaryOracle:
    """
    Quantized boundary function generator. ``words`` holds resolution^2 bytes in row-major
    order (row j is y, column i is x); bit 7 of a word is the characteristic flag (set
    outside the domain) and bits 0-6 the value code.
    """

    resolution: int
    words: np.ndarray = field(repr=False)
    value_bits: int = VALUE_BITS
    extent: float = 1.0

    def __post_init__(self) -> None:
        _check_lookup_shape(self.resolution, self.value_bits)
        if self.words.dtype != np.uint8 or self.words.size != self.resolution**2:
            raise UsageError(f"Lookup table needs {self.resolution ** 2} bytes, got {self.words.size}")
        self.words.setflags(write=False)

    @property
    def cell_size(self) -> float:
        return 2.0 * self.extent / self.resolution

    def cell_centers(self) -> np.ndarray:
        return -self.extent + (np.arange(self.resolution) + 0.5) * self.cell_size


def _check_lookup_shape(resolution: int, value_bits: int) -> None:
    if not (16 <= resolution <= 4096) or resolution & (resolution - 1):
        raise UsageError(f"Lookup resolution must be a power of two in [16, 4096], got {resolution}")
    if value_bits != VALUE_BITS:
        raise UsageError(f"Only {VALUE_BITS}-bit lookup values are supported, got {value_bits}")


def build_lookup(
    domain: DomainSpec, resolution: int = 256, value_bits: int = VALUE_BITS, extent: Optional[float] = None
) -> LookupBoundaryOracle:
    _check_lookup_shape(resolution, value_bits)
    extent = domain.outer_half_width if extent is None else extent
    centers = -extent + (np.arange(resolution) + 0.5) * (2.0 * extent / resolution)
    xs, ys = np.meshgrid(centers, centers)
    kind, region = classify_points(domain, xs, ys)
    chi = kind != RegionKind.INTERIOR
    values = np.where(chi, boundary_values_at(domain, region, xs, ys), 0.0)
    words = encode_value(values) | np.where(chi, CHI_FLAG, 0).astype(np.uint8)
    logger.debug(f"Built {resolution}x{resolution} lookup table, {int(chi.sum())} halt cells")
    return LookupBoundaryOracle(resolution=resolution, words=words.ravel(), value_bits=value_bits, extent=extent)


def lookup_indices(oracle: LookupBoundaryOracle, x, y) -> tuple[np.ndarray, np.ndarray]:
    """ADC conversion: out-of-range inputs saturate to the edge cells."""
    res = oracle.resolution
    scale = res / (2.0 * oracle.extent)
    i = np.clip(np.floor((np.asarray(x, dtype=np.float64) + oracle.extent) * scale), 0, res - 1).astype(np.int64)
    j = np.clip(np.floor((np.asarray(y, dtype=np.float64) + oracle.extent) * scale), 0, res - 1).astype(np.int64)
    return i, j


def lookup_values(oracle: LookupBoundaryOracle, x, y) -> tuple[np.ndarray, np.ndarray]:
    i, j = lookup_indices(oracle, x, y)
    word = oracle.words[j * oracle.resolution + i]
    return (word & CHI_FLAG) != 0, decode_value(word & (CHI_FLAG - 1))


def lookup_query(oracle: LookupBoundaryOracle, p: Point2) -> tuple[bool, float]:
    chi, value = lookup_values(oracle, p.x, p.y)
    return bool(chi), float(value)


def write_lookup(oracle: LookupBoundaryOracle, path: str | Path) -> int:
    """Write the table with its 16-byte header. Returns the file size in bytes."""
    payload = LUT_HEADER.pack(LUT_MAGIC, oracle.resolution, oracle.value_bits) + oracle.words.tobytes()
    Path(path).write_bytes(payload)
    return len(payload)


def read_lookup(path: str | Path, extent: float = 1.0) -> LookupBoundaryOracle:
    """Read a table written by write_lookup. The file does not store the extent; the caller supplies it."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FileFormatError(f"Unable to read lookup table {path}: {exc}") from exc
    if len(data) < LUT_HEADER.size:
        raise FileFormatError(f"{path} is too short to hold a lookup table header")
    magic, resolution, value_bits = LUT_HEADER.unpack_from(data)
    if magic != LUT_MAGIC:
        raise FileFormatError(f"{path} is not a lookup table (bad magic {magic!r})")
    try:
        _check_lookup_shape(resolution, value_bits)
    except UsageError as exc:
        raise FileFormatError(f"{path}: {exc}") from exc
    payload = data[LUT_HEADER.size :]
    if len(payload) != resolution * resolution:
        raise FileFormatError(f"{path} holds {len(payload)} table bytes, expected {resolution * resolution}")
    words = np.frombuffer(payload, dtype=np.uint8).copy()
    return LookupBoundaryOracle(resolution=resolution, words=words, value_bits=value_bits, extent=extent)
