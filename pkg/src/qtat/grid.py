"""Uniform tensor-product grids, domain descriptions, and the normalizing change of variables.

Space grids are uniform per axis with nodes at ``origin + i*spacing``.  Spatial
domains are predicates rasterized to node masks; the only surfaces used by the
solvers are grid-aligned box faces and the hyperplane ``x1 = 0``, so no mesh
machinery is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import InvalidGeometry


@dataclass(frozen=True)
class Grid:
    """Uniform tensor-product grid.

    Attributes:
        origin: coordinate of the first node on each axis.
        spacing: node spacing per axis, strictly positive.
        counts: number of nodes per axis, at least 3 (stencil width).
    """

    origin: tuple[float, ...]
    spacing: tuple[float, ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        if not (len(self.origin) == len(self.spacing) == len(self.counts)):
            raise InvalidGeometry("origin, spacing and counts must have equal length")
        if any(h <= 0 for h in self.spacing):
            raise InvalidGeometry("grid spacing must be strictly positive")
        if any(n < 3 for n in self.counts):
            raise InvalidGeometry("grids need at least 3 nodes per axis")

    @property
    def ndim(self) -> int:
        return len(self.counts)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.counts

    @property
    def hmin(self) -> float:
        return min(self.spacing)

    def axis(self, i: int) -> np.ndarray:
        """1-D node coordinates along axis ``i``."""
        return self.origin[i] + self.spacing[i] * np.arange(self.counts[i])

    def axes(self) -> list[np.ndarray]:
        return [self.axis(i) for i in range(self.ndim)]

    def meshgrid(self) -> list[np.ndarray]:
        return list(np.meshgrid(*self.axes(), indexing="ij"))

    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.asarray(self.origin, dtype=float)
        hi = lo + (np.asarray(self.counts) - 1) * np.asarray(self.spacing)
        return lo, hi

    def index_of(self, coord: float, axis: int) -> int:
        """Index of the node nearest ``coord`` on ``axis``; raises if not grid-aligned."""
        k = (coord - self.origin[axis]) / self.spacing[axis]
        ki = int(round(k))
        if not (0 <= ki < self.counts[axis]) or abs(k - ki) > 1e-9:
            raise InvalidGeometry(
                f"coordinate {coord} is not aligned with axis {axis} of the grid"
            )
        return ki


def build_grid(bounds, resolution) -> Grid:
    """Uniform grid covering ``bounds`` exactly, endpoints included.

    Args:
        bounds: sequence of (lo, hi) per axis, or a single (lo, hi) pair in 1-D.
        resolution: node count per axis (scalar in 1-D), at least 3.
    """
    bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
    resolution = np.atleast_1d(np.asarray(resolution, dtype=int))
    if bounds.shape[0] != resolution.shape[0]:
        raise InvalidGeometry("bounds and resolution must describe the same number of axes")
    if np.any(resolution < 3):
        raise InvalidGeometry("resolution must be at least 3 nodes per axis")
    lo, hi = bounds[:, 0], bounds[:, 1]
    if np.any(hi <= lo):
        raise InvalidGeometry("degenerate box: each axis needs hi > lo")
    spacing = (hi - lo) / (resolution - 1)
    return Grid(tuple(lo), tuple(spacing), tuple(int(n) for n in resolution))


@dataclass
class Field:
    """Scalar grid function: one value per node, shape ``grid.counts``."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise InvalidGeometry(
                f"field shape {self.values.shape} does not match grid {self.grid.shape}"
            )

    def check_finite(self):
        if not np.all(np.isfinite(self.values)):
            raise FloatingPointError("field contains NaN or Inf")
        return self

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())


@dataclass
class SpaceTimeField:
    """Stack of fields on a shared spatial grid over a (possibly nonuniform) time grid.

    ``values`` has shape ``(len(times),) + grid.counts``.  ``dt`` is defined only
    when the time grid is uniform; solvers that need nonuniform steps read
    ``times`` directly.
    """

    grid: Grid
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.ndim != 1 or self.times.size < 2:
            raise InvalidGeometry("a space-time field needs at least 2 frames")
        if self.values.shape != (self.times.size,) + self.grid.shape:
            raise InvalidGeometry("space-time values must have shape (nt,) + grid.shape")
        if np.any(np.diff(self.times) <= 0):
            raise InvalidGeometry("time grid must be strictly increasing")

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def nt(self) -> int:
        return int(self.times.size)

    @property
    def dt(self) -> float:
        steps = np.diff(self.times)
        if not np.allclose(steps, steps[0], rtol=1e-12, atol=0.0):
            raise InvalidGeometry("time grid is not uniform; use .times")
        return float(steps[0])

    def frame(self, k: int) -> Field:
        return Field(self.grid, self.values[k])


class MeasurementKind(Enum):
    FULL_BOUNDARY = "full_boundary"  # data on all of the lateral boundary (IP1)
    HYPERPLANE = "hyperplane"        # data on the hyperplane x1 = 0 (IP2)


@dataclass
class GeometrySpec:
    """Spatial domain, measurement surface, and the space-time box of the reconstruction.

    ``omega_box`` is the bounding box of the support domain; ``omega_indicator``
    may refine it to a sub-region (default: the open box itself).  For
    hyperplane measurements the domain must lie in ``{x1 > 0}`` and, once
    normalized, inside the paraboloid ``x1 + |x_bar|^2 < 1/4``.
    """

    ndim: int
    measurement_kind: MeasurementKind
    omega_box: tuple[np.ndarray, np.ndarray]
    omega_indicator: object = None
    phi_x1: tuple[float, float] = (0.0, 1.0)
    phi_bar: tuple[float, float] = (-1.0, 1.0)
    phi_t: tuple[float, float] = (0.0, 1.0)
    hyperplane_axis_value: float = 0.0

    def __post_init__(self):
        lo = np.asarray(self.omega_box[0], dtype=float).reshape(self.ndim)
        hi = np.asarray(self.omega_box[1], dtype=float).reshape(self.ndim)
        if np.any(hi <= lo):
            raise InvalidGeometry("omega_box is degenerate")
        self.omega_box = (lo, hi)
        if self.measurement_kind is MeasurementKind.HYPERPLANE:
            if lo[0] <= self.hyperplane_axis_value:
                raise InvalidGeometry(
                    "hyperplane measurements require the domain inside {x1 > 0}"
                )
        if self.omega_indicator is None:
            self.omega_indicator = _box_indicator(lo, hi)

    def inside_paraboloid(self) -> bool:
        """Whether the omega box satisfies the normalized inclusion x1 + |x_bar|^2 < 1/4."""
        lo, hi = self.omega_box
        corner = hi[0] + float(np.sum(np.maximum(np.abs(lo[1:]), np.abs(hi[1:])) ** 2))
        return corner < 0.25 and lo[0] > 0.0


def _box_indicator(lo, hi):
    def indicator(points):
        points = np.asarray(points, dtype=float)
        return np.all((points > lo) & (points < hi), axis=-1)

    return indicator


@dataclass(frozen=True)
class ScaleRecord:
    """Change of variables x' = s*x, t' = d*t used to normalize the geometry.

    ``s`` is the spatial stretch, so a point x in original coordinates maps
    to s*x; ``d`` is the time stretch.  Fields keep their node values; only grid
    coordinates are rescaled, which makes the mapping exactly invertible on
    node values.
    """

    s: float = 1.0
    d: float = 1.0

    @property
    def identity(self) -> bool:
        return self.s == 1.0 and self.d == 1.0

    def map_field(self, f: Field) -> Field:
        g = f.grid
        grid = Grid(
            tuple(o * self.s for o in g.origin),
            tuple(h * self.s for h in g.spacing),
            g.counts,
        )
        return Field(grid, f.values)

    def unmap_field(self, f: Field) -> Field:
        g = f.grid
        grid = Grid(
            tuple(o / self.s for o in g.origin),
            tuple(h / self.s for h in g.spacing),
            g.counts,
        )
        return Field(grid, f.values)


def normalize_geometry(geometry: GeometrySpec, op) -> tuple[GeometrySpec, object, ScaleRecord]:
    """Rescale space and time so the domain fits inside the paraboloid x1 + |x_bar|^2 < 1/4.

    Uses the substitution x' = sqrt(c)*x, t' = d*t with d = c, under which the
    parabolic operator coefficients transform as a -> (c/d) a = a,
    b -> (sqrt(c)/d) b, b0 -> (1/d) b0, keeping the ellipticity bounds of the
    principal part unchanged.  Returns the scaled geometry, the scaled
    operator, and the record needed to map reconstructions back.
    """
    lo, hi = geometry.omega_box
    if lo[0] <= 0.0:
        raise InvalidGeometry("domain must lie strictly inside {x1 > 0}")
    if geometry.inside_paraboloid():
        return geometry, op, ScaleRecord(1.0, 1.0)

    # Largest s with s*hi[0] + s^2*B < 1/4 over box corners, then a 5% margin.
    a = float(hi[0])
    b = float(np.sum(np.maximum(np.abs(lo[1:]), np.abs(hi[1:])) ** 2))
    if b > 0:
        s_max = (-a + math.sqrt(a * a + b)) / (2.0 * b)
    else:
        s_max = 0.25 / a
    s = 0.95 * s_max
    c = s * s
    record = ScaleRecord(s=s, d=c)

    scaled = replace(
        geometry,
        omega_box=(lo * s, hi * s),
        omega_indicator=_scaled_indicator(geometry.omega_indicator, s),
        hyperplane_axis_value=geometry.hyperplane_axis_value * s,
    )
    if not scaled.inside_paraboloid():
        raise InvalidGeometry("normalization failed to reach the paraboloid inclusion")
    scaled_op = op.rescaled(record) if op is not None else None
    return scaled, scaled_op, record


def _scaled_indicator(indicator, s):
    def scaled(points):
        return indicator(np.asarray(points, dtype=float) / s)

    return scaled


@dataclass
class DomainMask:
    """Node-wise indicator of the domain plus the flagged boundary layer."""

    inside: np.ndarray
    boundary: np.ndarray


def domain_mask(grid: Grid, geometry: GeometrySpec) -> DomainMask:
    """Rasterize the domain onto the grid.

    ``inside`` marks nodes where the indicator holds; ``boundary`` marks nodes
    within half a spacing of an omega box face (used for trace extraction on
    grid-aligned boxes).
    """
    pts = np.stack(grid.meshgrid(), axis=-1)
    inside = np.asarray(geometry.omega_indicator(pts), dtype=bool)

    lo, hi = geometry.omega_box
    h = np.asarray(grid.spacing)
    near_face = np.zeros(grid.shape, dtype=bool)
    in_box_closed = np.all((pts >= lo - 0.5 * h) & (pts <= hi + 0.5 * h), axis=-1)
    for ax in range(grid.ndim):
        for face in (lo[ax], hi[ax]):
            on_face = np.abs(pts[..., ax] - face) <= 0.5 * h[ax]
            near_face |= on_face & in_box_closed
    return DomainMask(inside=inside & ~near_face, boundary=near_face)
