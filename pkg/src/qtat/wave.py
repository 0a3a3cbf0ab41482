"""Explicit leapfrog solution of the hyperbolic Cauchy problem and synthetic data traces.

The initial condition must be compactly supported strictly inside its grid
box.  The solver embeds it in a padded box sized so that nothing meaningful
reaches the outer boundary before the final time: free-space data on the
measurement surfaces is then exact up to the scheme's own truncation error,
with no absorbing-boundary modeling error.

Time stepping is the classical second-order leapfrog
``u^{m+1} = 2 u^m - u^{m-1} + dt^2 L u^m`` with
``dt = cfl * h_min / sqrt(n * mu2)`` and a first step
``u^1 = u^0 + (dt^2 / 2) L u^0`` that enforces ``u_t(.,0) = 0`` to second
order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InvalidData,
    InvalidGeometry,
    InvalidInitialCondition,
    SolverFailure,
    UnstableConfiguration,
)
from .grid import Field, GeometrySpec, Grid, MeasurementKind, SpaceTimeField
from .operators import EllipticOperator

SUPPORT_TOL = 1e-12  # relative threshold defining the numerical support


@dataclass
class GrowthBound:
    """Majorant max_x |u(x,t)| <= B * exp(d*t) over the recorded frames."""

    B: float
    d: float

    def envelope(self, t):
        return self.B * np.exp(self.d * np.asarray(t))


@dataclass
class FaceTrace:
    """Values recorded on one grid-aligned face of the measurement surface.

    ``axis``/``side`` identify the face, ``position`` its coordinate along
    ``axis``.  ``origin``/``spacing`` describe the (ndim-1)-dimensional surface
    grid; both are empty in one space dimension, where the face is a point.
    ``values`` has shape ``(nt,) + surface shape``.
    """

    axis: int
    side: str
    position: float
    origin: tuple[float, ...]
    spacing: tuple[float, ...]
    values: np.ndarray

    @property
    def surface_shape(self) -> tuple[int, ...]:
        return self.values.shape[1:]

    def cell_measure(self) -> float:
        return float(np.prod(self.spacing)) if self.spacing else 1.0


@dataclass
class BoundaryTrace:
    """Dirichlet (and optionally Neumann) time series on a measurement surface.

    ``surface`` is "S" for the full lateral boundary or "P1" for the
    hyperplane patch.  ``times`` is shared by every face; hyperbolic traces
    are uniform in time, transformed traces live on the clustered target grid.
    ``neumann`` when present is a list of arrays parallel to ``faces``.
    """

    surface: str
    times: np.ndarray
    faces: list[FaceTrace]
    neumann: list[np.ndarray] | None = None
    tail_bounds: list = field(default_factory=list)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        for f in self.faces:
            if f.values.shape[0] != self.times.size:
                raise InvalidData("face values and time grid are inconsistent")
        if self.neumann is not None:
            for f, nv in zip(self.faces, self.neumann):
                if nv.shape != f.values.shape:
                    raise InvalidData("neumann values must mirror the dirichlet sampling")

    @property
    def dt(self) -> float:
        steps = np.diff(self.times)
        if not np.allclose(steps, steps[0], rtol=1e-12, atol=0.0):
            raise InvalidData("trace time grid is not uniform; use .times")
        return float(steps[0])

    def scaled(self, factor: float) -> "BoundaryTrace":
        return BoundaryTrace(
            surface=self.surface,
            times=self.times.copy(),
            faces=[
                FaceTrace(f.axis, f.side, f.position, f.origin, f.spacing, factor * f.values)
                for f in self.faces
            ],
            neumann=None if self.neumann is None else [factor * nv for nv in self.neumann],
        )

    def sup_norm(self) -> float:
        return max(float(np.abs(f.values).max()) for f in self.faces)


@dataclass
class WaveRun:
    """Recorded forward solution on the padded box."""

    u: SpaceTimeField
    cfl_used: float
    padding: tuple[int, ...]
    T: float


def _support_box(values, grid):
    """Bounding index box of the numerical support, or None for a zero field."""
    peak = np.abs(values).max()
    if peak == 0.0:
        return None
    mask = np.abs(values) > SUPPORT_TOL * peak
    idx = np.nonzero(mask)
    return [(int(ix.min()), int(ix.max())) for ix in idx]


def stability_dt(op: EllipticOperator, grid: Grid, cfl: float) -> float:
    return cfl * grid.hmin / math.sqrt(grid.ndim * op.mu2)


def _edge_mask(grid: Grid) -> np.ndarray:
    mask = np.zeros(grid.shape, dtype=bool)
    for ax in range(grid.ndim):
        sl = [slice(None)] * grid.ndim
        for edge in (0, -1):
            sl[ax] = edge
            mask[tuple(sl)] = True
    return mask


def leapfrog_frames(op, grid, u0, T, cfl, first_pair=None, pin_boundary=False,
                    dt=None, steps=None):
    """Core leapfrog time stepper; no support policing, no padding.

    ``first_pair`` overrides the symmetric start with explicit
    ``(u_previous, u_current)`` frames (used to restart from a recorded state).
    ``pin_boundary`` holds the outermost node layer at zero, which realizes a
    homogeneous Dirichlet box (and on a padded box guarantees the recorded
    support never leaves it).  ``dt``/``steps`` override the stability
    choice, e.g. to restart bit-compatibly from an existing run.
    Returns (times, frames) with frames of shape ``(steps+1,) + grid.shape``.
    """
    if not (0.0 < cfl < 1.0):
        raise UnstableConfiguration(f"cfl must be in (0, 1), got {cfl}")
    if dt is None or steps is None:
        dt0 = stability_dt(op, grid, cfl)
        steps = max(2, int(math.ceil(T / dt0 - 1e-12)))
        dt = T / steps
    edge = _edge_mask(grid) if pin_boundary else None
    L = op.matrix(grid)
    frames = np.empty((steps + 1,) + grid.shape)
    if first_pair is None:
        u_cur = np.asarray(u0, dtype=float).copy()
        if edge is not None:
            u_cur[edge] = 0.0
        u_next = u_cur + 0.5 * dt * dt * (L @ u_cur.ravel()).reshape(grid.shape)
        if edge is not None:
            u_next[edge] = 0.0
        frames[0] = u_cur
        frames[1] = u_next
        u_prev, u_cur = u_cur, u_next
        start = 1
    else:
        u_prev = np.asarray(first_pair[0], dtype=float)
        u_cur = np.asarray(first_pair[1], dtype=float)
        frames[0] = u_cur
        start = 0
    for m in range(start, steps):
        u_new = 2.0 * u_cur - u_prev + dt * dt * (L @ u_cur.ravel()).reshape(grid.shape)
        if edge is not None:
            u_new[edge] = 0.0
        frames[m + 1] = u_new
        u_prev, u_cur = u_cur, u_new
    times = dt * np.arange(steps + 1)
    return times, frames


def solve_wave(op: EllipticOperator, f: Field, T: float, cfl: float,
               pad_margin_nodes: int = 40) -> WaveRun:
    """Forward wave solve from ``u = f``, ``u_t = 0`` on a padded free-space box.

    Padding per side covers the physical cone ``sqrt(mu2) * T`` plus a margin
    of nodes for the evanescent numerical front, so the recorded solution is a
    free-space solution to solver accuracy.
    """
    if not (0.0 < cfl < 1.0):
        raise UnstableConfiguration(f"cfl must be in (0, 1), got {cfl}")
    f.check_finite()
    grid = f.grid
    box = _support_box(f.values, grid)
    if box is not None:
        for ax, (lo, hi) in enumerate(box):
            if lo <= 0 or hi >= grid.counts[ax] - 1:
                raise InvalidInitialCondition(
                    "initial condition support touches the domain boundary"
                )
    pad = tuple(
        int(math.ceil(math.sqrt(op.mu2) * T / h)) + pad_margin_nodes for h in grid.spacing
    )
    padded = Grid(
        origin=tuple(o - p * h for o, h, p in zip(grid.origin, grid.spacing, pad)),
        spacing=grid.spacing,
        counts=tuple(n + 2 * p for n, p in zip(grid.counts, pad)),
    )
    u0 = np.zeros(padded.shape)
    inner = tuple(slice(p, p + n) for p, n in zip(pad, grid.counts))
    u0[inner] = f.values
    times, frames = leapfrog_frames(op, padded, u0, T, cfl, pin_boundary=True)
    if not np.all(np.isfinite(frames[-1])):
        raise SolverFailure("wave solve produced non-finite values "
                            "(operator likely not hyperbolic on the padded box)")
    u = SpaceTimeField(padded, times, frames)
    return WaveRun(u=u, cfl_used=cfl, padding=pad, T=float(T))


def _face_trace(run: WaveRun, axis: int, side: str, position: float,
                window_lo=None, window_hi=None) -> FaceTrace:
    grid = run.u.grid
    idx = grid.index_of(position, axis)
    slicer = [slice(None)] * (grid.ndim + 1)
    slicer[axis + 1] = idx
    values = run.u.values[tuple(slicer)]
    origin, spacing = [], []
    keep = [slice(None)]  # time axis
    for ax in range(grid.ndim):
        if ax == axis:
            continue
        coords = grid.axis(ax)
        lo = -np.inf if window_lo is None else window_lo[ax]
        hi = np.inf if window_hi is None else window_hi[ax]
        sel = np.nonzero((coords >= lo - 1e-12) & (coords <= hi + 1e-12))[0]
        if sel.size < 1:
            raise InvalidGeometry("measurement window contains no grid nodes")
        keep.append(slice(sel[0], sel[-1] + 1))
        origin.append(float(coords[sel[0]]))
        spacing.append(grid.spacing[ax])
    values = values[tuple(keep)].copy()
    return FaceTrace(axis=axis, side=side, position=float(position),
                     origin=tuple(origin), spacing=tuple(spacing), values=values)


def extract_trace_ip1(run: WaveRun, geometry: GeometrySpec) -> BoundaryTrace:
    """Dirichlet values on every face of the (grid-aligned) box boundary."""
    if geometry.measurement_kind is not MeasurementKind.FULL_BOUNDARY:
        raise InvalidGeometry("IP1 trace extraction needs full-boundary geometry")
    lo, hi = geometry.omega_box
    faces = []
    window_lo = [v for v in lo]
    window_hi = [v for v in hi]
    for ax in range(run.u.grid.ndim):
        for side, pos in (("lo", lo[ax]), ("hi", hi[ax])):
            faces.append(_face_trace(run, ax, side, pos, window_lo, window_hi))
    return BoundaryTrace(surface="S", times=run.u.times.copy(), faces=faces)


def extract_trace_ip2(run: WaveRun, geometry: GeometrySpec) -> BoundaryTrace:
    """Dirichlet values on the hyperplane patch x1 = const, x_bar in the phi box."""
    if geometry.measurement_kind is not MeasurementKind.HYPERPLANE:
        raise InvalidGeometry("IP2 trace extraction needs hyperplane geometry")
    ndim = run.u.grid.ndim
    window_lo = [geometry.phi_bar[0]] * ndim
    window_hi = [geometry.phi_bar[1]] * ndim
    face = _face_trace(run, 0, "lo", geometry.hyperplane_axis_value, window_lo, window_hi)
    return BoundaryTrace(surface="P1", times=run.u.times.copy(), faces=[face])


def estimate_growth_bound(run: WaveRun) -> GrowthBound:
    """Tightest (B, d) with max|u(.,t)| <= B exp(d t) over recorded frames.

    The exponent comes from a least-squares fit of log max|u| against t,
    clipped at zero; B is then shifted up so the envelope majorizes every
    recorded frame.
    """
    if run.u.nt < 10:
        raise InvalidData("growth estimation needs at least 10 recorded frames")
    norms = np.abs(run.u.values).reshape(run.u.nt, -1).max(axis=1)
    if norms.max() == 0.0:
        return GrowthBound(0.0, 0.0)
    t = run.u.times
    safe = np.clip(norms, 1e-300, None)
    slope = np.polyfit(t, np.log(safe), 1)[0]
    d = max(0.0, float(slope))
    B = float(np.max(norms * np.exp(-d * t)))
    return GrowthBound(B=B, d=d)


def growth_bound_from_trace(trace: BoundaryTrace) -> GrowthBound:
    """Growth majorant of a recorded trace, for transform tail accounting."""
    norms = None
    for f in trace.faces:
        m = np.abs(f.values).reshape(f.values.shape[0], -1).max(axis=1)
        norms = m if norms is None else np.maximum(norms, m)
    if norms.max() == 0.0:
        return GrowthBound(0.0, 0.0)
    t = trace.times
    slope = np.polyfit(t, np.log(np.clip(norms, 1e-300, None)), 1)[0]
    d = max(0.0, float(slope))
    return GrowthBound(B=float(np.max(norms * np.exp(-d * t))), d=d)
