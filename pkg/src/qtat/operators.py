"""Variable-coefficient second-order elliptic operators and their discrete application.

The operator is kept in non-divergence form

    L u = sum_ij a_ij(x) u_{x_i x_j} + sum_j b_j(x) u_{x_j} + b_0(x) u

with symmetric ``a`` whose node-wise eigenvalues must lie in ``[mu1, mu2]``.
Derivatives use second-order central differences inside the grid; the
outermost layer uses one-sided second-order stencils, and mixed terms the
standard four-point cross (composed first-derivative matrices).  Coefficients
are callables rasterized once per grid and cached, so the same operator can be
applied on the padded wave box, the reconstruction box, and exterior slabs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import InvalidGeometry, InvalidOperator
from .grid import Field, Grid, ScaleRecord


def _coeff_callable(coeff, ndim):
    if coeff is None:
        return None
    if callable(coeff):
        return coeff
    value = float(coeff)
    if value == 0.0:
        return None
    return lambda points: np.full(np.asarray(points).shape[:-1], value)


def d1_matrix(n: int, h: float) -> sp.csr_matrix:
    """First-derivative matrix: central inside, one-sided second order at the ends."""
    rows, cols, vals = [], [], []
    for i in range(1, n - 1):
        rows += [i, i]
        cols += [i - 1, i + 1]
        vals += [-0.5 / h, 0.5 / h]
    rows += [0, 0, 0]
    cols += [0, 1, 2]
    vals += [-1.5 / h, 2.0 / h, -0.5 / h]
    rows += [n - 1, n - 1, n - 1]
    cols += [n - 1, n - 2, n - 3]
    vals += [1.5 / h, -2.0 / h, 0.5 / h]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def d2_matrix(n: int, h: float) -> sp.csr_matrix:
    """Second-derivative matrix: central inside, one-sided at the ends.

    The one-sided rows are second order when four nodes are available; on a
    three-node axis they fall back to the centered stencil, which is still
    exact on quadratics.
    """
    h2 = h * h
    rows, cols, vals = [], [], []
    for i in range(1, n - 1):
        rows += [i, i, i]
        cols += [i - 1, i, i + 1]
        vals += [1.0 / h2, -2.0 / h2, 1.0 / h2]
    if n >= 4:
        rows += [0, 0, 0, 0]
        cols += [0, 1, 2, 3]
        vals += [2.0 / h2, -5.0 / h2, 4.0 / h2, -1.0 / h2]
        rows += [n - 1, n - 1, n - 1, n - 1]
        cols += [n - 1, n - 2, n - 3, n - 4]
        vals += [2.0 / h2, -5.0 / h2, 4.0 / h2, -1.0 / h2]
    else:
        for i in (0, n - 1):
            rows += [i, i, i]
            cols += [0, 1, 2]
            vals += [1.0 / h2, -2.0 / h2, 1.0 / h2]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def axis_operator(grid: Grid, axis: int, mat_1d: sp.spmatrix) -> sp.csr_matrix:
    """Lift a 1-D matrix on ``axis`` to the full tensor-product grid."""
    out = None
    for ax, n in enumerate(grid.counts):
        block = mat_1d if ax == axis else sp.identity(n, format="csr")
        out = block if out is None else sp.kron(out, block, format="csr")
    return out.tocsr()


class EllipticOperator:
    """Elliptic operator with callable coefficients and claimed ellipticity bounds."""

    def __init__(self, ndim, a, b=None, b0=None, mu1=1.0, mu2=1.0, grid=None):
        """
        Args:
            ndim: space dimension.
            a: mapping (i, j) -> coefficient (number or callable on points);
               symmetric entries may be given once, on either triangle.
            b: mapping j -> first-order coefficient, optional.
            b0: zeroth-order coefficient, optional.
            mu1, mu2: claimed bounds on the eigenvalues of [a_ij].
            grid: optional reference grid for validation reports.
        """
        if mu1 <= 0 or mu2 < mu1:
            raise InvalidOperator("ellipticity bounds need 0 < mu1 <= mu2")
        self.ndim = int(ndim)
        self.mu1 = float(mu1)
        self.mu2 = float(mu2)
        self.grid = grid
        self._a = {}
        for (i, j), coeff in dict(a).items():
            key = (min(i, j), max(i, j))
            if key in self._a:
                prev = self._a[key]
                same = prev is coeff or (
                    not callable(coeff) and not callable(prev) and float(coeff) == float(prev)
                )
                if not same:
                    raise InvalidOperator(
                        f"principal coefficients a{key} given twice with different values"
                    )
                continue
            self._a[key] = coeff
        self._a = {key: _coeff_callable(c, ndim) for key, c in self._a.items()}
        self._b = {int(j): _coeff_callable(c, ndim) for j, c in (b or {}).items()}
        self._b0 = _coeff_callable(b0, ndim)
        self._cache = {}

    @classmethod
    def laplacian(cls, ndim, grid=None):
        return cls(ndim, {(i, i): 1.0 for i in range(ndim)}, mu1=1.0, mu2=1.0, grid=grid)

    @classmethod
    def from_wave_speed(cls, c2, ndim, mu1, mu2, grid=None):
        """Operator c^2(x) * Laplacian, the classical acoustics case."""
        fn = _coeff_callable(c2, ndim)
        return cls(ndim, {(i, i): fn for i in range(ndim)}, mu1=mu1, mu2=mu2, grid=grid)

    def rescaled(self, record: ScaleRecord) -> "EllipticOperator":
        """Coefficients after x' = s*x, t' = d*t applied to the parabolic problem.

        a scales by c/d, b by sqrt(c)/d, b0 by 1/d (c = s^2), each evaluated at
        the pre-image x'/s.
        """
        s, d = record.s, record.d
        c = s * s
        pull = lambda fn, factor: (
            None if fn is None else (lambda pts, fn=fn, k=factor: k * fn(np.asarray(pts) / s))
        )
        a = {key: pull(fn, c / d) for key, fn in self._a.items()}
        b = {j: pull(fn, s / d) for j, fn in self._b.items()}
        b0 = pull(self._b0, 1.0 / d)
        return EllipticOperator(
            self.ndim, a, b, b0, mu1=self.mu1 * c / d, mu2=self.mu2 * c / d
        )

    # -- rasterization ----------------------------------------------------

    def coefficient_tensor(self, grid: Grid) -> np.ndarray:
        """Symmetric (ndim, ndim, *grid.shape) array of principal coefficients."""
        key = ("a", grid)
        if key not in self._cache:
            pts = np.stack(grid.meshgrid(), axis=-1)
            a = np.zeros((self.ndim, self.ndim) + grid.shape)
            for (i, j), fn in self._a.items():
                if fn is None:
                    continue
                vals = fn(pts)
                a[i, j] = vals
                a[j, i] = vals
            self._cache[key] = a
        return self._cache[key]

    def lower_order_values(self, grid: Grid):
        key = ("b", grid)
        if key not in self._cache:
            pts = np.stack(grid.meshgrid(), axis=-1)
            b = {j: fn(pts) for j, fn in self._b.items() if fn is not None}
            b0 = self._b0(pts) if self._b0 is not None else None
            self._cache[key] = (b, b0)
        return self._cache[key]

    def matrix(self, grid: Grid, principal_only: bool = False) -> sp.csr_matrix:
        """Sparse matrix of L (or its principal part) on the grid, row per node."""
        if grid.ndim != self.ndim:
            raise InvalidGeometry("grid dimension does not match the operator")
        key = ("L0" if principal_only else "L", grid)
        if key not in self._cache:
            d1 = [axis_operator(grid, ax, d1_matrix(grid.counts[ax], grid.spacing[ax]))
                  for ax in range(grid.ndim)]
            d2 = [axis_operator(grid, ax, d2_matrix(grid.counts[ax], grid.spacing[ax]))
                  for ax in range(grid.ndim)]
            a = self.coefficient_tensor(grid)
            mat = None
            for i in range(self.ndim):
                for j in range(i, self.ndim):
                    if not np.any(a[i, j]):
                        continue
                    coeff = sp.diags(a[i, j].ravel())
                    term = d2[i] if i == j else (d1[i] @ d1[j]).tocsr()
                    factor = 1.0 if i == j else 2.0
                    block = (factor * coeff) @ term
                    mat = block if mat is None else mat + block
            if mat is None:
                mat = sp.csr_matrix((grid_size(grid), grid_size(grid)))
            if not principal_only:
                b, b0 = self.lower_order_values(grid)
                for j, vals in b.items():
                    mat = mat + sp.diags(vals.ravel()) @ d1[j]
                if b0 is not None:
                    mat = mat + sp.diags(b0.ravel())
            self._cache[key] = mat.tocsr()
        return self._cache[key]


def grid_size(grid: Grid) -> int:
    return int(np.prod(grid.counts))


def apply(op: EllipticOperator, u: Field) -> Field:
    """Apply L to a field with second-order stencils."""
    return Field(u.grid, (op.matrix(u.grid) @ u.values.ravel()).reshape(u.grid.shape))


def apply_principal(op: EllipticOperator, u: Field) -> Field:
    """Apply only the second-order part of L."""
    return Field(
        u.grid,
        (op.matrix(u.grid, principal_only=True) @ u.values.ravel()).reshape(u.grid.shape),
    )


@dataclass
class EllipticityReport:
    min_eig: float
    max_eig: float
    worst_node: tuple[int, ...]
    passed: bool


def validate_ellipticity(op: EllipticOperator, grid: Grid | None = None) -> EllipticityReport:
    """Node-wise eigenvalue bounds of [a_ij] against the claimed (mu1, mu2).

    Closed forms are used in one and two dimensions; higher dimensions fall
    back to a batched symmetric eigensolve.
    """
    grid = grid or op.grid
    if grid is None:
        raise InvalidGeometry("validate_ellipticity needs a grid")
    a = op.coefficient_tensor(grid)
    if op.ndim == 1:
        lo = hi = a[0, 0]
    elif op.ndim == 2:
        tr = 0.5 * (a[0, 0] + a[1, 1])
        disc = np.sqrt((0.5 * (a[0, 0] - a[1, 1])) ** 2 + a[0, 1] ** 2)
        lo, hi = tr - disc, tr + disc
    else:
        mats = np.moveaxis(a.reshape(op.ndim, op.ndim, -1), -1, 0)
        eigs = np.linalg.eigvalsh(mats)
        lo = eigs[:, 0].reshape(grid.shape)
        hi = eigs[:, -1].reshape(grid.shape)
    tol = 1e-12 * op.mu2
    min_eig = float(lo.min())
    max_eig = float(hi.max())
    worst = np.unravel_index(int(np.argmin(lo)), grid.shape)
    if max_eig - op.mu2 > op.mu2 - min_eig:
        worst = np.unravel_index(int(np.argmax(hi)), grid.shape)
    passed = (min_eig >= op.mu1 - tol) and (max_eig <= op.mu2 + tol)
    return EllipticityReport(min_eig=min_eig, max_eig=max_eig, worst_node=worst, passed=passed)


def symmetric_from_node_values(grid: Grid, a_values, b=None, b0=None, mu1=1.0, mu2=1.0):
    """Operator from raw per-node coefficient arrays; rejects asymmetric input."""
    a_values = np.asarray(a_values, dtype=float)
    ndim = grid.ndim
    if a_values.shape[:2] != (ndim, ndim):
        raise InvalidOperator("expected a coefficient array of shape (ndim, ndim, *grid)")
    if not np.array_equal(a_values, np.swapaxes(a_values, 0, 1)):
        raise InvalidOperator("principal coefficient array is not symmetric")
    a = {}
    for i in range(ndim):
        for j in range(i, ndim):
            vals = a_values[i, j]
            a[(i, j)] = _node_value_lookup(grid, vals)
    return EllipticOperator(ndim, a, b=b, b0=b0, mu1=mu1, mu2=mu2, grid=grid)


def _node_value_lookup(grid, vals):
    vals = np.asarray(vals, dtype=float)

    def lookup(points):
        points = np.asarray(points, dtype=float)
        idx = []
        for ax in range(grid.ndim):
            k = np.rint((points[..., ax] - grid.origin[ax]) / grid.spacing[ax]).astype(int)
            idx.append(np.clip(k, 0, grid.counts[ax] - 1))
        return vals[tuple(idx)]

    return lookup


def pseudoconvexity_indicator(c: Field, x0) -> Field:
    """Node-wise value of (x - x0, grad(c^-2)); negative values certify a violation
    of the classical restriction on the wave speed."""
    if np.any(c.values <= 0):
        raise InvalidOperator("wave speed must be strictly positive")
    grid = c.grid
    w = (c.values ** -2.0).ravel()
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    coords = grid.meshgrid()
    out = np.zeros(grid.shape)
    for ax in range(grid.ndim):
        d1 = axis_operator(grid, ax, d1_matrix(grid.counts[ax], grid.spacing[ax]))
        out += (coords[ax] - x0[ax]) * (d1 @ w).reshape(grid.shape)
    return Field(grid, out)
