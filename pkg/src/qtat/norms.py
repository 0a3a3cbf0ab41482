"""Discrete norms shared across solvers, diagnostics, and reports.

Every norm here is a sum of squared values (or squared finite differences)
scaled by cell measures:

* node measure in time: half-interval sums of a possibly nonuniform grid;
* node measure in space: the uniform cell volume of the grid;
* first differences are taken on intervals and weighted by interval measure;
* gradients inside masked regions use central differences and drop nodes
  whose full stencil leaves the mask.

These definitions realize the lateral-surface norms (L2 and H1 of traces),
the space-time L2 norm, and the H^{1,0} norm of masked space-time regions.
"""

from __future__ import annotations

import numpy as np


def time_node_weights(times: np.ndarray) -> np.ndarray:
    """Trapezoid-style node measures of a strictly increasing time grid."""
    times = np.asarray(times, dtype=float)
    w = np.zeros_like(times)
    d = np.diff(times)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def trace_l2(values_list, times, face_measures) -> float:
    """L2 norm over a lateral surface: sum over faces, nodes, and time."""
    total = 0.0
    w_t = time_node_weights(times)
    for values, measure in zip(values_list, face_measures):
        sq = (values ** 2).reshape(values.shape[0], -1).sum(axis=1)
        total += float(np.sum(sq * w_t)) * measure
    return float(np.sqrt(total))


def trace_h1(values_list, times, face_measures, face_spacings) -> float:
    """H1 norm over a lateral surface: values, time derivative, tangential gradient."""
    times = np.asarray(times, dtype=float)
    w_t = time_node_weights(times)
    d_t = np.diff(times)
    total = 0.0
    for values, measure, spacings in zip(values_list, face_measures, face_spacings):
        sq = (values ** 2).reshape(values.shape[0], -1).sum(axis=1)
        total += float(np.sum(sq * w_t)) * measure
        dv = np.diff(values, axis=0) / d_t.reshape((-1,) + (1,) * (values.ndim - 1))
        sq_t = (dv ** 2).reshape(dv.shape[0], -1).sum(axis=1)
        total += float(np.sum(sq_t * d_t)) * measure
        for ax, hs in enumerate(spacings):
            g = np.diff(values, axis=ax + 1) / hs
            sq_x = (g ** 2).reshape(g.shape[0], -1).sum(axis=1)
            total += float(np.sum(sq_x * w_t)) * measure
    return float(np.sqrt(total))


def spacetime_l2(values, cell_volume, times, mask=None) -> float:
    """L2(space x time) of node values, optionally restricted to a node mask."""
    w_t = time_node_weights(times)
    if mask is not None:
        sq = ((values ** 2) * mask).reshape(values.shape[0], -1).sum(axis=1)
    else:
        sq = (values ** 2).reshape(values.shape[0], -1).sum(axis=1)
    return float(np.sqrt(np.sum(sq * w_t) * cell_volume))


def interval_l2(values, cell_volume, interval_lengths) -> float:
    """L2 of values living on time intervals (staggered residuals)."""
    sq = (values ** 2).reshape(values.shape[0], -1).sum(axis=1)
    return float(np.sqrt(np.sum(sq * np.asarray(interval_lengths)) * cell_volume))


def masked_gradient_squares(values, spacing, mask):
    """Sum over spatial axes of squared central differences inside a node mask.

    Nodes whose +-1 neighbors (along the differenced axis) fall outside the
    mask contribute nothing; this realizes the gradient part of H^{1,0} on an
    irregular level-set region without reaching across its boundary.
    """
    values = np.asarray(values, dtype=float)
    total = np.zeros_like(values)
    nd = values.ndim
    for ax in range(nd):
        h = spacing[ax]
        sl_m = [slice(None)] * nd
        sl_p = [slice(None)] * nd
        sl_c = [slice(None)] * nd
        sl_m[ax] = slice(0, -2)
        sl_p[ax] = slice(2, None)
        sl_c[ax] = slice(1, -1)
        ok = mask[tuple(sl_m)] & mask[tuple(sl_p)] & mask[tuple(sl_c)]
        g = (values[tuple(sl_p)] - values[tuple(sl_m)]) / (2.0 * h)
        contrib = np.zeros_like(values)
        contrib[tuple(sl_c)] = (g ** 2) * ok
        total += contrib
    return total


def h10_spacetime(values, grid, times, mask) -> float:
    """H^{1,0} norm (values + spatial gradient) over a masked space-time region.

    ``values`` has shape (nt, *grid.shape); ``mask`` the same.  The time axis
    carries node measures only (no time derivative in H^{1,0}).
    """
    w_t = time_node_weights(times)
    cell = grid.cell_volume()
    total = 0.0
    for k in range(values.shape[0]):
        sq = (values[k] ** 2) * mask[k]
        sq = sq + masked_gradient_squares(values[k], grid.spacing, mask[k])
        total += float(sq.sum()) * w_t[k]
    return float(np.sqrt(total * cell))


def relative_l2(a, b, mask=None) -> float:
    """Plain relative l2 distance of node values, optionally masked."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if mask is not None:
        a = a[mask]
        b = b[mask]
    denom = np.linalg.norm(b)
    if denom == 0.0:
        return float(np.linalg.norm(a))
    return float(np.linalg.norm(a - b) / denom)
