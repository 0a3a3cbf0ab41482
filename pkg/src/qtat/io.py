"""Binary artifact format, CSV exports, and file digests.

All artifacts share one container: magic ``QTAT``, a format version, and a
payload whose layout depends on the version:

* version 1 - scalar field: ndim u32, counts u64[ndim], spacing f64[ndim],
  origin f64[ndim], payload f64 row-major (last axis fastest);
* version 2 - space-time field: the version-1 spatial header, then nt u64,
  times f64[nt] (possibly nonuniform), payload f64 of shape (nt, *counts);
* version 3 - boundary trace: surface u8 (0 = lateral box boundary, 1 =
  hyperplane patch), has_neumann u8, nt u64, times f64[nt], n_faces u32,
  then per face: axis u32, side u8 (0 lo, 1 hi), position f64, sdim u32,
  counts u64[sdim], spacing f64[sdim], origin f64[sdim], dirichlet payload
  (nt, *counts), and the neumann payload when flagged.

Values are IEEE doubles, little endian.  CSV exports print 17 significant
digits, which round-trips float64 exactly.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

from .errors import InvalidData
from .grid import Field, Grid, SpaceTimeField
from .wave import BoundaryTrace, FaceTrace

MAGIC = b"QTAT"

_SURFACES = {"S": 0, "P1": 1}
_SURFACES_BACK = {v: k for k, v in _SURFACES.items()}
_SIDES = {"lo": 0, "hi": 1}
_SIDES_BACK = {v: k for k, v in _SIDES.items()}


def _pack_grid(fh, grid: Grid):
    fh.write(struct.pack("<I", grid.ndim))
    fh.write(struct.pack(f"<{grid.ndim}Q", *grid.counts))
    fh.write(struct.pack(f"<{grid.ndim}d", *grid.spacing))
    fh.write(struct.pack(f"<{grid.ndim}d", *grid.origin))


def _unpack_grid(fh) -> Grid:
    (ndim,) = struct.unpack("<I", fh.read(4))
    counts = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim))
    spacing = struct.unpack(f"<{ndim}d", fh.read(8 * ndim))
    origin = struct.unpack(f"<{ndim}d", fh.read(8 * ndim))
    return Grid(origin, spacing, counts)


def _write_array(fh, values):
    fh.write(np.ascontiguousarray(values, dtype="<f8").tobytes())


def _read_array(fh, shape):
    n = int(np.prod(shape)) if shape else 1
    data = np.frombuffer(fh.read(8 * n), dtype="<f8")
    return data.reshape(shape).copy()


def write_artifact(path, obj):
    """Serialize a Field, SpaceTimeField, or BoundaryTrace."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        if isinstance(obj, Field):
            fh.write(struct.pack("<I", 1))
            _pack_grid(fh, obj.grid)
            _write_array(fh, obj.values)
        elif isinstance(obj, SpaceTimeField):
            fh.write(struct.pack("<I", 2))
            _pack_grid(fh, obj.grid)
            fh.write(struct.pack("<Q", obj.times.size))
            _write_array(fh, obj.times)
            _write_array(fh, obj.values)
        elif isinstance(obj, BoundaryTrace):
            fh.write(struct.pack("<I", 3))
            fh.write(struct.pack("<BB", _SURFACES[obj.surface],
                                 1 if obj.neumann is not None else 0))
            fh.write(struct.pack("<Q", obj.times.size))
            _write_array(fh, obj.times)
            fh.write(struct.pack("<I", len(obj.faces)))
            for j, face in enumerate(obj.faces):
                fh.write(struct.pack("<IBd", face.axis, _SIDES[face.side], face.position))
                sdim = len(face.surface_shape)
                fh.write(struct.pack("<I", sdim))
                if sdim:
                    fh.write(struct.pack(f"<{sdim}Q", *face.surface_shape))
                    fh.write(struct.pack(f"<{sdim}d", *face.spacing))
                    fh.write(struct.pack(f"<{sdim}d", *face.origin))
                _write_array(fh, face.values)
                if obj.neumann is not None:
                    _write_array(fh, obj.neumann[j])
        else:
            raise InvalidData(f"cannot serialize object of type {type(obj).__name__}")


def read_artifact(path):
    """Load whatever write_artifact stored."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise InvalidData(f"{path}: not a qtat artifact")
        (version,) = struct.unpack("<I", fh.read(4))
        if version == 1:
            grid = _unpack_grid(fh)
            return Field(grid, _read_array(fh, grid.shape))
        if version == 2:
            grid = _unpack_grid(fh)
            (nt,) = struct.unpack("<Q", fh.read(8))
            times = _read_array(fh, (nt,))
            return SpaceTimeField(grid, times, _read_array(fh, (nt,) + grid.shape))
        if version == 3:
            surface_code, has_neumann = struct.unpack("<BB", fh.read(2))
            (nt,) = struct.unpack("<Q", fh.read(8))
            times = _read_array(fh, (nt,))
            (n_faces,) = struct.unpack("<I", fh.read(4))
            faces, neumann = [], []
            for _ in range(n_faces):
                axis, side_code, position = struct.unpack("<IBd", fh.read(13))
                (sdim,) = struct.unpack("<I", fh.read(4))
                if sdim:
                    counts = struct.unpack(f"<{sdim}Q", fh.read(8 * sdim))
                    spacing = struct.unpack(f"<{sdim}d", fh.read(8 * sdim))
                    origin = struct.unpack(f"<{sdim}d", fh.read(8 * sdim))
                else:
                    counts, spacing, origin = (), (), ()
                values = _read_array(fh, (nt,) + counts)
                faces.append(FaceTrace(axis=axis, side=_SIDES_BACK[side_code],
                                       position=position, origin=origin,
                                       spacing=spacing, values=values))
                if has_neumann:
                    neumann.append(_read_array(fh, (nt,) + counts))
            return BoundaryTrace(surface=_SURFACES_BACK[surface_code], times=times,
                                 faces=faces, neumann=neumann if has_neumann else None)
        raise InvalidData(f"{path}: unknown artifact version {version}")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def export_csv(path, obj):
    """Write node rows: coordinates then value, 17 significant digits."""
    with open(path, "w") as fh:
        if isinstance(obj, Field):
            grid = obj.grid
            fh.write(",".join(f"x{i + 1}" for i in range(grid.ndim)) + ",value\n")
            coords = np.stack(grid.meshgrid(), axis=-1).reshape(-1, grid.ndim)
            for pt, val in zip(coords, obj.values.ravel()):
                fh.write(",".join(_fmt(c) for c in pt) + "," + _fmt(val) + "\n")
        elif isinstance(obj, SpaceTimeField):
            grid = obj.grid
            fh.write("t," + ",".join(f"x{i + 1}" for i in range(grid.ndim)) + ",value\n")
            coords = np.stack(grid.meshgrid(), axis=-1).reshape(-1, grid.ndim)
            for k, t in enumerate(obj.times):
                for pt, val in zip(coords, obj.values[k].ravel()):
                    fh.write(_fmt(t) + "," + ",".join(_fmt(c) for c in pt)
                             + "," + _fmt(val) + "\n")
        elif isinstance(obj, BoundaryTrace):
            fh.write("face,side,t,surface_index,dirichlet"
                     + (",neumann\n" if obj.neumann is not None else "\n"))
            for j, face in enumerate(obj.faces):
                flat = face.values.reshape(obj.times.size, -1)
                neu = None if obj.neumann is None else obj.neumann[j].reshape(obj.times.size, -1)
                for k, t in enumerate(obj.times):
                    for idx in range(flat.shape[1]):
                        row = [str(j), face.side, _fmt(t), str(idx), _fmt(flat[k, idx])]
                        if neu is not None:
                            row.append(_fmt(neu[k, idx]))
                        fh.write(",".join(row) + "\n")
        else:
            raise InvalidData(f"cannot export object of type {type(obj).__name__}")


def write_sweep_csv(path, report):
    """Versioned sweep report: per-row metrics plus the fitted exponents."""
    with open(path, "w") as fh:
        fh.write("# schema: qtat-sweep-v1\n")
        fh.write(f"# scenario={report.scenario} y_bound={_fmt(report.y_bound)}"
                 f" fitted_rho={'' if report.fitted_rho is None else _fmt(report.fitted_rho)}"
                 f" r_squared={'' if report.r_squared is None else _fmt(report.r_squared)}\n")
        fh.write("level,seed,gamma,data_size,error_l2,log_product,"
                 "holder_error,ineq_lhs,ineq_rhs,in_regime\n")
        for r in report.rows:
            fh.write(",".join([
                _fmt(r.level), str(r.seed), _fmt(r.gamma), _fmt(r.data_size),
                _fmt(r.error_l2), _fmt(r.log_product), _fmt(r.holder_error),
                _fmt(r.ineq_lhs), _fmt(r.ineq_rhs), str(int(r.in_regime)),
            ]) + "\n")


def write_carleman_csv(path, report):
    with open(path, "w") as fh:
        fh.write("# schema: qtat-carleman-v1\n")
        fh.write(f"# lemma={report.lemma} nu={_fmt(report.params.nu)}"
                 f" epsilon={_fmt(report.params.epsilon)} lambda={_fmt(report.params.lam)}"
                 f" nodes={report.nodes_in_domain}"
                 f" family_log_constant={_fmt(report.family_log_constant)}\n")
        fh.write("index,log_boundary,log_misfit,log_rhs,log_constant,degenerate\n")
        for i, row in enumerate(report.rows):
            fh.write(",".join([
                str(i), _fmt(row.log_boundary), _fmt(row.log_misfit),
                _fmt(row.log_rhs), _fmt(row.log_constant), str(int(row.degenerate)),
            ]) + "\n")


def write_tail_csv(path, tails):
    with open(path, "w") as fh:
        fh.write("# schema: qtat-tail-v1\n")
        fh.write("t,bound,B,d,tau_max\n")
        for tb in tails:
            fh.write(",".join(_fmt(v) for v in (tb.t, tb.bound, tb.B, tb.d, tb.tau_max)) + "\n")


def write_qrm_csv(path, solution, lemma_lhs, lemma_rhs, l2_error=None):
    with open(path, "w") as fh:
        fh.write("# schema: qtat-qrm-v1\n")
        fh.write("gamma,iterations,residual,functional,lemma31_lhs,lemma31_rhs,l2_error_vs_truth\n")
        fh.write(",".join([
            _fmt(solution.gamma), str(solution.iterations), _fmt(solution.residual),
            _fmt(solution.functional_value), _fmt(lemma_lhs), _fmt(lemma_rhs),
            "" if l2_error is None else _fmt(l2_error),
        ]) + "\n")


def sha256_of(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
