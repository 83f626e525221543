"""Uniform-grid sampled fields on boxes and periodic tori.

Samples live at cell centers ``origin + (i + 1/2) h`` so that midpoint
quadrature, ball-restricted averages and torus FFTs all share one layout.
The binary file format is little-endian float64 throughout: a header with
(n, dims per axis, box extents, dim) followed by row-major samples.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InputError, ResolutionError
from .operators import Operator

_MAGIC = b"DLGF"


@dataclass
class GridField:
    origin: np.ndarray
    spacing: np.ndarray
    data: np.ndarray
    periodic: bool = False

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float)
        self.spacing = np.asarray(self.spacing, dtype=float)
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != len(self.origin) + 1:
            raise InputError("data must have one trailing component axis")
        if len(self.spacing) != len(self.origin):
            raise InputError("origin/spacing length mismatch")

    @property
    def n(self) -> int:
        return self.data.ndim - 1

    @property
    def dim(self) -> int:
        return self.data.shape[-1]

    @property
    def dims(self) -> tuple:
        return self.data.shape[:-1]

    @property
    def box_min(self) -> np.ndarray:
        return self.origin

    @property
    def box_max(self) -> np.ndarray:
        return self.origin + self.spacing * np.array(self.dims)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axis_centers(self, j: int) -> np.ndarray:
        return self.origin[j] + (np.arange(self.dims[j]) + 0.5) * self.spacing[j]

    def cell_centers(self) -> np.ndarray:
        """All cell centers, shape dims + (n,)."""
        axes = [self.axis_centers(j) for j in range(self.n)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def like(self, data: np.ndarray) -> "GridField":
        """A field with the same layout holding the given samples."""
        return GridField(self.origin.copy(), self.spacing.copy(), data, self.periodic)

    def nearest_index(self, x) -> tuple:
        """Index of the cell whose center is nearest to x."""
        x = np.asarray(x, dtype=float)
        idx = np.floor((x - self.origin) / self.spacing).astype(int)
        idx = np.clip(idx, 0, np.array(self.dims) - 1)
        return tuple(idx)

    def value_at(self, x) -> np.ndarray:
        return self.data[self.nearest_index(x)]

    def center_of(self, idx) -> np.ndarray:
        return self.origin + (np.asarray(idx, dtype=float) + 0.5) * self.spacing


def make_grid(box_min, box_max, resolution, dim: int, periodic: bool = False) -> GridField:
    """Zero-initialized field; resolution is cells per axis (int or per-axis)."""
    box_min = np.asarray(box_min, dtype=float)
    box_max = np.asarray(box_max, dtype=float)
    n = len(box_min)
    res = np.broadcast_to(np.asarray(resolution, dtype=int), (n,))
    if np.any(res < 1) or np.any(box_max <= box_min):
        raise InputError("resolution must be positive and box_max > box_min")
    spacing = (box_max - box_min) / res
    data = np.zeros(tuple(res) + (dim,))
    return GridField(box_min, spacing, data, periodic)


def sample_function(grid: GridField, fn) -> GridField:
    """Sample fn(points)->(..., dim) at all cell centers of the layout."""
    pts = grid.cell_centers()
    vals = np.asarray(fn(pts), dtype=float)
    if vals.shape != grid.dims + (grid.dim,):
        vals = vals.reshape(grid.dims + (grid.dim,))
    return grid.like(vals)


# ---------------------------------------------------------------------------
# ball-restricted access and quadrature

def _ball_slices(gf: GridField, center, radius):
    center = np.asarray(center, dtype=float)
    lo = np.floor((center - radius - gf.origin) / gf.spacing - 0.5).astype(int)
    hi = np.ceil((center + radius - gf.origin) / gf.spacing + 0.5).astype(int)
    lo = np.maximum(lo, 0)
    hi = np.minimum(hi, np.array(gf.dims))
    if np.any(hi <= lo):
        return None
    return tuple(slice(a, b) for a, b in zip(lo, hi))


def ball_points_values(gf: GridField, center, radius):
    """(points, values) for cells whose center lies in the closed ball."""
    sl = _ball_slices(gf, center, radius)
    if sl is None:
        return np.empty((0, gf.n)), np.empty((0, gf.dim))
    axes = [gf.axis_centers(j)[sl[j]] for j in range(gf.n)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, gf.n)
    vals = gf.data[sl].reshape(-1, gf.dim)
    d2 = np.sum((pts - np.asarray(center, dtype=float)) ** 2, axis=1)
    mask = d2 <= radius * radius
    return pts[mask], vals[mask]


def ball_power_mean(gf: GridField, center, radius, p: float) -> float:
    """(average over in-ball cells of |f|^p)^(1/p)."""
    sl = _ball_slices(gf, center, radius)
    if sl is None:
        raise ResolutionError("ball does not meet the grid")
    axes = [gf.axis_centers(j)[sl[j]] for j in range(gf.n)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, gf.n)
    vals = gf.data[sl].reshape(-1, gf.dim)
    total, count = _kernels.ball_power_sum(pts, vals, np.asarray(center, float), radius, p)
    if count == 0:
        raise ResolutionError("no cell centers inside the ball")
    return (total / count) ** (1.0 / p)


def ball_cell_count(gf: GridField, center, radius) -> int:
    pts, _ = ball_points_values(gf, center, radius)
    return len(pts)


def require_ball_resolution(gf: GridField, radius: float, min_cells: int = 8) -> None:
    cells_across = 2.0 * radius / float(np.max(gf.spacing))
    if cells_across + 1e-12 < min_cells:
        raise ResolutionError(
            f"ball diameter spans {cells_across:.2f} cells; need >= {min_cells}"
        )


# ---------------------------------------------------------------------------
# finite differences

def apply_operator_fd(op: Operator, u: GridField) -> GridField:
    """Apply the operator by centered second-order differences.

    Periodic fields wrap; box fields use one-sided second-order stencils at
    the boundary (numpy.gradient edge_order=2).
    """
    if u.n != op.n or u.dim != op.dim_v:
        raise InputError("field shape does not match operator")
    derivs = []
    for j in range(op.n):
        h = u.spacing[j]
        if u.periodic:
            d = (np.roll(u.data, -1, axis=j) - np.roll(u.data, 1, axis=j)) / (2.0 * h)
        else:
            d = np.gradient(u.data, h, axis=j, edge_order=2)
        derivs.append(d)
    derivs = np.stack(derivs)
    out = np.einsum("jwv,j...v->...w", op.coeff_stack, derivs)
    return GridField(u.origin.copy(), u.spacing.copy(), out, u.periodic)


# ---------------------------------------------------------------------------
# file formats

def save_field(gf: GridField, path) -> None:
    """Write the binary format: header (n, dims, box extents, dim) + samples."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<q", gf.n))
        fh.write(np.asarray(gf.dims, dtype="<i8").tobytes())
        fh.write(np.asarray(gf.box_min, dtype="<f8").tobytes())
        fh.write(np.asarray(gf.box_max, dtype="<f8").tobytes())
        fh.write(struct.pack("<q", gf.dim))
        fh.write(np.ascontiguousarray(gf.data, dtype="<f8").tobytes())


def load_field(path, periodic: bool = False) -> GridField:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise InputError(f"{path} is not a grid field file")
        (n,) = struct.unpack("<q", fh.read(8))
        dims = np.frombuffer(fh.read(8 * n), dtype="<i8")
        box_min = np.frombuffer(fh.read(8 * n), dtype="<f8")
        box_max = np.frombuffer(fh.read(8 * n), dtype="<f8")
        (dim,) = struct.unpack("<q", fh.read(8))
        count = int(np.prod(dims)) * dim
        data = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(tuple(dims) + (dim,))
    spacing = (box_max - box_min) / dims
    return GridField(box_min.copy(), spacing, data.copy(), periodic)


def field_to_csv(gf: GridField, path) -> None:
    pts = gf.cell_centers().reshape(-1, gf.n)
    vals = gf.data.reshape(-1, gf.dim)
    header = ",".join([f"x{j + 1}" for j in range(gf.n)] + [f"v{c + 1}" for c in range(gf.dim)])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for row in np.hstack([pts, vals]):
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")
