"""Deterministic generators of test fields with known derivative structure.

Each generator realizes both the sampled field and its operator-derivative
measure: band-limited fields carry an analytically differentiated density,
piecewise null-space fields carry pure interface pieces with the exact
surface density built from the jump and the normal, polynomials are exact,
and mollified specs smear the inner measure with the standard bump.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import gamma

import numpy as np
from scipy.integrate import quad
from scipy.signal import fftconvolve

from .errors import InputError, ResolutionError
from .grids import GridField, make_grid
from .measures import MeasureField, SegmentPiece
from .operators import Operator
from .polynomials import PolynomialField, apply_to_polynomial
from .rng import stream

KERNEL_RTOL = 1e-10


# ---------------------------------------------------------------------------
# specs

@dataclass(frozen=True)
class BandLimitedSpec:
    seed: int
    band: int
    amplitude: float = 1.0

    def descriptor(self) -> str:
        return f"band_limited(seed={self.seed},band={self.band},amp={self.amplitude:g})"


@dataclass(frozen=True)
class PiecewiseKernelSpec:
    """Two null-space polynomials glued across a straight interface (n=2).

    ``normal`` points from the minus piece into the plus piece; ``point``
    is any point on the interface line.
    """

    point: tuple
    normal: tuple
    minus: PolynomialField
    plus: PolynomialField

    def descriptor(self) -> str:
        return f"piecewise_kernel(point={tuple(self.point)},normal={tuple(self.normal)})"


@dataclass(frozen=True)
class PolynomialSpec:
    p: PolynomialField

    def descriptor(self) -> str:
        return f"polynomial(degree={self.p.degree})"


@dataclass(frozen=True)
class MollifiedSpec:
    inner: object
    eps: float

    def descriptor(self) -> str:
        return f"mollified({self.inner.descriptor()},eps={self.eps:g})"


# ---------------------------------------------------------------------------
# band-limited synthesis

def band_limited_modes(n: int, band: int) -> np.ndarray:
    """Integer frequency vectors with 0 < |k|_inf <= band, fixed order."""
    ranges = [np.arange(-band, band + 1)] * n
    grid = np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, n)
    grid = grid[np.any(grid != 0, axis=1)]
    return grid


def band_limited_coefficients(spec: BandLimitedSpec, dim_v: int, n: int) -> np.ndarray:
    """Complex mode coefficients (dimV, n_modes), deterministic in the seed."""
    modes = band_limited_modes(n, spec.band)
    rng = stream(spec.seed, "fieldgen/band-limited")
    raw = rng.standard_normal((dim_v, len(modes), 2))
    coeffs = (raw[..., 0] + 1j * raw[..., 1]) * spec.amplitude / np.sqrt(len(modes))
    return coeffs


def synthesize_band_limited(
    op: Operator, coeffs: np.ndarray, modes: np.ndarray, grid: GridField
):
    """Field and exact derivative density from explicit mode sums."""
    lengths = grid.box_max - grid.box_min
    axis_phase = []
    for j in range(grid.n):
        x = grid.axis_centers(j) - grid.box_min[j]
        ks = np.arange(-np.max(np.abs(modes)), np.max(np.abs(modes)) + 1)
        axis_phase.append(
            {int(k): np.exp(2j * np.pi * k * x / lengths[j]) for k in ks}
        )
    u = np.zeros(grid.dims + (op.dim_v,))
    derivs = np.zeros((grid.n,) + grid.dims + (op.dim_v,))
    for m, k in enumerate(modes):
        phase = axis_phase[0][int(k[0])]
        for j in range(1, grid.n):
            phase = np.multiply.outer(phase, axis_phase[j][int(k[j])])
        for c in range(op.dim_v):
            term = coeffs[c, m] * phase
            u[..., c] += term.real
            for j in range(grid.n):
                freq = 2j * np.pi * k[j] / lengths[j]
                derivs[j][..., c] += (freq * term).real
    field = GridField(grid.origin.copy(), grid.spacing.copy(), u, periodic=True)
    density = np.einsum("jwv,j...v->...w", op.coeff_stack, derivs)
    mu = MeasureField(GridField(grid.origin.copy(), grid.spacing.copy(), density, True))
    return field, mu


# ---------------------------------------------------------------------------
# piecewise kernel fields

def _check_kernel_piece(op: Operator, p: PolynomialField) -> None:
    image = apply_to_polynomial(op, p)
    if image.max_coefficient() > KERNEL_RTOL * (1.0 + p.coefficient_norm()):
        raise InputError("piecewise piece is not in the operator null-space")


def _line_box_segment(point, normal, box_min, box_max):
    """Endpoints of {x : (x - point) . normal = 0} clipped to the box."""
    point = np.asarray(point, dtype=float)
    normal = np.asarray(normal, dtype=float)
    normal = normal / np.linalg.norm(normal)
    tangent = np.array([-normal[1], normal[0]])
    lo, hi = -np.inf, np.inf
    for j in range(2):
        if abs(tangent[j]) < 1e-15:
            if not (box_min[j] - 1e-12 <= point[j] <= box_max[j] + 1e-12):
                return None
            continue
        t0 = (box_min[j] - point[j]) / tangent[j]
        t1 = (box_max[j] - point[j]) / tangent[j]
        lo = max(lo, min(t0, t1))
        hi = min(hi, max(t0, t1))
    if not np.isfinite(lo) or not np.isfinite(hi) or hi <= lo:
        return None
    return point + lo * tangent, point + hi * tangent


def interface_segment(spec: PiecewiseKernelSpec, op: Operator, box_min, box_max) -> SegmentPiece:
    """The singular piece: surface density sum_j nu_j A_j [u] along the cut."""
    seg = _line_box_segment(spec.point, spec.normal, box_min, box_max)
    if seg is None:
        raise InputError("interface line does not intersect the box")
    p0, p1 = seg
    jump = spec.plus - spec.minus
    jump_t = jump.restrict_to_segment(p0, p1)  # (deg+1, dimV)
    normal = np.asarray(spec.normal, dtype=float)
    normal = normal / np.linalg.norm(normal)
    nu_a = sum(normal[j] * op.coeffs[j] for j in range(op.n))  # dimW x dimV
    density = jump_t @ nu_a.T  # (deg+1, dimW)
    return SegmentPiece(p0, p1, density)


def _realize_piecewise(spec: PiecewiseKernelSpec, op: Operator, grid: GridField):
    if op.n != 2:
        raise InputError("piecewise kernel fields are implemented for n=2")
    _check_kernel_piece(op, spec.minus)
    _check_kernel_piece(op, spec.plus)
    pts = grid.cell_centers()
    normal = np.asarray(spec.normal, dtype=float)
    normal = normal / np.linalg.norm(normal)
    side = (pts - np.asarray(spec.point, dtype=float)) @ normal
    vals_minus = spec.minus.evaluate(pts)
    vals_plus = spec.plus.evaluate(pts)
    data = np.where((side >= 0.0)[..., None], vals_plus, vals_minus)
    u = grid.like(data)
    ac = GridField(grid.origin.copy(), grid.spacing.copy(),
                   np.zeros(grid.dims + (op.dim_w,)), grid.periodic)
    piece = interface_segment(spec, op, grid.box_min, grid.box_max)
    return u, MeasureField(ac, [piece])


# ---------------------------------------------------------------------------
# mollification

@lru_cache(maxsize=8)
def _bump_normalization(n: int) -> float:
    surface = 2.0 * np.pi ** (n / 2.0) / gamma(n / 2.0)
    radial, _ = quad(lambda r: r ** (n - 1) * np.exp(-1.0 / (1.0 - r * r)), 0.0, 1.0)
    return 1.0 / (surface * radial)


def bump_value(z: np.ndarray, n: int) -> np.ndarray:
    """The standard unit-mass radial bump on the unit ball."""
    z = np.asarray(z, dtype=float)
    r2 = np.sum(z * z, axis=-1)
    out = np.zeros(r2.shape)
    inside = r2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return _bump_normalization(n) * out


def _mollifier_kernel(grid: GridField, eps: float) -> np.ndarray:
    half = np.floor(eps / grid.spacing).astype(int)
    if np.any(half < 2):
        raise ResolutionError("mollification width must cover at least 2 cells")
    offsets = np.stack(
        np.meshgrid(*[np.arange(-m, m + 1) for m in half], indexing="ij"), axis=-1
    )
    z = offsets * grid.spacing / eps
    kernel = bump_value(z, grid.n)
    total = kernel.sum()
    if total <= 0:
        raise ResolutionError("mollification kernel vanished on the grid")
    return kernel / total


def mollify(u: GridField, eps: float) -> GridField:
    """Convolve with the standard radial bump of width eps (unit discrete mass).

    Periodic fields wrap; box fields are edge-padded, so interior points more
    than eps from the boundary are unaffected by the padding.
    """
    kernel = _mollifier_kernel(u, eps)
    out = np.empty_like(u.data)
    if u.periodic:
        shape = u.dims
        kern_embedded = np.zeros(shape)
        half = tuple((s - 1) // 2 for s in kernel.shape)
        slices = tuple(slice(0, s) for s in kernel.shape)
        kern_embedded[slices] = kernel
        kern_embedded = np.roll(kern_embedded, [-h for h in half],
                                axis=tuple(range(u.n)))
        kern_hat = np.fft.fftn(kern_embedded)
        for c in range(u.dim):
            out[..., c] = np.real(np.fft.ifftn(np.fft.fftn(u.data[..., c]) * kern_hat))
    else:
        pad = tuple((s // 2, s // 2) for s in kernel.shape)
        for c in range(u.dim):
            padded = np.pad(u.data[..., c], pad, mode="edge")
            out[..., c] = fftconvolve(padded, kernel, mode="valid")
    return u.like(out)


def _mollified_measure(mu: MeasureField, eps: float) -> MeasureField:
    """AC density of the mollified measure: smeared AC part + smeared pieces."""
    ac = mollify(mu.ac, eps)
    data = ac.data.copy()
    grid = mu.ac
    for piece in mu.pieces:
        if not isinstance(piece, SegmentPiece):
            raise InputError("mollified measures support segment pieces only")
        length = piece.length
        count = max(64, int(8 * length / eps))
        t = (np.arange(count) + 0.5) / count
        pts = piece.p0 + t[:, None] * (piece.p1 - piece.p0)
        powers = t[:, None] ** np.arange(piece.density.shape[0])[None, :]
        dens = powers @ piece.density  # (count, dimW)
        weight = length / count
        centers = grid.cell_centers()
        for q in range(count):
            z = (centers - pts[q]) / eps
            eta = bump_value(z, grid.n) / eps**grid.n
            data += weight * eta[..., None] * dens[q]
    return MeasureField(grid.like(data), [])


# ---------------------------------------------------------------------------
# entry points

def realize(spec, op: Operator, box_min=None, box_max=None, resolution: int = 128):
    """Sample the field and assemble its derivative measure on a fresh grid."""
    if box_min is None:
        box_min = np.zeros(op.n)
    if box_max is None:
        box_max = np.ones(op.n)
    if isinstance(spec, BandLimitedSpec):
        grid = make_grid(box_min, box_max, resolution, op.dim_v, periodic=True)
        modes = band_limited_modes(op.n, spec.band)
        coeffs = band_limited_coefficients(spec, op.dim_v, op.n)
        return synthesize_band_limited(op, coeffs, modes, grid)
    if isinstance(spec, PiecewiseKernelSpec):
        grid = make_grid(box_min, box_max, resolution, op.dim_v, periodic=False)
        return _realize_piecewise(spec, op, grid)
    if isinstance(spec, PolynomialSpec):
        if spec.p.n != op.n or spec.p.dim != op.dim_v:
            raise InputError("polynomial spec does not match operator shape")
        grid = make_grid(box_min, box_max, resolution, op.dim_v, periodic=False)
        pts = grid.cell_centers()
        u = grid.like(spec.p.evaluate(pts))
        image = apply_to_polynomial(op, spec.p)
        ac = GridField(grid.origin.copy(), grid.spacing.copy(),
                       image.evaluate(pts), False)
        return u, MeasureField(ac, [])
    if isinstance(spec, MollifiedSpec):
        u, mu = realize(spec.inner, op, box_min, box_max, resolution)
        return mollify(u, spec.eps), _mollified_measure(mu, spec.eps)
    raise InputError(f"unknown field spec {type(spec).__name__}")


class SmoothTestFunction:
    """Compactly supported W-valued bump with an analytic gradient.

    value(x) = w * prod_j s((x_j - m_j) / rho_j) with the standard bump
    profile s; support is the open box |x_j - m_j| < rho_j.
    """

    def __init__(self, center, widths, weight):
        self.center = np.asarray(center, dtype=float)
        self.widths = np.asarray(widths, dtype=float)
        self.weight = np.asarray(weight, dtype=float)

    @staticmethod
    def _s(t):
        out = np.zeros_like(t)
        inside = np.abs(t) < 1.0
        out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
        return out

    @staticmethod
    def _ds(t):
        out = np.zeros_like(t)
        inside = np.abs(t) < 1.0
        ti = t[inside]
        out[inside] = np.exp(-1.0 / (1.0 - ti**2)) * (-2.0 * ti / (1.0 - ti**2) ** 2)
        return out

    def value(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        tau = (pts - self.center) / self.widths
        prof = np.prod(self._s(tau), axis=-1)
        return prof[..., None] * self.weight

    def partial(self, j: int, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        tau = (pts - self.center) / self.widths
        factors = self._s(tau)
        dj = self._ds(tau[..., j]) / self.widths[j]
        others = np.prod(np.delete(factors, j, axis=-1), axis=-1)
        return (dj * others)[..., None] * self.weight


def random_test_functions(op: Operator, count: int, seed: int) -> list:
    rng = stream(seed, "fieldgen/test-functions")
    out = []
    for _ in range(count):
        center = rng.uniform(0.3, 0.7, size=op.n)
        widths = rng.uniform(0.15, 0.28, size=op.n)
        weight = rng.standard_normal(op.dim_w)
        out.append(SmoothTestFunction(center, widths, weight))
    return out


def _clip_square_halfplane(cell_min, cell_max, point, normal):
    """Split an axis-aligned cell by the line (x-point).normal = 0.

    Returns ((area_minus, centroid_minus), (area_plus, centroid_plus));
    degenerate sides have zero area and the cell center as centroid.
    """
    corners = np.array([
        [cell_min[0], cell_min[1]],
        [cell_max[0], cell_min[1]],
        [cell_max[0], cell_max[1]],
        [cell_min[0], cell_max[1]],
    ])

    def clip(keep_sign):
        poly = []
        m = len(corners)
        dist = (corners - point) @ normal
        for i in range(m):
            a, b = corners[i], corners[(i + 1) % m]
            da, db = keep_sign * dist[i], keep_sign * dist[(i + 1) % m]
            if da >= 0:
                poly.append(a)
            if (da > 0) != (db > 0) and da != db:
                t = da / (da - db)
                poly.append(a + t * (b - a))
        return np.array(poly)

    center = 0.5 * (np.asarray(cell_min) + np.asarray(cell_max))
    out = []
    for sign in (-1.0, 1.0):
        poly = clip(sign)
        if len(poly) < 3:
            out.append((0.0, center))
            continue
        x, y = poly[:, 0], poly[:, 1]
        xr, yr = np.roll(x, -1), np.roll(y, -1)
        cross = x * yr - xr * y
        area = 0.5 * np.sum(cross)
        if abs(area) < 1e-300:
            out.append((0.0, center))
            continue
        cx = np.sum((x + xr) * cross) / (6.0 * area)
        cy = np.sum((y + yr) * cross) / (6.0 * area)
        out.append((abs(area), np.array([cx, cy])))
    return out[0], out[1]


def pairing_residual(
    op: Operator,
    spec: PiecewiseKernelSpec,
    u: GridField,
    mu: MeasureField,
    phi: SmoothTestFunction,
) -> float:
    """Relative defect of  integral(u . A*phi) = integral(phi d mu).

    A*phi = -sum_j A_j^T d_j phi.  Cells crossed by the interface are split
    exactly into the two polygonal parts so the left side is second order
    despite the jump.
    """
    normal = np.asarray(spec.normal, dtype=float)
    normal = normal / np.linalg.norm(normal)
    point = np.asarray(spec.point, dtype=float)
    centers = u.cell_centers()
    pts = centers.reshape(-1, u.n)
    adj = np.zeros((len(pts), op.dim_v))
    for j in range(op.n):
        adj -= phi.partial(j, pts) @ op.coeffs[j]
    dist = (pts - point) @ normal
    half = 0.5 * u.spacing
    reach = float(np.abs(normal) @ half)
    crossed = np.abs(dist) <= reach
    uvals = u.data.reshape(-1, u.dim)
    lhs = 0.0
    plain = ~crossed
    lhs += float(np.sum(uvals[plain] * adj[plain])) * u.cell_volume
    lhs_scale = float(np.sum(np.linalg.norm(uvals, axis=1)
                             * np.linalg.norm(adj, axis=1))) * u.cell_volume
    for idx in np.nonzero(crossed)[0]:
        c = pts[idx]
        (a_m, g_m), (a_p, g_p) = _clip_square_halfplane(c - half, c + half, point, normal)
        for area, centroid, poly in ((a_m, g_m, spec.minus), (a_p, g_p, spec.plus)):
            if area == 0.0:
                continue
            adv = np.zeros(op.dim_v)
            for j in range(op.n):
                adv -= op.coeffs[j].T @ phi.partial(j, centroid[None, :])[0]
            lhs += area * float(poly.evaluate(centroid) @ adv)
    rhs = float(np.sum(mu.ac.data.reshape(-1, op.dim_w) * phi.value(pts))) * u.cell_volume
    rhs_scale = 0.0
    for piece in mu.pieces:
        count = max(256, int(8 * piece.length / float(np.min(u.spacing))))
        t = (np.arange(count) + 0.5) / count
        xs = piece.p0 + t[:, None] * (piece.p1 - piece.p0)
        powers = t[:, None] ** np.arange(piece.density.shape[0])[None, :]
        dens = powers @ piece.density
        vals = phi.value(xs)
        rhs += float(np.sum(dens * vals)) * piece.length / count
        rhs_scale += float(np.sum(np.abs(dens * vals))) * piece.length / count
    # normalize by the magnitude at which the two pairings act, so the check
    # stays meaningful when the signed integrals nearly cancel
    scale = max(lhs_scale, rhs_scale, 1e-12)
    return abs(lhs - rhs) / scale


def rigid_motion(n: int, translation, rotation: float = 0.0) -> PolynomialField:
    """An affine map with antisymmetric gradient (n=2 rotation parameter)."""
    translation = np.asarray(translation, dtype=float)
    coeffs = {}
    for i in range(n):
        if translation[i] != 0.0:
            coeffs[(i, (0,) * n)] = float(translation[i])
    if rotation != 0.0:
        if n != 2:
            raise InputError("rotation parameter only supported for n=2")
        e1 = tuple(1 if j == 0 else 0 for j in range(n))
        e2 = tuple(1 if j == 1 else 0 for j in range(n))
        coeffs[(0, e2)] = coeffs.get((0, e2), 0.0) - rotation
        coeffs[(1, e1)] = coeffs.get((1, e1), 0.0) + rotation
    return PolynomialField(n, n, coeffs)
