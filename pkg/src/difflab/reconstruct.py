"""Inversion of elliptic operators by their Fourier multiplier on the torus.

The frequency-side left inverse of ``i A[xi]`` is
``m(xi) = -i (A[xi]^* A[xi])^{-1} A[xi]^*``; applying it modewise to the
transform of the derivative recovers the field up to its mean, which the
torus cannot determine and is set to zero by convention.  Sampling the
physical-space kernel through a narrow mollified point source exposes its
(1-n)-homogeneity for direct verification.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, PreconditionError
from .fieldgen import bump_value
from .grids import GridField, make_grid
from .operators import Operator, SphereSearchConfig, ellipticity_margin

_margin_cache: dict = {}


def require_elliptic(op: Operator, tolerance: float = 1e-7) -> float:
    """Real ellipticity margin, cached; PreconditionError when not elliptic."""
    key = (op.n, op.dim_v, op.dim_w, op.coeff_stack.tobytes())
    if key not in _margin_cache:
        rep = ellipticity_margin(op, SphereSearchConfig(tolerance=tolerance))
        _margin_cache[key] = rep.real_margin
    margin = _margin_cache[key]
    if margin <= tolerance:
        raise PreconditionError(
            f"operator {op.name} is not elliptic (margin {margin:.3e}); "
            "the Fourier multiplier is not defined"
        )
    return margin


def multiplier_eval(op: Operator, xi) -> np.ndarray:
    """The dimV x dimW multiplier at one real frequency; (-1)-homogeneous."""
    require_elliptic(op)
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (op.n,):
        raise InputError(f"frequency must be a real {op.n}-vector")
    if np.linalg.norm(xi) == 0.0:
        raise InputError("multiplier undefined at xi = 0")
    a = np.tensordot(xi, op.coeff_stack, axes=(0, 0))
    gram = a.T @ a
    return -1j * np.linalg.solve(gram, a.T)


def _multiplier_field(op: Operator, grid_dims, box_lengths):
    """Batched pseudoinverse over all lattice frequencies; zero row at k=0."""
    kappas = np.meshgrid(
        *[2.0 * np.pi * np.fft.fftfreq(nk, d=box_lengths[j] / nk)
          for j, nk in enumerate(grid_dims)],
        indexing="ij",
    )
    kappa = np.stack(kappas, axis=-1)  # dims + (n,)
    a = np.einsum("...j,jwv->...wv", kappa, op.coeff_stack)
    gram = np.einsum("...wi,...wj->...ij", a, a)
    zero = (np.sum(kappa**2, axis=-1) == 0.0)
    gram[zero] = np.eye(op.dim_v)
    inv = np.linalg.inv(gram)
    pinv = np.einsum("...iv,...wv->...iw", inv, a)
    pinv[zero] = 0.0
    return -1j * pinv  # dims + (dimV, dimW)


def fourier_reconstruct(
    op: Operator,
    g: GridField,
    enforce_zero_mean: bool = True,
    zero_mean_rtol: float = 1e-8,
) -> GridField:
    """Recover the mean-free field whose operator derivative is g.

    g must be periodic and (numerically) in the operator's range: its mean
    must vanish relative to its RMS.  The k=0 mode of the output is zero by
    convention.  ``enforce_zero_mean=False`` skips the range check (used by
    the physical-kernel sampler, where the dropped k=0 mode plays the role
    of the mean-free convention).
    """
    require_elliptic(op)
    if not g.periodic:
        raise InputError("fourier_reconstruct needs a periodic field")
    if g.dim != op.dim_w or g.n != op.n:
        raise InputError("field shape does not match operator")
    ghat = np.fft.fftn(g.data, axes=tuple(range(g.n)))
    rms = float(np.sqrt(np.mean(np.abs(g.data) ** 2)))
    mean = np.abs(ghat[(0,) * g.n]) / np.prod(g.dims)
    if enforce_zero_mean and np.max(mean) > zero_mean_rtol * (rms + 1e-300):
        raise PreconditionError(
            f"zero-frequency component {np.max(mean):.3e} exceeds tolerance; "
            "field is not in the range of the operator on the torus"
        )
    pinv = _multiplier_field(op, g.dims, g.box_max - g.box_min)
    uhat = np.einsum("...iw,...w->...i", pinv, ghat)
    u = np.fft.ifftn(uhat, axes=tuple(range(g.n)))
    imag_residue = float(np.max(np.abs(u.imag)) / (np.max(np.abs(u.real)) + 1e-300))
    out = GridField(g.origin.copy(), g.spacing.copy(), np.ascontiguousarray(u.real),
                    periodic=True)
    out.imag_residue = imag_residue
    return out


def spectral_derivative(op: Operator, u: GridField) -> GridField:
    """Exact operator derivative of a periodic band-limited field."""
    if not u.periodic:
        raise InputError("spectral derivative needs a periodic field")
    uhat = np.fft.fftn(u.data, axes=tuple(range(u.n)))
    lengths = u.box_max - u.box_min
    kappas = np.meshgrid(
        *[2.0 * np.pi * np.fft.fftfreq(nk, d=lengths[j] / nk)
          for j, nk in enumerate(u.dims)],
        indexing="ij",
    )
    kappa = np.stack(kappas, axis=-1)
    a = np.einsum("...j,jwv->...wv", kappa, op.coeff_stack)
    ghat = 1j * np.einsum("...wv,...v->...w", a, uhat)
    g = np.fft.ifftn(ghat, axes=tuple(range(u.n)))
    return GridField(u.origin.copy(), u.spacing.copy(),
                     np.ascontiguousarray(g.real), periodic=True)


@dataclass
class HomogeneityReport:
    """Residuals of the (1-n)-homogeneity of the physical-space kernel."""

    scale: float
    base_offsets: list
    residuals: list
    max_residual: float
    mollifier_width: float
    resolution: int


def kernel_homogeneity_check(
    op: Operator,
    scale: float = 2.0,
    resolution: int = 512,
    width_cells: int = 4,
    base_radius_cells: int = 12,
) -> HomogeneityReport:
    """Sample the convolution kernel and test K(s x) s^(n-1) against K(x).

    The kernel columns are reconstructed from a mollified point source of
    unit mass; samples are taken at integer cell offsets so both x and s*x
    land exactly on cell centers.  Valid outside the mollification radius.
    """
    require_elliptic(op)
    if op.n != 2:
        raise InputError("kernel sampling is implemented on 2-D grids")
    grid = make_grid(np.zeros(2), np.ones(2), resolution, op.dim_w, periodic=True)
    h = grid.spacing[0]
    width = width_cells * h
    center_idx = (resolution // 2, resolution // 2)
    c0 = grid.center_of(center_idx)
    pts = grid.cell_centers()
    eta = bump_value((pts - c0) / width, 2)
    eta = eta / (np.sum(eta) * grid.cell_volume)
    columns = []
    for w in range(op.dim_w):
        gdata = np.zeros(grid.dims + (op.dim_w,))
        gdata[..., w] = eta
        g = GridField(grid.origin.copy(), grid.spacing.copy(), gdata, periodic=True)
        u = fourier_reconstruct(op, g, enforce_zero_mean=False)
        columns.append(u.data)
    # K[:, w] sampled at cell offsets from the source
    base = [(base_radius_cells, 0), (0, base_radius_cells),
            (base_radius_cells, base_radius_cells),
            (base_radius_cells, -base_radius_cells),
            (-base_radius_cells, 0), (0, -base_radius_cells)]
    s = int(round(scale))
    if abs(scale - s) > 1e-12:
        raise InputError("scale must be an integer so that s*x stays on the lattice")
    residuals = []
    for off in base:
        idx1 = (center_idx[0] + off[0], center_idx[1] + off[1])
        idx2 = (center_idx[0] + s * off[0], center_idx[1] + s * off[1])
        k1 = np.stack([col[idx1] for col in columns], axis=-1)  # (dimV, dimW)
        k2 = np.stack([col[idx2] for col in columns], axis=-1)
        num = np.linalg.norm(k2 * float(s) ** (op.n - 1) - k1)
        residuals.append(float(num / np.linalg.norm(k1)))
    return HomogeneityReport(
        scale=float(scale),
        base_offsets=base,
        residuals=residuals,
        max_residual=float(max(residuals)),
        mollifier_width=width,
        resolution=resolution,
    )
