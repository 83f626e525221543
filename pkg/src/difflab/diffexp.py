"""Lp differentiability experiments: excess decay, structure identity, and
the two-term decomposition of the excess.

The approximate gradient at a point is the least-squares affine fit over a
small ball; the p-excess is the p-mean of the Taylor remainder over shrinking
balls, and its log-log slope against the radius decides the o(r) verdict.
The decomposition splits the critical excess into a rescaled total-variation
term and a projected-part term, whose sum (with the empirical inequality
constant) must dominate the excess.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .ballcalc import Ball, kernel_projection_basis, l2_project, unit_ball_volume
from .errors import InputError, ResolutionError
from .fieldgen import PiecewiseKernelSpec, mollify, realize
from .grids import GridField, ball_points_values, require_ball_resolution
from .inequality import require_fdn
from .measures import MeasureField, SegmentPiece
from .operators import Operator
from .rng import stream

EXCESS_FLOOR_RTOL = 1e-14
RESIDUAL_FLAG_RTOL = 0.05


@dataclass
class ApproxGradient:
    """Affine least-squares fit over a ball: value, matrix and fit residual."""

    point: np.ndarray
    value: np.ndarray
    grid_value: np.ndarray
    matrix: np.ndarray  # (dimV, n)
    fit_radius: float
    residual: float
    residual_flag: bool


def approx_gradient(u: GridField, x, r_fit: float) -> ApproxGradient:
    """Fit value + matrix minimizing the quadratic excess over the ball."""
    x = np.asarray(x, dtype=float)
    require_ball_resolution(u, r_fit)
    pts, vals = ball_points_values(u, x, r_fit)
    if len(pts) < u.n + 1:
        raise ResolutionError("not enough cells in the fit ball")
    design = np.hstack([np.ones((len(pts), 1)), pts - x])
    sol, _, _, _ = np.linalg.lstsq(design, vals, rcond=None)
    fitted = design @ sol
    resid = vals - fitted
    rms = float(np.sqrt(np.mean(np.sum(resid**2, axis=1))))
    spread = float(np.sqrt(np.mean(np.sum((vals - vals.mean(axis=0)) ** 2, axis=1))))
    flag = rms > RESIDUAL_FLAG_RTOL * (spread + 1e-300) and spread > 0
    return ApproxGradient(
        point=x,
        value=sol[0].copy(),
        grid_value=u.value_at(x).copy(),
        matrix=np.ascontiguousarray(sol[1:].T),
        fit_radius=float(r_fit),
        residual=rms,
        residual_flag=bool(flag),
    )


def operator_of_matrix(op: Operator, matrix: np.ndarray) -> np.ndarray:
    """A(M): apply each coefficient matrix to the matching gradient column."""
    return np.einsum("jwv,vj->w", op.coeff_stack, matrix)


@dataclass
class DecompositionRow:
    """One (point, radius) row of the excess decomposition."""

    radius: float
    term_tv: float  # r * |A v|(closed ball) / |B_r|
    term_proj: float  # critical mean of the projected part
    total_excess: float
    residual_mean: float  # critical mean of v - proj v
    proj_l1_mean: float
    v_l1_mean: float
    triangle_ok: bool
    boundary_touching_pieces: int = 0


@dataclass
class ExcessReport:
    """Excess values over dyadic radii and the fitted decay slope."""

    point: np.ndarray
    exponent: float
    radii: list
    excess: list
    beta: float
    differentiable: bool
    vanishing: bool
    fit: ApproxGradient | None = None
    decomposition: list = field(default_factory=list)


def dyadic_radii(u: GridField, r0: float | None = None, count: int = 6,
                 min_cells: int = 8) -> list:
    """r0 * 2^-k truncated at the resolution floor; needs >= 4 usable radii."""
    box = float(np.min(u.box_max - u.box_min))
    if r0 is None:
        r0 = box / 8.0
    floor = 0.5 * min_cells * float(np.max(u.spacing))
    radii = [r0 * 2.0**-k for k in range(count)]
    radii = [r for r in radii if r >= floor - 1e-12]
    if len(radii) < 4:
        raise ResolutionError(
            f"only {len(radii)} dyadic radii fit between {r0} and the grid floor "
            f"{floor}; slope fits need at least 4"
        )
    return radii


def excess(
    u: GridField,
    x,
    matrix: np.ndarray,
    u_at_x: np.ndarray,
    p: float,
    radii,
    fit: ApproxGradient | None = None,
) -> ExcessReport:
    """E_p(x, r) over the radii and the least-squares slope of log E vs log r.

    Radii where the excess is exactly zero (locally affine fields) are
    clamped to a tiny floor before fitting; if every radius is at the floor
    the excess vanishes identically and the slope is reported as inf.
    """
    x = np.asarray(x, dtype=float)
    if p < 1:
        raise InputError("exponent p must be >= 1")
    radii = sorted(radii, reverse=True)
    if len(radii) < 4:
        raise InputError("slope fits need at least 4 radii")
    require_ball_resolution(u, radii[-1])
    u_at_x = np.asarray(u_at_x, dtype=float)
    matrix = np.asarray(matrix, dtype=float)
    pts, vals = ball_points_values(u, x, radii[0])
    values = []
    for r in radii:
        total, count = _kernels.affine_excess_power_sum(
            pts, vals, x, r, u_at_x, matrix, p
        )
        if count == 0:
            raise ResolutionError(f"no cells in ball of radius {r}")
        values.append((total / count) ** (1.0 / p))
    floor = EXCESS_FLOOR_RTOL * (1.0 + float(np.max(np.abs(u.data))))
    clamped = np.maximum(values, floor)
    if np.all(clamped <= floor):
        return ExcessReport(x, p, list(radii), values, float("inf"), True, True, fit)
    slope = np.polyfit(np.log(radii), np.log(clamped), 1)[0]
    return ExcessReport(x, p, list(radii), values, float(slope), bool(slope > 1.0),
                        False, fit)


def excess_decomposition(
    op: Operator,
    u: GridField,
    mu: MeasureField,
    x,
    radius: float,
    fit: ApproxGradient,
    kernel_basis=None,
) -> DecompositionRow:
    """Split the critical excess at one radius into TV and projection terms.

    v = u - u(x) - M(. - x); its measure is mu with the AC density shifted
    by A(M).  The triangle check asserts that the excess is dominated by the
    critical mean of (v - proj v) plus the projected term (exact Minkowski
    in the discrete measure).
    """
    if kernel_basis is None:
        _, kernel_basis = require_fdn(op)
    x = np.asarray(x, dtype=float)
    p_star = op.n / (op.n - 1.0)
    centers = u.cell_centers()
    affine = fit.grid_value + np.einsum("vj,...j->...v", fit.matrix, centers - x)
    v = u.like(u.data - affine)
    mu_v = mu.shifted_ac(operator_of_matrix(op, fit.matrix))
    ball = Ball(x, radius)
    variation = mu_v.total_variation_ball(ball)
    volume = unit_ball_volume(op.n) * radius**op.n
    term_tv = radius * variation.total / volume
    pb = kernel_projection_basis(op, ball, kernel_basis)
    proj = l2_project(v, pb)
    pts, vvals = ball_points_values(v, x, radius)
    pvals = proj.evaluate(pts)
    vmag = np.linalg.norm(vvals, axis=-1)
    pmag = np.linalg.norm(pvals, axis=-1)
    rmag = np.linalg.norm(vvals - pvals, axis=-1)
    total_excess = float(np.mean(vmag**p_star) ** (1.0 / p_star))
    term_proj = float(np.mean(pmag**p_star) ** (1.0 / p_star))
    residual_mean = float(np.mean(rmag**p_star) ** (1.0 / p_star))
    triangle_ok = total_excess <= residual_mean + term_proj + 1e-12 * (1 + total_excess)
    return DecompositionRow(
        radius=float(radius),
        term_tv=float(term_tv),
        term_proj=term_proj,
        total_excess=total_excess,
        residual_mean=residual_mean,
        proj_l1_mean=float(np.mean(pmag)),
        v_l1_mean=float(np.mean(vmag)),
        triangle_ok=bool(triangle_ok),
        boundary_touching_pieces=variation.boundary_touching_pieces,
    )


# ---------------------------------------------------------------------------
# experiments

def _distance_to_pieces(x, pieces) -> float:
    out = np.inf
    for piece in pieces:
        if not isinstance(piece, SegmentPiece):
            continue
        d = piece.p1 - piece.p0
        t = float(np.clip((x - piece.p0) @ d / (d @ d), 0.0, 1.0))
        out = min(out, float(np.linalg.norm(x - (piece.p0 + t * d))))
    return out


def sample_points(
    u: GridField,
    mu: MeasureField,
    count: int,
    r_max: float,
    seed: int,
    variant: str = "interior",
    exclusion_cells: int = 4,
) -> list:
    """Uniform cell-center sample points whose largest ball stays in the box.

    The interior variant excludes points within ``exclusion_cells`` grid
    cells of any singular piece; the blind variant samples uniformly.
    """
    rng = stream(seed, f"diffexp/sample-points/{variant}")
    h = float(np.max(u.spacing))
    margin = r_max + h
    lo = u.box_min + margin
    hi = u.box_max - margin
    if np.any(hi <= lo):
        raise InputError("largest radius does not fit inside the domain")
    exclusion = exclusion_cells * h
    points = []
    attempts = 0
    while len(points) < count and attempts < 1000 * count:
        attempts += 1
        x = u.center_of(u.nearest_index(rng.uniform(lo, hi)))
        if np.any(x < lo) or np.any(x > hi):
            continue
        if variant == "interior" and _distance_to_pieces(x, mu.pieces) < exclusion:
            continue
        points.append(x)
    if len(points) < count:
        raise InputError("could not place the requested number of sample points")
    return points


def interface_probe_points(u: GridField, mu: MeasureField, count: int, seed: int) -> list:
    """Cell centers snapped onto singular pieces, for on-interface probes."""
    segs = [p for p in mu.pieces if isinstance(p, SegmentPiece)]
    if not segs:
        raise InputError("field has no singular pieces to probe")
    rng = stream(seed, "diffexp/interface-probes")
    pts = []
    for _ in range(count):
        seg = segs[rng.integers(len(segs))]
        t = rng.uniform(0.25, 0.75)
        y = seg.p0 + t * (seg.p1 - seg.p0)
        pts.append(u.center_of(u.nearest_index(y)))
    return pts


@dataclass
class PointResult:
    point: np.ndarray
    fit: ApproxGradient
    reports: dict  # exponent -> ExcessReport
    decomposition: list


@dataclass
class RateExperimentReport:
    exponent: float
    results: list
    pass_fraction: float
    median_beta: float
    variant: str

    def betas(self) -> np.ndarray:
        return np.array([res.reports[self.exponent].beta for res in self.results])


def critical_rate_experiment(
    op: Operator,
    u: GridField,
    mu: MeasureField,
    points,
    radii,
    exponents=None,
    kernel_basis=None,
    decompose: bool = False,
    beta_threshold: float = 1.0,
    variant: str = "interior",
) -> RateExperimentReport:
    """Per-point excess reports at the critical exponent (plus any others)."""
    if kernel_basis is None:
        _, kernel_basis = require_fdn(op)
    p_star = op.n / (op.n - 1.0)
    if exponents is None:
        exponents = [1.0, 1.5, p_star]
    exponents = sorted(set(list(exponents) + [p_star]))
    radii = sorted(radii, reverse=True)
    results = []
    for x in points:
        fit = approx_gradient(u, x, radii[-1])
        reports = {}
        for p in exponents:
            reports[p] = excess(u, x, fit.matrix, fit.grid_value, p, radii, fit)
        rows = []
        if decompose:
            for r in radii:
                rows.append(
                    excess_decomposition(op, u, mu, x, r, fit, kernel_basis)
                )
            reports[p_star].decomposition = rows
        results.append(PointResult(np.asarray(x, float), fit, reports, rows))
    betas = np.array([res.reports[p_star].beta for res in results])
    passed = np.sum(betas > beta_threshold)
    return RateExperimentReport(
        exponent=p_star,
        results=results,
        pass_fraction=float(passed / len(results)) if results else 0.0,
        median_beta=float(np.median(betas)) if results else float("nan"),
        variant=variant,
    )


@dataclass
class StructureReport:
    """Pointwise comparison of A(fitted gradient) against the AC density."""

    deviations: list
    max_relative_deviation: float
    scale: float
    points: list


def structure_identity_check(
    op: Operator,
    u: GridField,
    mu: MeasureField,
    points,
    r_fit: float,
) -> StructureReport:
    """Max over points of |A(M(x)) - density(x)| relative to the density scale."""
    devs = []
    scale = 0.0
    matrix_scale = 0.0
    rows = []
    for x in points:
        fit = approx_gradient(u, x, r_fit)
        predicted = operator_of_matrix(op, fit.matrix)
        actual = mu.ac.value_at(x)
        devs.append(float(np.linalg.norm(predicted - actual)))
        scale = max(scale, float(np.linalg.norm(actual)), float(np.linalg.norm(predicted)))
        matrix_scale = max(matrix_scale, float(np.linalg.norm(fit.matrix)))
        rows.append(x)
    coeff_scale = max(float(np.linalg.norm(a)) for a in op.coeffs)
    if scale <= 1e-12 * (1.0 + matrix_scale * coeff_scale):
        # both sides vanish to machine precision (null-space fields)
        return StructureReport(deviations=devs, max_relative_deviation=0.0,
                               scale=scale, points=rows)
    return StructureReport(
        deviations=devs,
        max_relative_deviation=float(max(devs) / scale),
        scale=scale,
        points=rows,
    )


@dataclass
class MollifiedGradientReport:
    eps_values: list
    deviations: list
    monotone: bool
    slope: float


def mollified_gradient_convergence(
    u: GridField,
    x,
    matrix: np.ndarray,
    eps_values,
) -> MollifiedGradientReport:
    """Centered-difference gradients of mollified fields against the fit.

    Deviations must decrease with the width (10% slack for quadrature
    wobble); the log-log slope is reported, with at least first order
    expected for the symmetric bump.
    """
    x = np.asarray(x, dtype=float)
    eps_values = sorted(eps_values, reverse=True)
    devs = []
    for eps in eps_values:
        ue = mollify(u, eps)
        idx = ue.nearest_index(x)
        grad = np.empty((u.dim, u.n))
        for j in range(u.n):
            up = list(idx)
            dn = list(idx)
            up[j] += 1
            dn[j] -= 1
            if up[j] >= u.dims[j] or dn[j] < 0:
                raise ResolutionError("point too close to the boundary")
            grad[:, j] = (ue.data[tuple(up)] - ue.data[tuple(dn)]) / (2 * u.spacing[j])
        devs.append(float(np.linalg.norm(grad - matrix)))
    monotone = all(
        devs[i + 1] <= devs[i] * 1.1 + 1e-14 for i in range(len(devs) - 1)
    )
    floor = 1e-12 * (1 + float(np.max(np.abs(u.data))))
    clamped = np.maximum(devs, floor)
    if np.all(clamped <= floor):
        slope = float("inf")
    else:
        slope = float(np.polyfit(np.log(eps_values), np.log(clamped), 1)[0])
    return MollifiedGradientReport(
        eps_values=list(eps_values),
        deviations=devs,
        monotone=bool(monotone),
        slope=slope,
    )
