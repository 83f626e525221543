"""Poincare-Sobolev ratio experiments and empirical sharp constants.

The smooth-form ratio compares the n/(n-1)-mean of the projection residual
against ``r * (ball average of |Au|)`` with the derivative taken by centered
differences; the measure form replaces the right side by the total variation
of the derivative measure over the closed ball, normalized by the exact ball
volume so the two forms agree whenever the singular part vanishes.  Both
refuse operators without a finite-dimensional null-space: no projection onto
the kernel exists.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .ballcalc import Ball, kernel_projection_basis, l2_project, unit_ball_volume
from .errors import EmptySearchError, InputError, PreconditionError
from .fieldgen import (
    BandLimitedSpec,
    PiecewiseKernelSpec,
    band_limited_modes,
    realize,
    synthesize_band_limited,
)
from .grids import (
    GridField,
    apply_operator_fd,
    ball_points_values,
    make_grid,
    require_ball_resolution,
)
from .measures import MeasureField
from .nullspace import NullspaceReport, fdn_report, full_kernel_basis
from .operators import Operator
from .polynomials import PolynomialField
from .rng import stream

_fdn_cache: dict = {}


def require_fdn(op: Operator):
    """FDN report + full kernel basis, cached; PreconditionError otherwise."""
    key = (op.n, op.dim_v, op.dim_w, op.coeff_stack.tobytes())
    if key not in _fdn_cache:
        report = fdn_report(op)
        basis = full_kernel_basis(op, report) if report.is_fdn else None
        _fdn_cache[key] = (report, basis)
    report, basis = _fdn_cache[key]
    if not report.is_fdn:
        raise PreconditionError(
            f"operator {op.name} has no finite-dimensional null-space up to degree "
            f"{report.degree_cap}; no finite-dimensional projection exists"
        )
    return report, basis


@dataclass
class RatioReport:
    """One evaluation of the inequality: lhs, rhs and their ratio.

    ``outcome`` is "degenerate" when the field lies in the null-space (0/0);
    ``boundary_touching_pieces`` counts singular pieces meeting the sphere of
    the closed ball (measure form only).
    """

    lhs: float
    rhs: float
    ratio: float
    outcome: str
    descriptor: str
    ball: Ball
    form: str
    boundary_touching_pieces: int = 0


def _critical_exponent(n: int) -> float:
    if n < 2:
        raise InputError("the critical exponent n/(n-1) requires n >= 2")
    return n / (n - 1.0)


def _projection_residual_mean(op, u, ball, kernel_basis, p_star):
    pb = kernel_projection_basis(op, ball, kernel_basis)
    pts, vals = ball_points_values(u, ball.center, ball.radius)
    proj = l2_project(u, pb)
    resid = vals - proj.evaluate(pts)
    mags = np.linalg.norm(resid, axis=-1)
    lhs = float(np.mean(mags**p_star) ** (1.0 / p_star))
    scale = float(np.mean(np.linalg.norm(vals, axis=-1)))
    return lhs, scale


def poincare_sobolev_ratio(
    op: Operator,
    u: GridField,
    ball: Ball,
    descriptor: str = "",
    kernel_basis=None,
) -> RatioReport:
    """Smooth-form ratio with the derivative by centered finite differences."""
    if kernel_basis is None:
        _, kernel_basis = require_fdn(op)
    require_ball_resolution(u, ball.radius, min_cells=16)
    p_star = _critical_exponent(op.n)
    lhs, scale = _projection_residual_mean(op, u, ball, kernel_basis, p_star)
    au = apply_operator_fd(op, u)
    pts, avals = ball_points_values(au, ball.center, ball.radius)
    rhs = ball.radius * float(np.mean(np.linalg.norm(avals, axis=-1)))
    tiny = 1e-10 * (1.0 + scale)
    if lhs <= tiny and rhs <= tiny:
        return RatioReport(lhs, rhs, float("nan"), "degenerate", descriptor, ball, "smooth")
    return RatioReport(lhs, rhs, lhs / rhs, "ok", descriptor, ball, "smooth")


def poincare_sobolev_ratio_measure(
    op: Operator,
    mu: MeasureField,
    u: GridField,
    ball: Ball,
    descriptor: str = "",
    kernel_basis=None,
) -> RatioReport:
    """Measure-form ratio: rhs = r * |Au|(closed ball) / |B_r|.

    Normalizing the total variation by the exact ball volume keeps the
    measure form consistent with the smooth form when the singular part is
    empty; the dimensional factor is absorbed into the empirical constant.
    """
    if kernel_basis is None:
        _, kernel_basis = require_fdn(op)
    require_ball_resolution(u, ball.radius, min_cells=16)
    p_star = _critical_exponent(op.n)
    lhs, scale = _projection_residual_mean(op, u, ball, kernel_basis, p_star)
    variation = mu.total_variation_ball(ball)
    volume = unit_ball_volume(op.n) * ball.radius**op.n
    rhs = ball.radius * variation.total / volume
    tiny = 1e-10 * (1.0 + scale)
    if lhs <= tiny and rhs <= tiny:
        return RatioReport(lhs, rhs, float("nan"), "degenerate", descriptor, ball,
                           "measure", variation.boundary_touching_pieces)
    return RatioReport(lhs, rhs, lhs / rhs, "ok", descriptor, ball, "measure",
                       variation.boundary_touching_pieces)


# ---------------------------------------------------------------------------
# sharp-constant search

@dataclass(frozen=True)
class SharpSearchConfig:
    resolution: int = 128
    band: int = 3
    band_trials: int = 20
    piecewise_trials: int = 20
    refine_steps: int = 120
    seed: int = 0
    plateau: int = 10  # rejected proposals before the step decays by 0.5


@dataclass
class SharpConstantEstimate:
    value: float
    argmax_descriptor: str
    trial_count: int
    history: list = field(default_factory=list)


def _box_for_ball(ball: Ball, margin: float = 1.2):
    half = margin * ball.radius
    return ball.center - half, ball.center + half


class _BandTrial:
    """Band-limited trial with the mode coefficients as search parameters."""

    def __init__(self, op, ball, cfg, seed_label):
        self.op = op
        self.ball = ball
        self.cfg = cfg
        self.modes = band_limited_modes(op.n, cfg.band)
        rng = stream(cfg.seed, seed_label)
        raw = rng.standard_normal((op.dim_v, len(self.modes), 2))
        self.params = raw.ravel() / np.sqrt(len(self.modes))
        self.label = seed_label

    def evaluate(self, params, kernel_basis):
        box_min, box_max = _box_for_ball(self.ball)
        grid = make_grid(box_min, box_max, self.cfg.resolution, self.op.dim_v, periodic=True)
        raw = params.reshape(self.op.dim_v, len(self.modes), 2)
        coeffs = raw[..., 0] + 1j * raw[..., 1]
        u, mu = synthesize_band_limited(self.op, coeffs, self.modes, grid)
        rep = poincare_sobolev_ratio_measure(self.op, mu, u, self.ball,
                                             self.label, kernel_basis)
        return rep


class _PiecewiseTrial:
    """Piecewise null-space trial: interface offset/angle and piece coefficients."""

    def __init__(self, op, ball, cfg, kernel_basis, seed_label):
        self.op = op
        self.ball = ball
        self.cfg = cfg
        self.kernel_basis = kernel_basis
        d = len(kernel_basis)
        rng = stream(cfg.seed, seed_label)
        offset = rng.uniform(-0.6, 0.6) * ball.radius
        angle = rng.uniform(0.0, np.pi)
        pieces = rng.standard_normal(2 * d)
        self.params = np.concatenate([[offset, angle], pieces])
        self.label = seed_label

    def _spec(self, params):
        offset, angle = params[0], params[1]
        d = len(self.kernel_basis)
        a_minus = params[2 : 2 + d]
        a_plus = params[2 + d :]
        normal = np.array([np.cos(angle), np.sin(angle)])
        point = self.ball.center + offset * normal
        zero = PolynomialField(self.op.n, self.op.dim_v, {})
        minus, plus = zero, zero
        for c, k in zip(a_minus, self.kernel_basis):
            minus = minus + k.scale(float(c))
        for c, k in zip(a_plus, self.kernel_basis):
            plus = plus + k.scale(float(c))
        return PiecewiseKernelSpec(tuple(point), tuple(normal), minus, plus)

    def evaluate(self, params, kernel_basis):
        box_min, box_max = _box_for_ball(self.ball)
        spec = self._spec(params)
        u, mu = realize(spec, self.op, box_min, box_max, self.cfg.resolution)
        return poincare_sobolev_ratio_measure(self.op, mu, u, self.ball,
                                              self.label, kernel_basis)


def _hill_climb(trial, kernel_basis, cfg: SharpSearchConfig):
    params = trial.params.copy()
    rep = trial.evaluate(params, kernel_basis)
    best = rep.ratio if rep.outcome == "ok" else 0.0
    steps = 0.3 * np.abs(params) + 0.1
    rejected = 0
    proposals = 0
    i = 0
    while proposals < cfg.refine_steps and np.max(steps) > 1e-3:
        i = (i + 1) % len(params)
        for sign in (1.0, -1.0):
            cand = params.copy()
            cand[i] += sign * steps[i]
            rep_c = trial.evaluate(cand, kernel_basis)
            proposals += 1
            val = rep_c.ratio if rep_c.outcome == "ok" else 0.0
            if val > best:
                best, params, rejected = val, cand, 0
                break
            rejected += 1
            if rejected >= cfg.plateau:
                steps *= 0.5
                rejected = 0
            if proposals >= cfg.refine_steps:
                break
    return best


def estimate_sharp_constant(
    op: Operator,
    ball: Ball,
    cfg: SharpSearchConfig = SharpSearchConfig(),
    extra_reports=None,
) -> SharpConstantEstimate:
    """Running max of the measure-form ratio over generated trial fields.

    Random band-limited and piecewise null-space fields are scored, then the
    best trial's parameters are polished by coordinate-wise hill climbing
    with multiplicative step decay on plateaus.  ``extra_reports`` may inject
    ratio observations from other experiments into the running max.
    """
    total = cfg.band_trials + cfg.piecewise_trials
    if total < 1:
        raise EmptySearchError("sharp-constant search needs at least one trial")
    _, kernel_basis = require_fdn(op)
    history = []
    best_val, best_desc, best_trial = 0.0, "", None
    trials = []
    for t in range(cfg.band_trials):
        trials.append(_BandTrial(op, ball, cfg, f"sharp/band/{t}"))
    if op.n == 2:
        for t in range(cfg.piecewise_trials):
            trials.append(_PiecewiseTrial(op, ball, cfg, kernel_basis, f"sharp/pw/{t}"))
    for trial in trials:
        rep = trial.evaluate(trial.params, kernel_basis)
        val = rep.ratio if rep.outcome == "ok" else 0.0
        if val > best_val:
            best_val, best_desc, best_trial = val, trial.label, trial
        history.append(best_val)
    if best_trial is not None and cfg.refine_steps > 0:
        refined = _hill_climb(best_trial, kernel_basis, cfg)
        if refined > best_val:
            best_val = refined
            best_desc = best_trial.label + "+refined"
        history.append(best_val)
    count = len(trials)
    for rep in extra_reports or []:
        if rep.outcome == "ok" and rep.ratio > best_val:
            best_val = rep.ratio
            best_desc = rep.descriptor or "extra"
        history.append(best_val)
        count += 1
    return SharpConstantEstimate(
        value=best_val,
        argmax_descriptor=best_desc,
        trial_count=count,
        history=history,
    )
