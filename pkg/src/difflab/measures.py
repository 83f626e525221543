"""Discrete representation of operator-derivative measures.

The measure of a piecewise-smooth field splits into an absolutely continuous
density sampled on the grid and singular codimension-1 pieces carrying
polynomial surface densities: exact line segments in n=2, triangles with
subdivision quadrature in n=3.  Total variation over a closed ball combines
midpoint quadrature of the density with clipped surface integrals.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .ballcalc import Ball
from .errors import InputError
from .grids import GridField, _ball_slices

_GAUSS_ORDER = 16
_GAUSS_PANELS = 16
_gauss_nodes, _gauss_weights = np.polynomial.legendre.leggauss(_GAUSS_ORDER)


def _poly_eval_t(coeffs: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Evaluate W-valued polynomial with ascending t-coefficients (k, dimW)."""
    powers = t[:, None] ** np.arange(coeffs.shape[0])[None, :]
    return powers @ coeffs


@dataclass
class SegmentPiece:
    """A straight interface segment in n=2 with polynomial surface density."""

    p0: np.ndarray
    p1: np.ndarray
    density: np.ndarray  # (deg+1, dimW), ascending coefficients in t of [0,1]

    def __post_init__(self):
        self.p0 = np.asarray(self.p0, dtype=float)
        self.p1 = np.asarray(self.p1, dtype=float)
        self.density = np.atleast_2d(np.asarray(self.density, dtype=float))
        if self.p0.shape != (2,) or self.p1.shape != (2,):
            raise InputError("segment pieces require n=2 endpoints")

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.p1 - self.p0))

    def clip_to_ball(self, ball: Ball):
        """Parameter interval of the part inside the closed ball, or None."""
        d = self.p1 - self.p0
        w = self.p0 - ball.center
        a = float(d @ d)
        b = 2.0 * float(w @ d)
        c = float(w @ w) - ball.radius**2
        if a == 0.0:
            return (0.0, 1.0) if c <= 0 else None
        disc = b * b - 4.0 * a * c
        if disc < 0.0:
            return None
        root = np.sqrt(disc)
        t0 = (-b - root) / (2.0 * a)
        t1 = (-b + root) / (2.0 * a)
        lo, hi = max(t0, 0.0), min(t1, 1.0)
        if lo > hi:
            return None
        return lo, hi

    def touches_sphere(self, ball: Ball, rtol: float = 1e-9) -> bool:
        """True when the piece meets the sphere bounding the closed ball."""
        clip = self.clip_to_ball(ball)
        if clip is None:
            return False
        lo, hi = clip
        tol = rtol * ball.radius
        for t in (lo, hi):
            x = self.p0 + t * (self.p1 - self.p0)
            if abs(np.linalg.norm(x - ball.center) - ball.radius) <= tol:
                return True
        return False

    def _abs_quadrature(self, lo: float, hi: float) -> float:
        """Composite Gauss on |density|; panels tame kinks at sign changes."""
        total = 0.0
        edges = np.linspace(lo, hi, _GAUSS_PANELS + 1)
        for a, b in zip(edges[:-1], edges[1:]):
            t = 0.5 * (b - a) * _gauss_nodes + 0.5 * (b + a)
            vals = np.linalg.norm(_poly_eval_t(self.density, t), axis=1)
            total += 0.5 * (b - a) * (_gauss_weights @ vals)
        return float(total * self.length)

    def abs_integral_in_ball(self, ball: Ball) -> float:
        """Surface integral of |density| over the piece inside the closed ball."""
        clip = self.clip_to_ball(ball)
        if clip is None:
            return 0.0
        lo, hi = clip
        if hi <= lo:
            return 0.0
        return self._abs_quadrature(lo, hi)

    def abs_integral(self) -> float:
        return self._abs_quadrature(0.0, 1.0)


@dataclass
class TrianglePiece:
    """A planar triangular interface piece in n=3.

    Ball-clipped integrals use uniform barycentric subdivision with centroid
    inclusion; accuracy is first order in the subdivision width.
    """

    vertices: np.ndarray  # (3, 3)
    density_fn: object  # callable points (m,3) -> (m, dimW)
    subdivisions: int = 24

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        if self.vertices.shape != (3, 3):
            raise InputError("triangle pieces require three 3-D vertices")

    @property
    def area(self) -> float:
        a, b, c = self.vertices
        return 0.5 * float(np.linalg.norm(np.cross(b - a, c - a)))

    def _centroids(self):
        """Centroids of the k^2 congruent subtriangles, barycentric layout."""
        k = self.subdivisions
        a, b, c = self.vertices
        cents = []
        for i in range(k):
            for j in range(k - i):
                cents.append(a + (3 * i + 1) / (3 * k) * (b - a) + (3 * j + 1) / (3 * k) * (c - a))
                if i + j <= k - 2:
                    cents.append(a + (3 * i + 2) / (3 * k) * (b - a) + (3 * j + 2) / (3 * k) * (c - a))
        return np.array(cents)

    def abs_integral_in_ball(self, ball: Ball) -> float:
        cents = self._centroids()
        sub_area = self.area / len(cents)
        inside = np.linalg.norm(cents - ball.center, axis=1) <= ball.radius
        if not np.any(inside):
            return 0.0
        dens = np.linalg.norm(np.asarray(self.density_fn(cents[inside])), axis=1)
        return float(np.sum(dens) * sub_area)

    def touches_sphere(self, ball: Ball, rtol: float = 1e-9) -> bool:
        cents = self._centroids()
        d = np.linalg.norm(cents - ball.center, axis=1)
        return bool(np.any(d <= ball.radius) and np.any(d > ball.radius))


@dataclass
class BallVariation:
    total: float
    ac_part: float
    singular_part: float
    boundary_touching_pieces: int


@dataclass
class MeasureField:
    """AC density on a grid plus singular surface pieces."""

    ac: GridField
    pieces: list = field(default_factory=list)

    @property
    def dim_w(self) -> int:
        return self.ac.dim

    def total_variation_ball(self, ball: Ball) -> BallVariation:
        """Total variation over the closed ball; flags sphere-touching pieces."""
        sl = _ball_slices(self.ac, ball.center, ball.radius)
        ac_part = 0.0
        if sl is not None:
            axes = [self.ac.axis_centers(j)[sl[j]] for j in range(self.ac.n)]
            pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.ac.n)
            vals = self.ac.data[sl].reshape(-1, self.ac.dim)
            total, _count = _kernels.ball_power_sum(
                pts, vals, ball.center, ball.radius, 1.0
            )
            ac_part = total * self.ac.cell_volume
        singular = 0.0
        touching = 0
        for piece in self.pieces:
            singular += piece.abs_integral_in_ball(ball)
            if piece.touches_sphere(ball):
                touching += 1
        return BallVariation(
            total=ac_part + singular,
            ac_part=ac_part,
            singular_part=singular,
            boundary_touching_pieces=touching,
        )

    def shifted_ac(self, constant: np.ndarray) -> "MeasureField":
        """The measure of v = u - affine: AC density shifted by a constant."""
        constant = np.asarray(constant, dtype=float)
        return MeasureField(self.ac.like(self.ac.data - constant), list(self.pieces))
