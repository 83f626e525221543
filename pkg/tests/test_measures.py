import numpy as np
import pytest

from difflab.ballcalc import Ball
from difflab.errors import InputError
from difflab.grids import make_grid
from difflab.measures import BallVariation, MeasureField, SegmentPiece, TrianglePiece


def _zero_ac(dim_w=1, res=32):
    return make_grid(np.zeros(2), np.ones(2), res, dim_w)


def test_segment_constant_density_full_length():
    piece = SegmentPiece(np.array([0.0, 0.0]), np.array([2.0, 0.0]), [[3.0]])
    assert abs(piece.abs_integral() - 6.0) <= 1e-12


def test_segment_clip_diameter_chord():
    # vertical segment through the center of a ball: chord = 2r
    piece = SegmentPiece(np.array([0.5, 0.0]), np.array([0.5, 1.0]), [[1.0]])
    ball = Ball(np.array([0.5, 0.5]), 0.25)
    t0, t1 = piece.clip_to_ball(ball)
    assert abs(t0 - 0.25) <= 1e-12 and abs(t1 - 0.75) <= 1e-12
    assert abs(piece.abs_integral_in_ball(ball) - 0.5) <= 1e-12
    assert piece.touches_sphere(ball)


def test_segment_outside_ball():
    piece = SegmentPiece(np.array([0.0, 0.0]), np.array([1.0, 0.0]), [[1.0]])
    ball = Ball(np.array([0.5, 0.9]), 0.2)
    assert piece.clip_to_ball(ball) is None
    assert piece.abs_integral_in_ball(ball) == 0.0
    assert not piece.touches_sphere(ball)


def test_segment_fully_inside_not_touching():
    piece = SegmentPiece(np.array([0.45, 0.5]), np.array([0.55, 0.5]), [[1.0]])
    ball = Ball(np.array([0.5, 0.5]), 0.25)
    assert piece.clip_to_ball(ball) == (0.0, 1.0)
    assert not piece.touches_sphere(ball)


def test_segment_affine_density_hand_integral():
    # |density(t)| = |2t - 1| on a unit-length segment: integral = 1/2
    piece = SegmentPiece(np.array([0.0, 0.0]), np.array([1.0, 0.0]),
                         [[-1.0], [2.0]])
    ball = Ball(np.array([0.5, 0.0]), 10.0)
    assert abs(piece.abs_integral_in_ball(ball) - 0.5) <= 1e-3


def test_total_variation_combines_parts():
    ac = _zero_ac()
    ac.data[:] = 2.0  # |density| = 2 everywhere
    piece = SegmentPiece(np.array([0.5, 0.0]), np.array([0.5, 1.0]), [[1.0, 0.0]])
    mu = MeasureField(ac, [piece])
    ball = Ball(np.array([0.5, 0.5]), 0.25)
    var = mu.total_variation_ball(ball)
    assert isinstance(var, BallVariation)
    # AC part ~ 2 * area, quadrature-level accuracy
    assert abs(var.ac_part - 2.0 * np.pi * 0.25**2) <= 0.02
    assert abs(var.singular_part - 0.5) <= 1e-12
    assert abs(var.total - var.ac_part - var.singular_part) <= 1e-15
    assert var.boundary_touching_pieces == 1


def test_shifted_ac():
    ac = _zero_ac(dim_w=2)
    mu = MeasureField(ac, [])
    shifted = mu.shifted_ac(np.array([1.0, -2.0]))
    assert np.allclose(shifted.ac.data[..., 0], -1.0)
    assert np.allclose(shifted.ac.data[..., 1], 2.0)


def test_triangle_area_and_integral():
    tri = TrianglePiece(
        np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]),
        lambda pts: np.ones((len(pts), 1)),
    )
    assert abs(tri.area - 0.5) <= 1e-12
    big = Ball(np.zeros(3), 10.0)
    assert abs(tri.abs_integral_in_ball(big) - 0.5) <= 1e-12
    half = Ball(np.zeros(3), 0.5)
    inside = tri.abs_integral_in_ball(half)
    # quarter-disc area pi/16, subdivision quadrature is first order
    assert abs(inside - np.pi / 16.0) <= 0.01
    assert tri.touches_sphere(half)


def test_segment_requires_2d():
    with pytest.raises(InputError):
        SegmentPiece(np.zeros(3), np.ones(3), [[1.0]])
