import numpy as np
import pytest

from difflab.ballcalc import Ball
from difflab.errors import InputError, ResolutionError
from difflab.fieldgen import (
    BandLimitedSpec,
    MollifiedSpec,
    PiecewiseKernelSpec,
    PolynomialSpec,
    bump_value,
    mollify,
    pairing_residual,
    random_test_functions,
    realize,
    rigid_motion,
)
from difflab.grids import make_grid
from difflab.operators import symmetric_gradient, wirtinger
from difflab.polynomials import PolynomialField, monomial


EPS = symmetric_gradient(2)


def _line_spec(rotation=0.0, translation=(0.0, 1.0)):
    return PiecewiseKernelSpec(
        point=(0.5, 0.5),
        normal=(1.0, 0.0),
        minus=rigid_motion(2, (0.0, 0.0)),
        plus=rigid_motion(2, translation, rotation=rotation),
    )


def test_realize_is_deterministic():
    spec = BandLimitedSpec(seed=9, band=3)
    u1, mu1 = realize(spec, EPS, resolution=32)
    u2, mu2 = realize(spec, EPS, resolution=32)
    assert np.array_equal(u1.data, u2.data)
    assert np.array_equal(mu1.ac.data, mu2.ac.data)


def test_band_limited_has_no_singular_part_and_zero_mean():
    u, mu = realize(BandLimitedSpec(seed=1, band=2), EPS, resolution=64)
    assert mu.pieces == []
    assert np.max(np.abs(u.data.mean(axis=(0, 1)))) <= 1e-12


def test_piecewise_surface_density_hand_value():
    # jump (0,1) across x1 = 0.5 with nu = e1: density is the symmetric
    # matrix with entries (0, 1/2; 1/2, 0), flattened row-major
    u, mu = realize(_line_spec(), EPS, resolution=32)
    assert len(mu.pieces) == 1
    piece = mu.pieces[0]
    assert np.allclose(piece.density, [[0.0, 0.5, 0.5, 0.0]])
    assert np.max(np.abs(mu.ac.data)) == 0.0
    # values jump across the interface
    left = u.value_at(np.array([0.25, 0.5]))
    right = u.value_at(np.array([0.75, 0.5]))
    assert np.allclose(right - left, [0.0, 1.0])


def test_polynomial_kernel_spec_gives_zero_measure():
    spec = PolynomialSpec(rigid_motion(2, (0.5, -1.0), rotation=2.0))
    u, mu = realize(spec, EPS, resolution=32)
    assert np.max(np.abs(mu.ac.data)) <= 1e-12
    assert mu.pieces == []


def test_polynomial_spec_nonkernel_density():
    p = monomial(2, 2, 0, (2, 0))  # u = (x^2, 0), eps u has entry d1u1 = 2x
    u, mu = realize(PolynomialSpec(p), EPS, resolution=16)
    pts = mu.ac.cell_centers()
    assert np.allclose(mu.ac.data[..., 0], 2.0 * pts[..., 0])


def test_piecewise_rejects_non_kernel_piece():
    bad = PiecewiseKernelSpec(
        point=(0.5, 0.5), normal=(1.0, 0.0),
        minus=monomial(2, 2, 0, (2, 0)), plus=rigid_motion(2, (0.0, 1.0)),
    )
    with pytest.raises(InputError):
        realize(bad, EPS, resolution=16)


def test_mollify_preserves_constants():
    grid = make_grid(np.zeros(2), np.ones(2), 64, 1, periodic=True)
    grid.data[:] = 4.2
    out = mollify(grid, 8 * grid.spacing[0])
    assert np.max(np.abs(out.data - 4.2)) <= 1e-12


def test_mollify_preserves_affine_interior():
    grid = make_grid(np.zeros(2), np.ones(2), 64, 1)
    pts = grid.cell_centers()
    grid.data[..., 0] = 2.0 * pts[..., 0] - pts[..., 1]
    eps = 6 * grid.spacing[0]
    out = mollify(grid, eps)
    m = 8
    interior = slice(m, -m)
    assert np.max(np.abs(out.data[interior, interior] - grid.data[interior, interior])) <= 1e-12


def test_mollify_commutes_with_cell_translation():
    grid = make_grid(np.zeros(2), np.ones(2), 64, 1, periodic=True)
    rng = np.random.default_rng(4)
    grid.data[:] = rng.standard_normal(grid.data.shape)
    eps = 5 * grid.spacing[0]
    rolled = grid.like(np.roll(grid.data, (3, -2), axis=(0, 1)))
    lhs = mollify(rolled, eps).data
    rhs = np.roll(mollify(grid, eps).data, (3, -2), axis=(0, 1))
    assert np.max(np.abs(lhs - rhs)) <= 1e-12


def test_mollify_width_guard():
    grid = make_grid(np.zeros(2), np.ones(2), 16, 1)
    with pytest.raises(ResolutionError):
        mollify(grid, 1.4 * grid.spacing[0])


def test_mollify_smooths_jump_to_transition_band():
    u, _ = realize(_line_spec(), EPS, resolution=128)
    eps = 8 * u.spacing[0]
    um = mollify(u, eps)
    x = um.cell_centers()[..., 0]
    mid = 64
    col = um.data[:, mid, 1]
    xs = x[:, mid]
    # outside the 2*eps band the field is unchanged; inside it is monotone
    outside = np.abs(xs - 0.5) > eps
    assert np.max(np.abs(col[outside] - np.where(xs[outside] >= 0.5, 1.0, 0.0))) <= 1e-10
    band = np.abs(xs - 0.5) <= eps
    assert np.all(np.diff(col[band]) >= -1e-12)


def test_mollified_spec_realizes_smooth_measure():
    eps = 8.0 / 64.0
    spec = MollifiedSpec(_line_spec(), eps)
    u, mu = realize(spec, EPS, resolution=64)
    assert mu.pieces == []
    # total mass of the smeared interface density matches the line integral
    total = np.sum(np.linalg.norm(mu.ac.data, axis=-1)) * mu.ac.cell_volume
    assert abs(total - 0.5 * np.sqrt(2.0) / 1.0) <= 0.05 * total


def test_bump_has_unit_mass():
    n = 2
    m = 400
    xs = np.linspace(-1, 1, m, endpoint=False) + 1.0 / m
    pts = np.stack(np.meshgrid(xs, xs, indexing="ij"), axis=-1)
    mass = np.sum(bump_value(pts, n)) * (2.0 / m) ** 2
    assert abs(mass - 1.0) <= 1e-6


@pytest.mark.parametrize("rotation,translation", [
    (0.0, (0.0, 1.0)),
    (0.7, (0.3, -0.2)),
])
def test_distributional_pairing(rotation, translation):
    spec = PiecewiseKernelSpec(
        point=(0.48, 0.52), normal=(0.8, 0.6),
        minus=rigid_motion(2, (0.1, 0.2), rotation=-0.4),
        plus=rigid_motion(2, translation, rotation=rotation),
    )
    u, mu = realize(spec, EPS, resolution=256)
    for phi in random_test_functions(EPS, 20, seed=8):
        assert pairing_residual(EPS, spec, u, mu, phi) <= 1e-3


def test_rigid_motion_is_killed():
    from difflab.polynomials import apply_to_polynomial

    rm = rigid_motion(2, (1.0, -2.0), rotation=0.5)
    assert apply_to_polynomial(EPS, rm).coeffs == {}


def test_wirtinger_kernel_pieces_allowed():
    # holomorphic-type pairs are in the null-space of the 2-D operator
    p = PolynomialField(2, 2, {(0, (1, 0)): 1.0, (1, (0, 1)): -1.0})
    spec = PiecewiseKernelSpec((0.5, 0.5), (1.0, 0.0),
                               minus=PolynomialField(2, 2, {}), plus=p)
    u, mu = realize(spec, wirtinger(), resolution=32)
    assert len(mu.pieces) == 1
