import numpy as np
import pytest

from difflab.errors import InputError
from difflab.nullspace import fdn_report, full_kernel_basis, homogeneous_kernel_basis
from difflab.operators import (
    Operator,
    directional_null_witness,
    divergence,
    gradient,
    symmetric_gradient,
    wirtinger,
)
from difflab.polynomials import apply_to_polynomial, multi_indices


def kernel_dim_oracle(op, degree, rng):
    """Brute-force kernel dimension: constraint rows built by sampling the
    operator action with central finite differences of monomial evaluations
    at random points (no symbolic differentiation involved)."""
    alphas = multi_indices(op.n, degree)
    unknowns = [(c, a) for c in range(op.dim_v) for a in alphas]
    pts = rng.uniform(-1.0, 1.0, size=(len(unknowns) + 8, op.n))
    h = 1e-5
    rows = []
    for pt in pts:
        cols = np.zeros((op.dim_w, len(unknowns)))
        for col, (comp, alpha) in enumerate(unknowns):
            powers = np.array(alpha, dtype=float)

            def mono(q):
                return float(np.prod(q**powers))

            for j in range(op.n):
                ph, pm = pt.copy(), pt.copy()
                ph[j] += h
                pm[j] -= h
                deriv = (mono(ph) - mono(pm)) / (2 * h)
                cols[:, col] += op.coeffs[j][:, comp] * deriv
        rows.append(cols)
    mat = np.vstack(rows)
    s = np.linalg.svd(mat, compute_uv=False)
    scale = max(s[0], 1.0)
    return int(np.sum(s <= 1e-6 * scale)) - (len(unknowns) - len(s) if len(s) < len(unknowns) else 0)


@pytest.mark.parametrize(
    "make_op,degrees",
    [
        (lambda: symmetric_gradient(2), range(0, 5)),
        (lambda: symmetric_gradient(3), range(0, 4)),
        (lambda: gradient(2, 2), range(0, 4)),
        (lambda: wirtinger(), range(0, 6)),
        (lambda: divergence(2), range(0, 4)),
    ],
)
def test_kernel_dims_match_brute_force_oracle(make_op, degrees):
    op = make_op()
    rng = np.random.default_rng(42)
    for d in degrees:
        assert len(homogeneous_kernel_basis(op, d)) == kernel_dim_oracle(op, d, rng)


def test_symmetric_gradient_2d_dims():
    op = symmetric_gradient(2)
    # rigid motions in the plane: 2 translations + 1 rotation
    rep = fdn_report(op, 6)
    assert rep.dims_per_degree == (2, 1, 0, 0, 0, 0, 0)
    assert rep.is_fdn and rep.stabilization_degree == 1 and rep.total_dim == 3


def test_symmetric_gradient_3d_dims():
    rep = fdn_report(symmetric_gradient(3), 6)
    assert rep.is_fdn and rep.total_dim == 6
    assert rep.dims_per_degree[:2] == (3, 3)


def test_gradient_constants_only():
    rep = fdn_report(gradient(3, 2), 6)
    assert rep.is_fdn and rep.stabilization_degree == 0 and rep.total_dim == 2
    assert len(homogeneous_kernel_basis(gradient(2, 5), 0)) == 5
    assert len(homogeneous_kernel_basis(gradient(2, 5), 1)) == 0


def test_wirtinger_two_per_degree():
    rep = fdn_report(wirtinger(), 8)
    assert rep.verdict == "not_fdn_up_to"
    assert rep.dims_per_degree == (2,) * 9
    assert rep.stabilization_degree is None and rep.total_dim is None


def test_basis_elements_are_killed_and_normalized():
    for op in (symmetric_gradient(2), wirtinger(), divergence(2)):
        for d in range(4):
            for p in homogeneous_kernel_basis(op, d):
                image = apply_to_polynomial(op, p)
                assert image.max_coefficient() <= 1e-10 * p.coefficient_norm()
                assert abs(p.coefficient_norm() - 1.0) <= 1e-12


def test_basis_linear_independence():
    op = symmetric_gradient(2)
    basis = full_kernel_basis(op)
    keys = sorted({k for p in basis for k in p.coeffs})
    mat = np.array([p.coefficient_vector(keys) for p in basis])
    gram = mat @ mat.T
    assert np.linalg.det(gram) > 1e-8


def test_kernel_dim_invariant_under_v_basis_change():
    op = symmetric_gradient(2)
    rng = np.random.default_rng(7)
    s = rng.standard_normal((2, 2)) + 2 * np.eye(2)
    conj = Operator(op.n, op.dim_v, op.dim_w, tuple(a @ s for a in op.coeffs))
    for d in range(4):
        assert len(homogeneous_kernel_basis(conj, d)) == len(
            homogeneous_kernel_basis(op, d)
        )


def test_fdn_implies_elliptic():
    for op in (symmetric_gradient(2), symmetric_gradient(3), gradient(2, 3)):
        rep = fdn_report(op)
        assert rep.is_fdn
        assert directional_null_witness(op) is None
        assert rep.cross_check == "agree"


def test_non_fdn_cross_checks_agree():
    assert fdn_report(wirtinger(), 8).cross_check == "agree"
    assert fdn_report(divergence(2), 6).cross_check == "agree"


def test_full_kernel_basis_requires_fdn():
    with pytest.raises(InputError):
        full_kernel_basis(wirtinger())


def test_degree_cap_validation():
    with pytest.raises(InputError):
        fdn_report(symmetric_gradient(2), 1)
