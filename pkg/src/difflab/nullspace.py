"""Polynomial null-space bases and the finite-dimensionality verdict.

For each homogeneous degree d the operator action is a linear map on
monomial coefficients; its kernel is computed by a rank-revealing SVD.  An
operator whose kernel dimensions vanish beyond some degree l (with a guard
band of consecutive zero degrees) is reported as having a finite-dimensional
null-space; the complex ellipticity margin is recorded alongside as an
independent cross-check signal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .operators import (
    Operator,
    SphereSearchConfig,
    complex_ellipticity_margin,
)
from .polynomials import PolynomialField, apply_to_polynomial, multi_indices

RANK_RTOL = 1e-10  # singular values below this times the largest count as zero


def homogeneous_kernel_basis(op: Operator, degree: int) -> list:
    """Orthonormal coefficient basis of degree-d polynomials killed by op.

    The coefficient map is assembled column by column from
    :func:`apply_to_polynomial`; kernel vectors come from the SVD, so the
    returned fields have unit coefficient norm and are mutually orthogonal.
    """
    if degree < 0:
        raise InputError("degree must be >= 0")
    alphas = multi_indices(op.n, degree)
    unknowns = [(comp, alpha) for comp in range(op.dim_v) for alpha in alphas]
    if degree == 0:
        # constants are always annihilated by a homogeneous first-order operator
        return [
            PolynomialField(op.n, op.dim_v, {key: 1.0}) for key in unknowns
        ]
    out_alphas = multi_indices(op.n, degree - 1)
    rows = [(w, beta) for w in range(op.dim_w) for beta in out_alphas]
    row_index = {key: i for i, key in enumerate(rows)}
    mat = np.zeros((len(rows), len(unknowns)))
    for col, key in enumerate(unknowns):
        image = apply_to_polynomial(op, PolynomialField(op.n, op.dim_v, {key: 1.0}))
        for okey, val in image.coeffs.items():
            mat[row_index[okey], col] = val
    _, s, vh = np.linalg.svd(mat)
    cutoff = RANK_RTOL * (s[0] if len(s) else 1.0)
    kernel_rows = [vh[i] for i in range(len(unknowns)) if i >= len(s) or s[i] <= cutoff]
    basis = []
    for vec in kernel_rows:
        coeffs = {key: float(c) for key, c in zip(unknowns, vec) if c != 0.0}
        basis.append(PolynomialField(op.n, op.dim_v, coeffs))
    return basis


@dataclass(frozen=True)
class NullspaceReport:
    """Kernel dimensions per homogeneous degree and the resulting verdict.

    ``verdict`` is ``"fdn"`` when dimensions vanish for every degree past
    ``stabilization_degree`` with at least ``guard_band`` consecutive zero
    degrees observed (a heuristic stabilization test, hence ``heuristic``),
    else ``"not_fdn_up_to"``. ``cross_check`` records whether the complex
    ellipticity margin agrees with the verdict.
    """

    dims_per_degree: tuple
    degree_cap: int
    stabilization_degree: int | None
    total_dim: int | None
    verdict: str
    guard_band: int
    heuristic: bool
    complex_margin: float | None
    cross_check: str | None

    @property
    def is_fdn(self) -> bool:
        return self.verdict == "fdn"

    def to_dict(self) -> dict:
        return {
            "dims_per_degree": list(self.dims_per_degree),
            "degree_cap": self.degree_cap,
            "stabilization_degree": self.stabilization_degree,
            "total_dim": self.total_dim,
            "verdict": self.verdict,
            "guard_band": self.guard_band,
            "heuristic": self.heuristic,
            "complex_margin": self.complex_margin,
            "cross_check": self.cross_check,
        }


def fdn_report(
    op: Operator,
    degree_cap: int = 8,
    guard_band: int = 2,
    cross_check: bool = True,
    sphere_cfg: SphereSearchConfig = SphereSearchConfig(),
) -> NullspaceReport:
    """Decide finite-dimensionality of the polynomial null-space up to a cap."""
    if degree_cap < 2:
        raise InputError("degree cap must be >= 2")
    dims = tuple(len(homogeneous_kernel_basis(op, d)) for d in range(degree_cap + 1))
    nonzero = [d for d, k in enumerate(dims) if k > 0]
    stabilization = max(nonzero) if nonzero else 0
    zero_tail = degree_cap - stabilization
    fdn = zero_tail >= guard_band
    margin = None
    agreement = None
    if cross_check:
        rep = complex_ellipticity_margin(op, sphere_cfg)
        margin = rep.complex_margin
        complex_elliptic = margin > sphere_cfg.tolerance
        agreement = "agree" if complex_elliptic == fdn else "disagree"
    if fdn:
        return NullspaceReport(
            dims_per_degree=dims,
            degree_cap=degree_cap,
            stabilization_degree=stabilization,
            total_dim=sum(dims),
            verdict="fdn",
            guard_band=guard_band,
            heuristic=True,
            complex_margin=margin,
            cross_check=agreement,
        )
    return NullspaceReport(
        dims_per_degree=dims,
        degree_cap=degree_cap,
        stabilization_degree=None,
        total_dim=None,
        verdict="not_fdn_up_to",
        guard_band=guard_band,
        heuristic=True,
        complex_margin=margin,
        cross_check=agreement,
    )


def full_kernel_basis(op: Operator, report: NullspaceReport | None = None) -> list:
    """All homogeneous kernel elements up to the stabilization degree.

    Requires an FDN verdict; the union over degrees is a basis of the whole
    null-space since the operator is homogeneous.
    """
    if report is None:
        report = fdn_report(op)
    if not report.is_fdn:
        raise InputError("operator has no finite-dimensional null-space up to the cap")
    basis = []
    for d in range(report.stabilization_degree + 1):
        basis.extend(homogeneous_kernel_basis(op, d))
    return basis
