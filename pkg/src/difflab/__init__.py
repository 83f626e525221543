"""difflab: numerical experiments for first-order constant-coefficient
differential operators — symbols and ellipticity margins, polynomial
null-spaces, ball projections and Poincare-Sobolev ratios, Fourier-multiplier
reconstruction, and Lp excess-decay experiments."""

from .ballcalc import Ball, ball_monomial_moment, l2_project, orthonormalize
from .errors import (
    DegenerateBasisError,
    DifflabError,
    EmptySearchError,
    InputError,
    PreconditionError,
    ResolutionError,
)
from .grids import GridField, apply_operator_fd, load_field, make_grid, save_field
from .measures import MeasureField, SegmentPiece
from .nullspace import fdn_report, full_kernel_basis, homogeneous_kernel_basis
from .operators import (
    Operator,
    SphereSearchConfig,
    complex_ellipticity_margin,
    directional_null_witness,
    divergence,
    ellipticity_margin,
    gradient,
    load_operator,
    make_builtin,
    symbol,
    symmetric_gradient,
    wirtinger,
)
from .polynomials import PolynomialField, apply_to_polynomial

__version__ = "0.1.0"
