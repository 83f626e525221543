"""V-valued polynomials on R^n as multi-index coefficient tables.

Coefficients are stored sparsely as ``{(component, alpha): float}`` with
``alpha`` a tuple of nonnegative exponents, so differentiation, the action of
a first-order operator, affine reparameterization and restriction to a
segment are all exact linear algebra on the tables.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from math import comb

import numpy as np

from .errors import InputError
from .operators import Operator

_TINY = 0.0  # coefficients equal to zero are dropped from the table


@dataclass
class PolynomialField:
    n: int
    dim: int
    coeffs: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for (comp, alpha), val in self.coeffs.items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != self.n or any(a < 0 for a in alpha):
                raise InputError(f"bad multi-index {alpha} for n={self.n}")
            if not 0 <= comp < self.dim:
                raise InputError(f"component {comp} out of range for dim={self.dim}")
            if val != _TINY:
                clean[(comp, alpha)] = float(val)
        self.coeffs = clean

    # -- basic structure ----------------------------------------------------

    @property
    def degree(self) -> int:
        """Max |alpha| with nonzero coefficient; -1 for the zero polynomial."""
        if not self.coeffs:
            return -1
        return max(sum(alpha) for (_, alpha) in self.coeffs)

    def coefficient_vector(self, monomials=None) -> np.ndarray:
        """Dense coefficient vector over the given (comp, alpha) ordering."""
        if monomials is None:
            monomials = sorted(self.coeffs.keys())
        return np.array([self.coeffs.get(key, 0.0) for key in monomials])

    def coefficient_norm(self) -> float:
        if not self.coeffs:
            return 0.0
        return float(np.linalg.norm(list(self.coeffs.values())))

    def max_coefficient(self) -> float:
        if not self.coeffs:
            return 0.0
        return float(max(abs(v) for v in self.coeffs.values()))

    # -- algebra ------------------------------------------------------------

    def __add__(self, other: "PolynomialField") -> "PolynomialField":
        if (self.n, self.dim) != (other.n, other.dim):
            raise InputError("polynomial shape mismatch")
        out = dict(self.coeffs)
        for key, val in other.coeffs.items():
            out[key] = out.get(key, 0.0) + val
        return PolynomialField(self.n, self.dim, out)

    def __sub__(self, other: "PolynomialField") -> "PolynomialField":
        return self + other.scale(-1.0)

    def scale(self, factor: float) -> "PolynomialField":
        return PolynomialField(
            self.n, self.dim, {k: factor * v for k, v in self.coeffs.items()}
        )

    def partial(self, j: int) -> "PolynomialField":
        """Exact partial derivative along axis j."""
        out = {}
        for (comp, alpha), val in self.coeffs.items():
            if alpha[j] == 0:
                continue
            new = list(alpha)
            new[j] -= 1
            key = (comp, tuple(new))
            out[key] = out.get(key, 0.0) + val * alpha[j]
        return PolynomialField(self.n, self.dim, out)

    def evaluate(self, points) -> np.ndarray:
        """Evaluate at points of shape (..., n); returns shape (..., dim)."""
        pts = np.asarray(points, dtype=float)
        scalar_input = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if pts.shape[-1] != self.n:
            raise InputError(f"points must have last axis {self.n}")
        out = np.zeros(pts.shape[:-1] + (self.dim,))
        for (comp, alpha), val in self.coeffs.items():
            term = np.full(pts.shape[:-1], val)
            for j, a in enumerate(alpha):
                if a:
                    term = term * pts[..., j] ** a
            out[..., comp] += term
        return out[0] if scalar_input else out

    # -- reparameterization --------------------------------------------------

    def compose_affine(self, scale: float, shift) -> "PolynomialField":
        """The polynomial y -> p(shift + scale * y), exactly expanded.

        Each monomial (x)^alpha becomes prod_j (shift_j + scale*y_j)^alpha_j,
        expanded by the binomial theorem.
        """
        shift = np.asarray(shift, dtype=float)
        if shift.shape != (self.n,):
            raise InputError("shift must be an n-vector")
        out = {}
        for (comp, alpha), val in self.coeffs.items():
            expansion = {(): val}
            for j, a in enumerate(alpha):
                grown = {}
                for part, coef in expansion.items():
                    for k in range(a + 1):
                        c = coef * comb(a, k) * (scale**k) * (shift[j] ** (a - k))
                        key = part + (k,)
                        grown[key] = grown.get(key, 0.0) + c
                expansion = grown
            for part, coef in expansion.items():
                if coef != 0.0:
                    key = (comp, part)
                    out[key] = out.get(key, 0.0) + coef
        return PolynomialField(self.n, self.dim, out)

    def restrict_to_segment(self, p0, p1) -> np.ndarray:
        """Coefficients in t of p(p0 + t (p1 - p0)), shape (deg+1, dim)."""
        p0 = np.asarray(p0, dtype=float)
        p1 = np.asarray(p1, dtype=float)
        deg = max(self.degree, 0)
        out = np.zeros((deg + 1, self.dim))
        for (comp, alpha), val in self.coeffs.items():
            poly_t = np.zeros(1)
            poly_t[0] = val
            for j, a in enumerate(alpha):
                lin = np.array([p0[j], p1[j] - p0[j]])  # ascending in t
                for _ in range(a):
                    poly_t = np.convolve(poly_t, lin)
            out[: len(poly_t), comp] += poly_t
        return out


def zero_polynomial(n: int, dim: int) -> PolynomialField:
    return PolynomialField(n, dim, {})


def monomial(n: int, dim: int, comp: int, alpha, value: float = 1.0) -> PolynomialField:
    return PolynomialField(n, dim, {(comp, tuple(alpha)): value})


def multi_indices(n: int, degree: int) -> list:
    """All multi-indices of exact total degree, graded-lexicographic order."""
    if degree == 0:
        return [(0,) * n]
    out = []
    for combo in combinations_with_replacement(range(n), degree):
        alpha = [0] * n
        for j in combo:
            alpha[j] += 1
        out.append(tuple(alpha))
    return sorted(set(out), reverse=True)


def multi_indices_up_to(n: int, degree: int) -> list:
    out = []
    for d in range(degree + 1):
        out.extend(multi_indices(n, d))
    return out


def apply_to_polynomial(op: Operator, p: PolynomialField) -> PolynomialField:
    """Exact symbolic action sum_j A_j d_j p; W-valued, degree drops by one."""
    if p.n != op.n or p.dim != op.dim_v:
        raise InputError(
            f"polynomial shape (n={p.n}, dim={p.dim}) does not match operator "
            f"(n={op.n}, dimV={op.dim_v})"
        )
    out = {}
    for j in range(op.n):
        dj = p.partial(j)
        a = op.coeffs[j]
        for (comp, alpha), val in dj.coeffs.items():
            for w in range(op.dim_w):
                c = a[w, comp] * val
                if c != 0.0:
                    key = (w, alpha)
                    out[key] = out.get(key, 0.0) + c
    return PolynomialField(op.n, op.dim_w, out)
