"""First-order constant-coefficient operators, Fourier symbols, ellipticity.

An operator maps V-valued fields on R^n to W-valued fields via
``sum_j A_j d_j u``; its Fourier symbol at a frequency ``xi`` is the
``dimW x dimV`` matrix ``sum_j xi_j A_j``.  Ellipticity (symbol injective for
every nonzero real ``xi``) is certified numerically by minimizing the smallest
singular value of the symbol over the unit sphere; the same search over the
complex sphere provides an independent cross-check signal for the
finite-dimensional-null-space verdict of :mod:`difflab.nullspace`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .rng import stream


@dataclass(frozen=True)
class Operator:
    """A first-order homogeneous operator given by its coefficient matrices.

    ``coeffs[j]`` is the ``dimW x dimV`` matrix multiplying the j-th partial
    derivative. Immutable and safe to share across threads.
    """

    n: int
    dim_v: int
    dim_w: int
    coeffs: tuple
    name: str = "custom"

    def __post_init__(self):
        if self.n < 1 or self.dim_v < 1 or self.dim_w < 1:
            raise InputError("n, dimV, dimW must all be >= 1")
        if len(self.coeffs) != self.n:
            raise InputError(f"expected {self.n} coefficient matrices, got {len(self.coeffs)}")
        mats = []
        for a in self.coeffs:
            a = np.asarray(a, dtype=float)
            if a.shape != (self.dim_w, self.dim_v):
                raise InputError(
                    f"coefficient matrix shape {a.shape} != ({self.dim_w}, {self.dim_v})"
                )
            if not np.all(np.isfinite(a)):
                raise InputError("coefficient matrices must have finite entries")
            a.setflags(write=False)
            mats.append(a)
        object.__setattr__(self, "coeffs", tuple(mats))

    @property
    def coeff_stack(self) -> np.ndarray:
        """The coefficients as one (n, dimW, dimV) array."""
        return np.stack(self.coeffs)


@dataclass(frozen=True)
class SymbolMatrix:
    xi: np.ndarray
    value: np.ndarray


def symbol_value(op: Operator, xi) -> np.ndarray:
    """The symbol matrix ``sum_j xi_j A_j`` as a plain array."""
    xi = np.asarray(xi)
    if xi.shape != (op.n,):
        raise InputError(f"frequency vector must have length {op.n}, got shape {xi.shape}")
    return np.tensordot(xi, op.coeff_stack, axes=(0, 0))


def symbol(op: Operator, xi) -> SymbolMatrix:
    """Evaluate the Fourier symbol at a real or complex frequency vector."""
    xi = np.asarray(xi)
    return SymbolMatrix(xi=xi, value=symbol_value(op, xi))


# ---------------------------------------------------------------------------
# built-in operators

def gradient(n: int, dim_v: int = 1) -> Operator:
    """Componentwise gradient of an R^N-valued map on R^n (dimW = N*n)."""
    mats = []
    for j in range(n):
        a = np.zeros((dim_v * n, dim_v))
        for i in range(dim_v):
            a[i * n + j, i] = 1.0
        mats.append(a)
    return Operator(n, dim_v, dim_v * n, tuple(mats), name=f"gradient(n={n},N={dim_v})")


def symmetric_gradient(n: int) -> Operator:
    """Symmetrized gradient (Du + Du^T)/2 with W the full n x n matrix space.

    W is embedded as R^(n*n) row-major so the Euclidean norm on W is the
    Frobenius norm of the symmetric matrix.
    """
    mats = []
    for j in range(n):
        a = np.zeros((n * n, n))
        for i in range(n):
            a[i * n + j, i] += 0.5
            a[j * n + i, i] += 0.5
        mats.append(a)
    return Operator(n, n, n * n, tuple(mats), name=f"symmetric_gradient(n={n})")


def wirtinger() -> Operator:
    """The 2-D elliptic operator with holomorphic-type (infinite) null-space."""
    a1 = 0.5 * np.array([[1.0, 0.0], [0.0, -1.0]])
    a2 = 0.5 * np.array([[0.0, 1.0], [1.0, 0.0]])
    return Operator(2, 2, 2, (a1, a2), name="wirtinger")


def divergence(n: int) -> Operator:
    """Divergence of an R^n-valued map (non-elliptic for n >= 2)."""
    mats = tuple(np.eye(n)[j].reshape(1, n) for j in range(n))
    return Operator(n, n, 1, mats, name=f"divergence(n={n})")


BUILTIN_NAMES = ("gradient", "symmetric_gradient", "wirtinger", "divergence")


def make_builtin(name: str, n: int | None = None, dim_v: int | None = None) -> Operator:
    """Instantiate a named built-in operator; n / dimV as applicable."""
    if name == "gradient":
        return gradient(n if n is not None else 2, dim_v if dim_v is not None else 1)
    if name == "symmetric_gradient":
        return symmetric_gradient(n if n is not None else 2)
    if name == "wirtinger":
        return wirtinger()
    if name == "divergence":
        return divergence(n if n is not None else 2)
    raise InputError(f"unknown builtin operator {name!r}; choices: {BUILTIN_NAMES}")


def load_operator(path) -> Operator:
    """Read an operator spec file: JSON with fields n, dimV, dimW, A."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot parse operator file {path}: {exc}") from exc
    for key in ("n", "dimV", "dimW", "A"):
        if key not in raw:
            raise InputError(f"operator file {path} missing field {key!r}")
    mats = tuple(np.asarray(m, dtype=float) for m in raw["A"])
    return Operator(int(raw["n"]), int(raw["dimV"]), int(raw["dimW"]), mats,
                    name=str(raw.get("name", "file")))


def dump_operator(op: Operator, path) -> None:
    payload = {
        "n": op.n,
        "dimV": op.dim_v,
        "dimW": op.dim_w,
        "A": [a.tolist() for a in op.coeffs],
        "name": op.name,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


# ---------------------------------------------------------------------------
# ellipticity margins

@dataclass(frozen=True)
class SphereSearchConfig:
    samples: int = 2048
    refine_top: int = 8
    refine_iterations: int = 80
    seed: int = 0
    tolerance: float = 1e-7


@dataclass(frozen=True)
class EllipticityReport:
    """Smallest singular value of the symbol over the unit frequency sphere.

    ``real_margin`` minimizes over the real sphere; ``complex_margin`` (when
    computed) over the complex sphere, which always lies at or below the real
    value. ``argmin_xi`` / ``argmin_v`` witness the reported minimum.
    """

    real_margin: float
    complex_margin: float | None
    argmin_xi: np.ndarray
    argmin_v: np.ndarray
    sample_count: int
    refinement_iterations: int
    tolerance: float
    complex_argmin_xi: np.ndarray | None = field(default=None, repr=False)
    complex_argmin_v: np.ndarray | None = field(default=None, repr=False)

    @property
    def elliptic(self) -> bool:
        return self.real_margin > self.tolerance

    @property
    def complex_elliptic(self) -> bool | None:
        if self.complex_margin is None:
            return None
        return self.complex_margin > self.tolerance

    def to_dict(self) -> dict:
        return {
            "real_margin": self.real_margin,
            "complex_margin": self.complex_margin,
            "elliptic": self.elliptic,
            "complex_elliptic": self.complex_elliptic,
            "argmin_xi_real": np.real(self.argmin_xi).tolist(),
            "argmin_xi_imag": np.imag(self.argmin_xi).tolist(),
            "sample_count": self.sample_count,
            "refinement_iterations": self.refinement_iterations,
            "tolerance": self.tolerance,
        }


def _smallest_right_singular(mat: np.ndarray):
    """(sigma_min, argmin unit vector v with |mat v| = sigma_min).

    For a wide matrix (fewer rows than columns) the map has a null direction
    and the margin is exactly zero; vh still carries the null vector.
    """
    _, s, vh = np.linalg.svd(mat)
    sigma = 0.0 if mat.shape[0] < mat.shape[1] else s[-1]
    return sigma, np.conj(vh[-1])


def _alternating_refine(op: Operator, xi0: np.ndarray, iterations: int):
    """Local descent on sigma_min(symbol(xi)) by alternating exact steps.

    The v-step and the xi-step are each a global minimization of |A[xi] v|
    in one block (an SVD), so the value is nonincreasing.
    """
    stack = op.coeff_stack
    xi = xi0 / np.linalg.norm(xi0)
    best_val, best_v = _smallest_right_singular(symbol_value(op, xi))
    best_xi = xi
    used = 0
    for used in range(1, iterations + 1):
        # columns A_j v, so |B xi| = |A[xi] v|
        b = np.tensordot(stack, best_v, axes=(2, 0)).T
        _, xi = _smallest_right_singular(b)
        val, v = _smallest_right_singular(symbol_value(op, xi))
        if val <= best_val:
            best_val, best_xi, best_v = val, xi, v
        if best_val < 1e-15 or abs(val - best_val) < 1e-15:
            break
    return best_val, best_xi, best_v, used


def _search(op: Operator, xis: np.ndarray, cfg: SphereSearchConfig):
    """Sample sigma_min over the given unit frequencies, refine the best few."""
    symbols = np.tensordot(xis, op.coeff_stack, axes=(1, 0))
    if op.dim_w < op.dim_v:
        sigmas = np.zeros(len(xis))
    else:
        sigmas = np.linalg.svd(symbols, compute_uv=False)[:, -1]
    order = np.argsort(sigmas)[: max(1, cfg.refine_top)]
    best = (np.inf, None, None)
    iters_total = 0
    for idx in order:
        val, xi, v, used = _alternating_refine(op, xis[idx], cfg.refine_iterations)
        iters_total += used
        if val < best[0]:
            best = (val, xi, v)
    return best[0], best[1], best[2], iters_total


def _real_sphere_samples(op: Operator, cfg: SphereSearchConfig) -> np.ndarray:
    rng = stream(cfg.seed, "ellipticity/real-sphere")
    pts = rng.standard_normal((cfg.samples, op.n))
    pts = np.vstack([np.eye(op.n), pts])
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def ellipticity_margin(op: Operator, cfg: SphereSearchConfig = SphereSearchConfig()) -> EllipticityReport:
    """Certify the real ellipticity margin min_{|xi|=1} sigma_min(A[xi])."""
    xis = _real_sphere_samples(op, cfg)
    val, xi, v, iters = _search(op, xis, cfg)
    return EllipticityReport(
        real_margin=float(val),
        complex_margin=None,
        argmin_xi=np.real_if_close(xi),
        argmin_v=np.real_if_close(v),
        sample_count=len(xis),
        refinement_iterations=iters,
        tolerance=cfg.tolerance,
    )


def complex_ellipticity_margin(op: Operator, cfg: SphereSearchConfig = SphereSearchConfig()) -> EllipticityReport:
    """Margin over the complex unit sphere, reported next to the real one.

    The complex sphere is parameterized as the real 2n-sphere; the real
    argmin is injected into the candidate set so the complex margin can
    never exceed the real margin.
    """
    real_rep = ellipticity_margin(op, cfg)
    rng = stream(cfg.seed, "ellipticity/complex-sphere")
    raw = rng.standard_normal((cfg.samples, 2 * op.n))
    raw = raw / np.linalg.norm(raw, axis=1, keepdims=True)
    xis = raw[:, : op.n] + 1j * raw[:, op.n :]
    seed_xi = real_rep.argmin_xi.astype(complex)
    xis = np.vstack([seed_xi[None, :], np.eye(op.n, dtype=complex), xis])
    val, xi, v, iters = _search(op, xis, cfg)
    return EllipticityReport(
        real_margin=real_rep.real_margin,
        complex_margin=float(val),
        argmin_xi=real_rep.argmin_xi,
        argmin_v=real_rep.argmin_v,
        sample_count=real_rep.sample_count + len(xis),
        refinement_iterations=real_rep.refinement_iterations + iters,
        tolerance=cfg.tolerance,
        complex_argmin_xi=xi,
        complex_argmin_v=v,
    )


def directional_null_witness(op: Operator, cfg: SphereSearchConfig = SphereSearchConfig()):
    """A unit pair (xi, v) with A[xi] v ~ 0, if the operator is not elliptic.

    Any profile f(x . xi) v then lies in the null-space, so the operator
    cannot have a finite-dimensional one. Returns None when the real margin
    is above the configured tolerance.
    """
    rep = ellipticity_margin(op, cfg)
    if rep.real_margin >= cfg.tolerance:
        return None
    xi = np.real(rep.argmin_xi)
    xi = xi / np.linalg.norm(xi)
    _, v = _smallest_right_singular(symbol_value(op, xi))
    v = np.real(v)
    v = v / np.linalg.norm(v)
    return xi, v
