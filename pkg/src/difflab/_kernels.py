"""Hot reduction kernels over ball-restricted grid cells.

Two interchangeable backends compute the same quantities:

* a numba ``@njit`` loop backend (default when numba is importable), and
* a vectorized pure-numpy backend.

Set ``DIFFLAB_DISABLE_NUMBA=1`` in the environment to force the numpy path.
Reduction order is a fixed serial sweep in both backends, so results are
bit-stable and independent of thread count.
"""

from __future__ import annotations

import os

import numpy as np

_FLAG = os.environ.get("DIFFLAB_DISABLE_NUMBA", "").strip().lower()
_DISABLE = _FLAG in ("1", "true", "yes", "on")

try:
    if _DISABLE:
        raise ImportError("numba disabled by DIFFLAB_DISABLE_NUMBA")
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:
    _HAVE_NUMBA = False


# ---------------------------------------------------------------------------
# numpy backend

def _ball_power_sum_np(pts, vals, center, radius, p):
    d2 = np.sum((pts - center) ** 2, axis=1)
    mask = d2 <= radius * radius
    if not np.any(mask):
        return 0.0, 0
    mag = np.sqrt(np.sum(vals[mask] ** 2, axis=1))
    if p == 1.0:
        s = float(np.sum(mag))
    elif p == 2.0:
        s = float(np.sum(mag * mag))
    else:
        s = float(np.sum(mag**p))
    return s, int(np.count_nonzero(mask))


def _affine_excess_power_sum_np(pts, vals, center, radius, base, mat, p):
    d2 = np.sum((pts - center) ** 2, axis=1)
    mask = d2 <= radius * radius
    if not np.any(mask):
        return 0.0, 0
    rel = pts[mask] - center
    resid = vals[mask] - base - rel @ mat.T
    mag = np.sqrt(np.sum(resid**2, axis=1))
    if p == 1.0:
        s = float(np.sum(mag))
    elif p == 2.0:
        s = float(np.sum(mag * mag))
    else:
        s = float(np.sum(mag**p))
    return s, int(np.count_nonzero(mask))


# ---------------------------------------------------------------------------
# numba backend

def _ball_power_sum_loop(pts, vals, center, radius, p):
    m, n = pts.shape
    c = vals.shape[1]
    r2 = radius * radius
    total = 0.0
    count = 0
    for i in range(m):
        d2 = 0.0
        for j in range(n):
            dz = pts[i, j] - center[j]
            d2 += dz * dz
        if d2 <= r2:
            v2 = 0.0
            for k in range(c):
                v2 += vals[i, k] * vals[i, k]
            if p == 2.0:
                total += v2
            elif p == 1.0:
                total += np.sqrt(v2)
            else:
                total += v2 ** (0.5 * p)
            count += 1
    return total, count


def _affine_excess_power_sum_loop(pts, vals, center, radius, base, mat, p):
    m, n = pts.shape
    c = vals.shape[1]
    r2 = radius * radius
    total = 0.0
    count = 0
    for i in range(m):
        d2 = 0.0
        for j in range(n):
            dz = pts[i, j] - center[j]
            d2 += dz * dz
        if d2 <= r2:
            v2 = 0.0
            for k in range(c):
                resid = vals[i, k] - base[k]
                for j in range(n):
                    resid -= mat[k, j] * (pts[i, j] - center[j])
                v2 += resid * resid
            if p == 2.0:
                total += v2
            elif p == 1.0:
                total += np.sqrt(v2)
            else:
                total += v2 ** (0.5 * p)
            count += 1
    return total, count


if _HAVE_NUMBA:
    _ball_power_sum_impl = njit(cache=True)(_ball_power_sum_loop)
    _affine_excess_power_sum_impl = njit(cache=True)(_affine_excess_power_sum_loop)
    BACKEND = "numba"
else:
    _ball_power_sum_impl = _ball_power_sum_np
    _affine_excess_power_sum_impl = _affine_excess_power_sum_np
    BACKEND = "numpy"


def _prep(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def ball_power_sum(pts, vals, center, radius, p):
    """Sum of |vals_i|^p over rows whose point lies in the closed ball.

    Returns (sum, count). ``pts`` is (m, n), ``vals`` is (m, c).
    """
    return _ball_power_sum_impl(
        _prep(pts), _prep(vals), _prep(center), float(radius), float(p)
    )


def affine_excess_power_sum(pts, vals, center, radius, base, mat, p):
    """Sum of |vals_i - base - mat (pts_i - center)|^p over in-ball rows.

    Returns (sum, count). ``mat`` is (c, n); fused so the residual is never
    materialized on the numba path.
    """
    return _affine_excess_power_sum_impl(
        _prep(pts), _prep(vals), _prep(center), float(radius), _prep(base),
        _prep(mat), float(p),
    )


def backend_name() -> str:
    return BACKEND
