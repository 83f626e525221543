import numpy as np
import pytest

from difflab import _kernels
from difflab.errors import InputError, ResolutionError
from difflab.grids import (
    GridField,
    apply_operator_fd,
    ball_points_values,
    ball_power_mean,
    field_to_csv,
    load_field,
    make_grid,
    require_ball_resolution,
    sample_function,
    save_field,
)
from difflab.operators import gradient, symmetric_gradient


def test_make_grid_layout():
    g = make_grid(np.zeros(2), np.array([2.0, 1.0]), (4, 2), dim=3)
    assert g.dims == (4, 2)
    assert np.allclose(g.spacing, [0.5, 0.5])
    assert np.allclose(g.axis_centers(0), [0.25, 0.75, 1.25, 1.75])
    assert np.allclose(g.center_of((0, 0)), [0.25, 0.25])
    assert g.nearest_index(np.array([1.9, 0.9])) == (3, 1)


def test_binary_roundtrip(tmp_path):
    g = make_grid(np.array([-1.0, 0.0]), np.array([1.0, 3.0]), (8, 16), dim=2)
    g.data[:] = np.random.default_rng(0).standard_normal(g.data.shape)
    path = tmp_path / "field.bin"
    save_field(g, path)
    loaded = load_field(path)
    assert np.array_equal(loaded.data, g.data)
    assert np.allclose(loaded.origin, g.origin)
    assert np.allclose(loaded.spacing, g.spacing)


def test_binary_rejects_garbage(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(InputError):
        load_field(path)


def test_csv_export(tmp_path):
    g = make_grid(np.zeros(1), np.ones(1), 4, dim=1)
    g.data[:, 0] = [1.0, 2.0, 3.0, 4.0]
    path = tmp_path / "f.csv"
    field_to_csv(g, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "x1,v1"
    assert len(lines) == 5


def test_fd_exact_on_affine():
    op = symmetric_gradient(2)
    grid = make_grid(np.zeros(2), np.ones(2), 32, 2)
    mat = np.array([[1.0, 2.0], [3.0, 4.0]])
    u = sample_function(grid, lambda pts: pts @ mat.T)
    au = apply_operator_fd(op, u)
    sym = 0.5 * (mat + mat.T)
    assert np.max(np.abs(au.data - sym.ravel())) <= 1e-12


def test_fd_second_order_convergence():
    op = gradient(2, 1)
    errs = []
    for res in (32, 64):
        grid = make_grid(np.zeros(2), np.ones(2), res, 1)
        u = sample_function(grid, lambda pts: np.sin(2 * np.pi * pts[..., 0:1]))
        au = apply_operator_fd(op, u)
        exact = sample_function(
            grid.like(np.zeros(grid.dims + (2,))),
            lambda pts: np.stack(
                [2 * np.pi * np.cos(2 * np.pi * pts[..., 0]), np.zeros(pts.shape[:-1])],
                axis=-1,
            ),
        )
        errs.append(np.max(np.abs(au.data - exact.data)))
    assert errs[1] <= errs[0] / 3.0  # second order: factor 4 expected


def test_ball_points_values_selects_closed_ball():
    g = make_grid(np.zeros(2), np.ones(2), 10, 1)
    pts, vals = ball_points_values(g, np.array([0.55, 0.55]), 0.2)
    assert len(pts) == len(vals) > 0
    assert np.all(np.linalg.norm(pts - [0.55, 0.55], axis=1) <= 0.2 + 1e-15)


def test_ball_power_mean_constant_field():
    g = make_grid(np.zeros(2), np.ones(2), 64, 1)
    g.data[:] = -2.0
    for p in (1.0, 1.5, 2.0):
        assert abs(ball_power_mean(g, np.array([0.5, 0.5]), 0.25, p) - 2.0) <= 1e-12


def test_resolution_guard():
    g = make_grid(np.zeros(2), np.ones(2), 16, 1)
    with pytest.raises(ResolutionError):
        require_ball_resolution(g, 0.1)  # 3.2 cells across


def test_kernel_backends_agree():
    rng = np.random.default_rng(3)
    pts = rng.uniform(0, 1, size=(500, 2))
    vals = rng.standard_normal((500, 3))
    center = np.array([0.5, 0.5])
    base = rng.standard_normal(3)
    mat = rng.standard_normal((3, 2))
    for p in (1.0, 1.5, 2.0):
        s_np, c_np = _kernels._ball_power_sum_np(pts, vals, center, 0.3, p)
        s_k, c_k = _kernels.ball_power_sum(pts, vals, center, 0.3, p)
        assert c_np == c_k
        assert abs(s_np - s_k) <= 1e-10 * max(1.0, abs(s_np))
        e_np, ce_np = _kernels._affine_excess_power_sum_np(
            pts, vals, center, 0.3, base, mat, p)
        e_k, ce_k = _kernels.affine_excess_power_sum(
            pts, vals, center, 0.3, base, mat, p)
        assert ce_np == ce_k
        assert abs(e_np - e_k) <= 1e-10 * max(1.0, abs(e_np))


def test_gridfield_validation():
    with pytest.raises(InputError):
        GridField(np.zeros(2), np.ones(2), np.zeros((4, 4)))  # missing component axis
