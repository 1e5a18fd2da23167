import numpy as np
import pytest

from prandtl_expander.errors import GridTooSmall, SingularSystem
from prandtl_expander.numerics import (
    Grid1D,
    Grid2D,
    LinearSystem,
    ScalarField2D,
    apply_diff,
    diff_matrix,
    read_field_binary,
    read_field_csv,
    solve_linear,
    spline_cumulative,
    trapz_cumulative,
    trapezoid_weights,
    weighted_norm,
    write_field_binary,
    write_field_csv,
)
from scipy import sparse


def grid2d(nx=33, ny=41, ymax=1.0):
    return Grid2D(Grid1D.uniform(0.0, 1.0, nx), Grid1D.uniform(0.0, ymax, ny))


def test_dyy_exact_for_quadratics():
    g = grid2d()
    X, Y = np.meshgrid(g.x, g.y, indexing="ij")
    f = ScalarField2D(g, Y**2)
    d2 = apply_diff(f, "dyy")
    assert np.max(np.abs(d2.values - 2.0)) < 1e-10


def test_constant_has_zero_derivatives():
    g = grid2d()
    f = ScalarField2D(g, np.full(g.shape, 3.7))
    for which in ("dx", "dy", "dxx", "dyy"):
        assert np.max(np.abs(apply_diff(f, which).values)) < 1e-9


def test_lap_eps_second_order_richardson():
    # f = sin(pi x) y, exact lap_eps = -eps pi^2 sin(pi x) y
    eps = 0.01
    errs = []
    for n in (17, 33, 65):
        g = grid2d(nx=n, ny=n)
        X, Y = np.meshgrid(g.x, g.y, indexing="ij")
        f = ScalarField2D(g, np.sin(np.pi * X) * Y)
        lap = apply_diff(f, "lap_eps", eps=eps)
        exact = -eps * np.pi**2 * np.sin(np.pi * X) * Y
        errs.append(np.max(np.abs(lap.values - exact)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.8)


def test_lap_eps_is_sum_of_discrete_parts():
    g = grid2d()
    rng = np.random.default_rng(0)
    f = ScalarField2D(g, rng.standard_normal(g.shape))
    lap = apply_diff(f, "lap_eps", eps=0.3).values
    split = apply_diff(f, "dyy").values + 0.3 * apply_diff(f, "dxx").values
    assert np.max(np.abs(lap - split)) < 1e-12


def test_apply_diff_linearity():
    g = grid2d()
    rng = np.random.default_rng(1)
    a, b = 1.7, -0.4
    f = rng.standard_normal(g.shape)
    h = rng.standard_normal(g.shape)
    for which in ("dx", "dy", "dxx", "dyy"):
        lhs = apply_diff(ScalarField2D(g, a * f + b * h), which).values
        rhs = a * apply_diff(ScalarField2D(g, f), which).values + b * apply_diff(ScalarField2D(g, h), which).values
        assert np.max(np.abs(lhs - rhs)) < 1e-10 * max(1.0, np.max(np.abs(rhs)))


def test_grid_too_small():
    with pytest.raises(GridTooSmall):
        diff_matrix(np.array([0.0, 1.0]), 1)
    with pytest.raises(GridTooSmall):
        Grid1D(np.linspace(0, 1, 4))


def test_stretched_grid_shape_is_resolution_stable():
    a = Grid1D.stretched(0.0, 1.0, 65, 10.0)
    b = Grid1D.stretched(0.0, 1.0, 129, 10.0)
    # refining should shrink the wall cell roughly like 1/n, not exponentially
    ratio = (a.nodes[1] - a.nodes[0]) / (b.nodes[1] - b.nodes[0])
    assert 1.5 < ratio < 2.6


def test_weighted_norm_constant_unit_interval():
    y = np.linspace(0, 1, 101)
    assert abs(weighted_norm(np.ones_like(y), n=0, norm="l2_y", y=y) - 1.0) < 1e-14


def test_weighted_norm_exp_decay_against_fine_quadrature():
    # ||<y> e^{-y}||^2 = int (1+y^2) e^{-2y} = 3/4 on [0, inf); the [0, 40]
    # truncation error is ~e^{-80}.  (The norm squares the weight, so the
    # quoted integrand corresponds to n = 1.)
    y = np.linspace(0.0, 40.0, 4001)
    val = weighted_norm(np.exp(-y), n=1, norm="l2_y", y=y)
    assert abs(val - np.sqrt(0.75)) < 2e-5
    # n = 2 against a 10^6-point reference quadrature of (1+y^2)^2 e^{-2y}
    yref = np.linspace(0.0, 40.0, 1_000_001)
    ref = np.sqrt(np.trapezoid((1 + yref**2) ** 2 * np.exp(-2 * yref), yref))
    val2 = weighted_norm(np.exp(-y), n=2, norm="l2_y", y=y)
    assert abs(val2 - ref) / ref < 2e-4


def test_weighted_norm_zero_and_monotone_in_n():
    y = np.linspace(0, 5, 201)
    assert weighted_norm(np.zeros_like(y), n=3, norm="l2_y", y=y) == 0.0
    f = np.exp(-y)
    vals = [weighted_norm(f, n=n, norm="l2_y", y=y) for n in range(5)]
    assert all(a < b for a, b in zip(vals, vals[1:]))


def test_weighted_norm_rejects_large_exponent():
    with pytest.raises(ValueError):
        weighted_norm(np.ones(5), n=13, norm="l2_y", y=np.linspace(0, 1, 5))


def test_solve_linear_identity():
    n = 20
    rng = np.random.default_rng(2)
    b = rng.standard_normal(n)
    sys = LinearSystem(sparse.identity(n, format="csr"), b)
    u, resid = solve_linear(sys)
    assert np.max(np.abs(u - b)) < 1e-14
    assert resid < 1e-14


def test_solve_linear_poisson_second_order():
    errs = []
    for n in (33, 65, 129):
        y = np.linspace(0, 1, n)
        d2 = diff_matrix(y, 2).tolil()
        rhs = np.pi**2 * np.sin(np.pi * y)
        a = (-d2).tolil()
        for j in (0, n - 1):
            a.rows[j] = [j]
            a.data[j] = [1.0]
            rhs[j] = 0.0
        marker = np.zeros(n, dtype=bool)
        marker[[0, -1]] = True
        u, _ = solve_linear(LinearSystem(a.tocsr(), rhs, marker))
        errs.append(np.max(np.abs(u - np.sin(np.pi * y))))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.9)


def test_solve_linear_singular_row():
    a = sparse.lil_matrix((4, 4))
    a[0, 0] = 1.0
    a[1, 1] = 1.0
    a[2, 2] = 1.0
    # row 3 left exactly zero
    with pytest.raises(SingularSystem):
        solve_linear(LinearSystem(a.tocsr(), np.ones(4)))


def test_boundary_rows_must_have_unit_diagonal():
    a = sparse.identity(3, format="csr") * 2.0
    marker = np.array([True, False, False])
    with pytest.raises(ValueError):
        LinearSystem(a, np.ones(3), marker)


def test_trapz_cumulative_ramp_and_cos():
    y = np.linspace(0, 1, 101)
    ramp = trapz_cumulative(np.ones_like(y), y)
    assert np.max(np.abs(ramp - y)) < 1e-14
    t = np.linspace(0, np.pi / 2, 201)
    s = trapz_cumulative(np.cos(t), t)
    assert np.max(np.abs(s - np.sin(t))) < 5e-5
    assert np.all(trapz_cumulative(np.zeros_like(y), y) == 0.0)


def test_trapz_cumulative_from_end_vanishes_at_top():
    y = np.linspace(0, 2, 64)
    f = np.exp(-y)
    tail = trapz_cumulative(f, y, from_end=True)
    assert tail[-1] == 0.0
    assert abs(tail[0] - trapz_cumulative(f, y)[-1]) < 1e-14


def test_derivative_then_cumulative_roundtrip():
    errs = []
    for n in (65, 129, 257):
        g = grid2d(nx=9, ny=n, ymax=3.0)
        X, Y = np.meshgrid(g.x, g.y, indexing="ij")
        f = np.exp(-Y) * (1 + X)
        fy = apply_diff(ScalarField2D(g, f), "dy").values
        back = trapz_cumulative(fy, g.y) + f[:, :1]
        errs.append(np.max(np.abs(back - f)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.8)


def test_spline_cumulative_beats_trapezoid():
    y = np.linspace(0, 1, 51)
    f = np.exp(y)
    exact = np.exp(y) - 1.0
    err_spline = np.max(np.abs(spline_cumulative(f, y) - exact))
    err_trapz = np.max(np.abs(trapz_cumulative(f, y) - exact))
    assert err_spline < err_trapz / 50


def test_field_snapshot_roundtrip(tmp_path):
    g = grid2d(nx=9, ny=11)
    rng = np.random.default_rng(3)
    f = ScalarField2D(g, rng.standard_normal(g.shape))
    csv = tmp_path / "f.csv"
    write_field_csv(csv, f)
    x, y, vals = read_field_csv(csv)
    assert np.allclose(x, g.x) and np.allclose(y, g.y) and np.allclose(vals, f.values)
    binp = tmp_path / "f.bin"
    write_field_binary(binp, f)
    x2, y2, vals2 = read_field_binary(binp)
    assert np.array_equal(vals2, f.values) and np.array_equal(x2, g.x)


def test_field_rejects_nonfinite_and_shape_mismatch():
    g = grid2d(nx=9, ny=11)
    with pytest.raises(ValueError):
        ScalarField2D(g, np.full(g.shape, np.nan))
    with pytest.raises(ValueError):
        ScalarField2D(g, np.zeros((3, 3)))
