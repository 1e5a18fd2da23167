import numpy as np
import pytest

from prandtl_expander import euler1 as e1
from prandtl_expander import prandtl1 as p1
from prandtl_expander.errors import PositivityViolated, StationSingular
from prandtl_expander.numerics import Grid1D, Grid2D, trapezoid_weights, weighted_norm, ScalarField2D
from prandtl_expander.problem import benchmark_spec, trivial_chain_spec


def synthetic_coeffs(nx, ny, ymax=20.0, L=1.0):
    grid = Grid2D(Grid1D.uniform(0.0, L, nx), Grid1D.uniform(0.0, ymax, ny), "half")
    X, Y = np.meshgrid(grid.x, grid.y, indexing="ij")
    return p1.MarchCoefficients(
        grid=grid,
        u0=1.0 + np.exp(-Y),
        u0_x=np.zeros_like(Y),
        u0_y=-np.exp(-Y),
        conv=np.exp(-Y),
    ), X, Y


def test_forcing_zero_for_trivial_chain(trivial_stage):
    assert np.max(np.abs(trivial_stage["po"].F_p)) == 0.0


def test_forcing_constant_shear_term_list(half_line_small):
    # constant outer shear (u_e0' = 0) and u1_e = c: F_p reduces to
    # -c u0_px - E1 term by term
    state, hl = half_line_small
    from prandtl_expander.problem import Profile, benchmark_spec
    from conftest import small_grids
    from dataclasses import replace

    spec = replace(
        benchmark_spec(epsilon_list=(0.01,), grids=small_grids()),
        u_e0=Profile("constant", {"value": 1.0}),
    )
    c = 0.7
    grid = e1.omega0_grid(spec)
    eo = e1.EulerOne(
        eps=0.01, grid=grid,
        B=np.zeros(grid.shape), F_e=np.zeros(grid.shape), E_b=np.zeros(grid.shape),
        w_tilde=np.zeros(grid.shape), v_e1=np.zeros(grid.shape),
        u_e1=np.full(grid.shape, c), p_e1=np.zeros(grid.shape), quad_form=0.0,
    )
    f_p, layer = p1.build_Fp(spec, hl, eo, 0.01)
    expected = -c * layer.u_p0_x - layer.E1
    assert np.max(np.abs(f_p - expected)) < 1e-12


def test_forcing_weighted_norm_finite(stage_small):
    po = stage_small["po"]
    hl_grid = po.half_grid
    val = weighted_norm(ScalarField2D(hl_grid, po.F_p), n=2, norm="l2_xy")
    assert np.isfinite(val) and val > 0


def test_march_zero_data_gives_zero():
    coeffs, X, Y = synthetic_coeffs(17, 65)
    u, v = p1.march_prandtl1(coeffs, np.zeros(65), np.zeros(17), np.zeros((17, 65)))
    assert np.max(np.abs(u)) == 0.0 and np.max(np.abs(v)) == 0.0


def test_march_mms_first_order_in_x():
    errs = []
    for nx in (9, 17, 33):
        coeffs, X, Y = synthetic_coeffs(nx, 401)
        forcing = 2 * np.cos(X) * np.exp(-Y) - np.sin(X) * (np.exp(-Y) + np.exp(-2 * Y))
        u, _ = p1.march_prandtl1(coeffs, np.zeros(401), np.sin(coeffs.grid.x), forcing)
        errs.append(np.max(np.abs(u - np.exp(-Y) * np.sin(X))))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios > 1.6) & (ratios < 2.4))


def test_march_mms_second_order_in_y():
    errs = []
    for ny in (26, 51, 101):
        coeffs, X, Y = synthetic_coeffs(257, ny, L=0.25)
        forcing = 2 * np.cos(X) * np.exp(-Y) - np.sin(X) * (np.exp(-Y) + np.exp(-2 * Y))
        u, _ = p1.march_prandtl1(coeffs, np.zeros(ny), np.sin(coeffs.grid.x), forcing)
        errs.append(np.max(np.abs(u - np.exp(-Y) * np.sin(X))))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all(ratios > 3.2)


def test_march_superposition():
    coeffs, X, Y = synthetic_coeffs(17, 81)
    rng = np.random.default_rng(5)
    data = []
    for _ in range(2):
        inflow = rng.standard_normal(81) * np.exp(-coeffs.grid.y)
        wall = rng.standard_normal(17)
        forcing = rng.standard_normal((17, 81)) * np.exp(-Y)
        inflow[0] = wall[0]
        data.append((inflow, wall, forcing))
    u1, v1 = p1.march_prandtl1(coeffs, *data[0])
    u2, v2 = p1.march_prandtl1(coeffs, *data[1])
    u12, v12 = p1.march_prandtl1(
        coeffs, data[0][0] + data[1][0], data[0][1] + data[1][1], data[0][2] + data[1][2]
    )
    assert np.max(np.abs(u12 - u1 - u2)) < 1e-10
    assert np.max(np.abs(v12 - v1 - v2)) < 1e-10


def test_march_wall_and_inflow_rows_exact(stage_small):
    po, eo, hl = stage_small["po"], stage_small["eo"], stage_small["hl"]
    assert np.max(np.abs(po.u_p[0] - stage_small["spec"].ubar1(hl.grid.y))) == 0.0
    wall = -eo.u_e1[:, 0]
    assert np.max(np.abs(po.u_p[1:, 0] - wall[1:])) < 1e-12
    assert np.max(np.abs(po.v_p[:, 0])) == 0.0  # wall-anchored elimination


def test_march_positivity_guard(stage_small):
    hl, eo = stage_small["hl"], stage_small["eo"]
    spec = stage_small["spec"]
    from prandtl_expander.prandtl0 import cutoff_fields_on

    layer = cutoff_fields_on(hl, 0.01, spec.chi, hl.grid)
    layer.u_p0[0, 0] = -10.0  # corrupt the background
    with pytest.raises(PositivityViolated):
        p1.march_coefficients(spec, hl, eo, 0.01, layer)


def test_station_singular_translation(monkeypatch):
    coeffs, X, Y = synthetic_coeffs(9, 33)

    def boom(a, b):
        raise np.linalg.LinAlgError("synthetic")

    monkeypatch.setattr(np.linalg, "solve", boom)
    with pytest.raises(StationSingular):
        p1.march_prandtl1(coeffs, np.zeros(33), np.ones(9), np.zeros((9, 33)))


def test_stream_function_identity_mms():
    coeffs, X, Y = synthetic_coeffs(65, 201, L=0.25)
    forcing = 2 * np.cos(X) * np.exp(-Y) - np.sin(X) * (np.exp(-Y) + np.exp(-2 * Y))
    u, v = p1.march_prandtl1(coeffs, np.zeros(201), np.sin(coeffs.grid.x), forcing)
    rel = p1.stream_function_mismatch(coeffs, u, v, forcing)
    assert rel < 0.02


def test_coercivity_constant_background_poincare():
    y = np.linspace(0, 10, 201)
    alpha = p1.coercivity_fourth(np.ones_like(y), y, n_probes=100, seed=1)
    lam = np.pi**2 / y[-1] ** 2
    assert alpha >= 0.99 * lam / (1 + lam)


def test_coercivity_monotone_profile_positive():
    y = np.linspace(0, 20, 401)
    alpha = p1.coercivity_fourth(1.0 + np.exp(-y), y, n_probes=200, seed=7)
    assert alpha > 0.0


def test_quadratic_form_zero_for_zero_field():
    from prandtl_expander.numerics import diff_matrix

    y = np.linspace(0, 10, 101)
    d1 = diff_matrix(y, 1)
    w = trapezoid_weights(y)
    v = np.zeros_like(y)
    vy = d1 @ v
    assert float(w @ (vy * vy)) == 0.0


def test_cutoff_trivial_zero(trivial_stage):
    po = trivial_stage["po"]
    assert np.max(np.abs(po.u_p1)) == 0.0
    assert np.max(np.abs(po.v_p1)) == 0.0
    assert np.max(np.abs(po.R_list)) == 0.0
    assert np.max(np.abs(po.pp2_x)) == 0.0


def test_cutoff_divergence_free(stage_small):
    # u1_p, v1_p built with the divergence-exact correction sign
    po = stage_small["po"]
    g = po.strip_grid
    div = g.gx.diff(1) @ po.u_p1 + po.v_p1 @ g.gy.diff(1).T
    interior = div[2:-2, 2:-2]
    assert np.max(np.abs(interior)) < 3e-2


def test_cutoff_list_vs_direct(stage_small):
    po = stage_small["po"]
    assert po.norms["Rp1_gap_l2"] < 0.35 * max(po.norms["Rp1_list_l2"], po.norms["Rp1_direct_l2"])


def test_wall_row_of_cutoff_cancels_outer(stage_small):
    po, eo = stage_small["po"], stage_small["eo"]
    assert np.max(np.abs(po.u_p1[:, 0] + eo.u_e1[:, 0])) < 1e-12
    assert np.max(np.abs(po.v_p1[:, 0])) == 0.0
    assert np.max(np.abs(po.v_p1[:, -1])) == 0.0


def test_pp2_top_row_exact_zero(stage_small):
    po = stage_small["po"]
    assert np.max(np.abs(po.pp2_x[:, -1])) == 0.0
    assert np.max(np.abs(po.pp2[:, -1])) == 0.0


def test_pp2_slope_bounded_below(half_line_small, spec_small):
    from prandtl_expander import prandtl0 as p0

    state, hl = half_line_small
    eps_list = (0.04, 0.01, 0.0025)
    vals = []
    for eps in eps_list:
        eo = e1.solve_euler_one(spec_small, hl, eps)
        po = p1.solve_prandtl_one(spec_small, hl, eo, eps)
        vals.append(po.norms["pp2x_l2"])
    slope = np.polyfit(np.log(eps_list), np.log(vals), 1)[0]
    assert slope >= -0.35


def test_fp_sign_variants_differ(stage_small):
    spec, hl, eo = stage_small["spec"], stage_small["hl"], stage_small["eo"]
    f_minus, layer = p1.build_Fp(spec, hl, eo, 0.01, fp_sign="minus")
    f_plus, _ = p1.build_Fp(spec, hl, eo, 0.01, fp_sign="plus", layer=layer)
    assert np.max(np.abs((f_plus - f_minus) - 2.0 * layer.E1)) < 1e-12
