import numpy as np
import pytest

from prandtl_expander import prandtl0 as p0
from prandtl_expander.errors import DomainTooShort, PositivityLost, StepDiverged
from prandtl_expander.numerics import Grid1D, Grid2D, ScalarField2D, trapezoid_weights
from prandtl_expander.problem import GridConfig, Profile, benchmark_spec, trivial_chain_spec
from conftest import small_grids
from dataclasses import replace


def test_constant_solution_when_no_jump():
    # u_b = u_e and zero inflow perturbation: w_vm stays exactly u_e
    spec = trivial_chain_spec(epsilon_list=(0.01,))
    state = p0.solve_porous_medium(spec)
    assert np.max(np.abs(state.W.values - spec.u_e)) < 1e-12
    assert np.max(np.abs(state.w_shift.values)) < 1e-12


def test_maximum_principle_brackets_transformed_speed(half_line_small, spec_small):
    state, hl = half_line_small
    assert state.c0 == 1.0 and state.c0_bar == 2.0
    assert state.min_W >= 1.0 - 1e-8
    assert state.max_W <= 2.0 + 1e-8


def test_march_is_first_order_in_x():
    # successive refinements in x shrink differences by about 2x
    sols = {}
    for nx in (33, 65, 129):
        spec = benchmark_spec(epsilon_list=(0.04,), grids=GridConfig(nx=nx, ny=129))
        state = p0.solve_porous_medium(spec)
        sols[nx] = state.W.values
    d1 = np.max(np.abs(sols[65][::2] - sols[33]))
    d2 = np.max(np.abs(sols[129][::2] - sols[65]))
    assert 1.5 < d1 / d2 < 2.6


def test_invert_trivial_identity_and_scaling():
    gx = Grid1D.uniform(0.0, 0.25, 9)
    eta = Grid1D.uniform(0.0, 10.0, 101)
    grid = Grid2D(gx, eta, "von_mises")
    for const in (1.0, 2.0):
        w = ScalarField2D(grid, np.full(grid.shape, const))
        state = p0.VonMisesState(W=w, w_shift=w.like(np.zeros(grid.shape)),
                                 c0=const, c0_bar=const, u_e=const, u_b=const)
        gy = Grid1D.uniform(0.0, 10.0 / const, 51)
        u = p0.invert_von_mises(state, gy)
        # y(eta) = eta/const and u = const - u_e = 0
        assert np.max(np.abs(u.values)) < 1e-12


def test_invert_requires_positive_speed():
    gx = Grid1D.uniform(0.0, 0.25, 9)
    eta = Grid1D.uniform(0.0, 4.0, 64)
    grid = Grid2D(gx, eta, "von_mises")
    w = ScalarField2D(grid, np.full(grid.shape, -1.0))
    state = p0.VonMisesState(W=w, w_shift=w, c0=1, c0_bar=2, u_e=1.0, u_b=2.0)
    with pytest.raises(PositivityLost):
        p0.invert_von_mises(state, Grid1D.uniform(0, 4, 33))


def test_round_trip_reproduces_inflow(half_line_small, spec_small):
    state, hl = half_line_small
    err = np.max(np.abs(hl.u[0] - spec_small.ubar0(hl.grid.y)))
    assert err < 1e-6


def test_decay_guard(half_line_small):
    state, hl = half_line_small
    mid = np.searchsorted(hl.grid.y, hl.grid.y[-1] / 2)
    assert np.max(np.abs(hl.u[:, mid:])) < 1e-8


def test_positivity_lost_raises():
    spec = trivial_chain_spec(epsilon_list=(0.01,))
    bad = replace(spec, ubar0=Profile("constant", {"value": -2.0}))
    with pytest.raises(PositivityLost):
        p0.solve_porous_medium(bad)


def test_step_diverged_when_iteration_budget_removed(monkeypatch):
    monkeypatch.setattr(p0, "FIXED_POINT_MAXIT", 1)
    spec = benchmark_spec(epsilon_list=(0.04,), grids=small_grids())
    with pytest.raises(StepDiverged):
        p0.solve_porous_medium(spec)


def test_v_from_continuity_x_independent_is_zero():
    g = Grid2D(Grid1D.uniform(0, 0.25, 17), Grid1D.uniform(0, 10, 101), "half")
    X, Y = np.meshgrid(g.x, g.y, indexing="ij")
    v = p0.build_v_from_continuity(ScalarField2D(g, np.exp(-Y)))
    assert np.max(np.abs(v.values)) < 1e-12


def test_v_from_continuity_closed_form():
    errs = []
    for ny in (101, 201, 401):
        g = Grid2D(Grid1D.uniform(0, 0.25, 33), Grid1D.uniform(0, 20, ny), "half")
        X, Y = np.meshgrid(g.x, g.y, indexing="ij")
        v = p0.build_v_from_continuity(ScalarField2D(g, X * np.exp(-Y)))
        exact = np.exp(-Y) - np.exp(-g.y[-1])
        errs.append(np.max(np.abs(v.values - exact)))
        assert np.max(np.abs(v.values[:, -1])) == 0.0
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.8)


def test_divergence_identity_interior(half_line_small):
    state, hl = half_line_small
    g = hl.grid
    div = hl.u_x + hl.v @ g.gy.diff(1).T
    # construction identity: dx u + dy v = 0 up to differencing error, which
    # concentrates at the incompatible inflow corner and the wall cells
    assert np.max(np.abs(div[:, 2:-2])) < 0.05
    assert np.max(np.abs(div[5:, 2:-2])) < 0.02


def test_cutoff_trivial_zero(trivial_stage):
    pz = trivial_stage["pz"]
    assert np.max(np.abs(pz.fields.u_p0)) == 0.0
    assert np.max(np.abs(pz.fields.v_p0)) == 0.0
    assert np.max(np.abs(pz.R_list.values)) == 0.0


def test_cutoff_wall_and_top_rows_exact(stage_small):
    pz, spec = stage_small["pz"], stage_small["spec"]
    assert np.max(np.abs(pz.fields.u_p0[:, 0] - (spec.u_b - spec.u_e))) < 1e-12
    assert np.max(np.abs(pz.fields.v_p0[:, -1])) == 0.0


def test_cutoff_inactive_at_tiny_viscosity(half_line_small, spec_small):
    # the profile has decayed below 1e-14 where the cutoff varies, so the
    # commutator residual is quadrature noise and u0_p tracks u_p^inf
    from scipy.interpolate import CubicSpline

    state, hl = half_line_small
    pz = p0.cutoff_to_strip(hl, 1e-4, spec_small.chi, spec_small)
    assert pz.norms["R_list_l2"] < 1e-4
    ys = pz.grid.y
    near = ys <= 5.0
    u_res = CubicSpline(hl.grid.y, hl.u, axis=1)(ys[near])
    assert np.max(np.abs(pz.fields.u_p0[:, near] - u_res)) < 1e-4


def test_list_vs_direct_agreement(stage_small, half_line_small):
    state, hl = half_line_small
    pz = stage_small["pz"]
    # the two evaluations differ by the march truncation + interpolation,
    # bounded by the half-line equation residual itself
    g = hl.grid
    r_half = (stage_small["spec"].u_e + hl.u) * hl.u_x + (hl.v - hl.v[:, :1]) * hl.u_y - hl.u_yy
    wy, wx = trapezoid_weights(g.y), trapezoid_weights(g.x)
    march_noise = float(np.sqrt(wx @ (r_half**2) @ wy))
    assert pz.norms["list_vs_direct_l2"] < 2.0 * march_noise + 1e-4


def test_commutator_sweep_slope(half_line_small, spec_small):
    state, hl = half_line_small
    eps_list = (0.04, 0.01, 0.0025)
    vals = [p0.cutoff_to_strip(hl, e, spec_small.chi, spec_small).norms["R_list_l2"] for e in eps_list]
    slope = np.polyfit(np.log(eps_list), np.log(vals), 1)[0]
    assert slope >= 0.45


def test_domain_too_short():
    spec = benchmark_spec(epsilon_list=(0.04,), grids=small_grids())
    state, hl = p0.solve_half_line(spec)
    with pytest.raises(DomainTooShort):
        # half-line grid covers 8/sqrt(0.04) = 40; eps = 1e-6 needs 1000
        p0.cutoff_to_strip(hl, 1e-6, spec.chi, spec)


def test_deferred_side_checks_pass_at_default_grids():
    spec = benchmark_spec()
    state, hl = p0.solve_half_line(spec)
    results = p0.deferred_side_checks(spec, hl)
    assert all(r["passed"] for r in results.values())


def test_adjusted_side_profiles_hit_targets(half_line_small, spec_small):
    state, hl = half_line_small
    vb0, vbl = p0.adjusted_side_profiles(spec_small, hl)
    assert abs(float(vb0(0.0)) + hl.v_wall[0]) < 1e-12
    assert abs(float(vbl(0.0)) + hl.v_wall[-1]) < 1e-12
    # the affine correction vanishes at z = 1, preserving the corner zeros
    assert abs(float(vb0(1.0))) < 1e-12
