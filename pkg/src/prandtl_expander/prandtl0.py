"""Zeroth-order boundary-layer profile via the von Mises transformation.

The layer solves the degenerate parabolic system

    (u_e + u) u_x - (int_0^y u_x) u_y = u_yy,   u(x, 0) = u_b - u_e,
    u(0, y) = ubar0(y),                          u -> 0 as y -> infinity,

on the half line.  Writing eta(y) = int_0^y (u_e + u) and
w_vm(x, eta) = u_e + u(x, y(eta)) turns it into the porous medium equation
w_vm_x = (w_vm w_vm_eta)_eta, whose maximum principle pins w_vm between the
extremes of the wall, outer, and inflow speeds.  The shifted unknown
w = w_vm - u_e - (u_b - u_e) e^{-eta} has homogeneous Dirichlet ends and is
marched implicitly in x with the diffusion coefficient lagged and iterated
to a fixed point per station.

The inverse map y(eta) = int_0^eta deta'/w_vm recovers the physical profile;
the vertical velocity follows from continuity, v(x, y) = int_y^ymax u_x.
Cutting off to the strip [0, 1/sqrt(eps)] with chi(sqrt(eps) y) produces the
strip profiles and a commutator residual that splits into sqrt(eps) E1 +
eps E2; the residual is evaluated both from that term list and by direct
substitution into the layer equation, and the two must agree to
discretization order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.interpolate import CubicSpline, PchipInterpolator

from .errors import DomainTooShort, NonMonotoneMap, PositivityLost, StepDiverged
from .numerics import (
    Grid1D,
    Grid2D,
    ScalarField2D,
    half_line_ymax,
    spline_cumulative,
    trapz_cumulative,
    weighted_norm,
)
from .problem import ProblemSpec

log = logging.getLogger("prandtl_expander")

FIXED_POINT_RTOL = 1e-10
FIXED_POINT_MAXIT = 50
MAX_PRINCIPLE_SLACK = 1e-8
DECAY_GUARD = 1e-8
SIDE_COMPAT_TOL = 1e-4


@dataclass
class VonMisesState:
    """Transformed solve: w_vm on the (x, eta) grid plus its shifted form."""

    W: ScalarField2D
    w_shift: ScalarField2D
    c0: float
    c0_bar: float
    u_e: float
    u_b: float

    @property
    def x_grid(self) -> Grid1D:
        return self.W.grid.gx

    @property
    def eta_grid(self) -> Grid1D:
        return self.W.grid.gy

    @property
    def min_W(self) -> float:
        return float(self.W.values.min())

    @property
    def max_W(self) -> float:
        return float(self.W.values.max())

    def max_principle_ok(self, slack: float = MAX_PRINCIPLE_SLACK) -> bool:
        return self.min_W >= self.c0 - slack and self.max_W <= self.c0_bar + slack


@dataclass
class HalfLineFields:
    """Half-line profile and everything derived from it that later stages use."""

    grid: Grid2D
    u_e: float
    u_b: float
    u: np.ndarray        # u_p^inf
    u_x: np.ndarray
    u_y: np.ndarray
    u_yy: np.ndarray
    v: np.ndarray        # v_p^inf = int_y^ymax u_x
    tail: np.ndarray     # int_y^ymax u

    @property
    def v_wall(self) -> np.ndarray:
        return self.v[:, 0]

    def field(self, vals: np.ndarray) -> ScalarField2D:
        return ScalarField2D(self.grid, vals)


@dataclass
class CutoffFields:
    """Cut-off layer quantities on a target wall-normal grid.

    Derivative entries are closed-form combinations of the half-line fields
    and the cutoff, not grid differences, so they stay consistent across
    resampling.  The commutator split fields E1 (sqrt(eps) weight) and E2
    (eps weight) are evaluated from the same term list.
    """

    grid: Grid2D
    eps: float
    u_p0: np.ndarray
    v_p0: np.ndarray
    u_p0_x: np.ndarray
    u_p0_y: np.ndarray
    E1: np.ndarray
    E2: np.ndarray
    u_inf: np.ndarray
    v_inf: np.ndarray


@dataclass
class PrandtlZero:
    """Per-viscosity cut-off profiles with the commutator residual."""

    eps: float
    fields: CutoffFields
    R_list: ScalarField2D
    R_direct: ScalarField2D
    norms: dict

    @property
    def grid(self) -> Grid2D:
        return self.fields.grid

    @property
    def u_p0(self) -> ScalarField2D:
        return ScalarField2D(self.grid, self.fields.u_p0)

    @property
    def v_p0(self) -> ScalarField2D:
        return ScalarField2D(self.grid, self.fields.v_p0)


def _shift_base(u_b: float, u_e: float, eta: np.ndarray) -> np.ndarray:
    return u_e + (u_b - u_e) * np.exp(-eta)


def _forcing_deriv(u_b: float, u_e: float, eta: np.ndarray) -> np.ndarray:
    # F(eta) = (u_b - u_e)[u_e + (u_b - u_e) e^{-eta}] e^{-eta}, differentiated.
    # The bracket carries the shift profile itself: F = -b b_eta for
    # b = u_e + (u_b - u_e) e^{-eta}, which is what the substitution
    # w = w_vm - b produces.  (A wall-curvature audit of the solved profile
    # pins this sign; the opposite one leaves an O(1) residual at the wall.)
    d = u_b - u_e
    return -d * u_e * np.exp(-eta) - 2.0 * d * d * np.exp(-2.0 * eta)


def _flux_operator(eta: np.ndarray, coeff: np.ndarray) -> sparse.csr_matrix:
    """Conservative discretization of w -> (coeff * w_eta)_eta, interior rows."""
    n = len(eta)
    h = np.diff(eta)
    a_mid = 0.5 * (coeff[:-1] + coeff[1:])
    hbar = 0.5 * (h[:-1] + h[1:])
    lo = a_mid[:-1] / h[:-1] / hbar
    hi = a_mid[1:] / h[1:] / hbar
    rows = np.arange(1, n - 1)
    data = np.concatenate([lo, -(lo + hi), hi])
    r = np.concatenate([rows, rows, rows])
    c = np.concatenate([rows - 1, rows, rows + 1])
    return sparse.csr_matrix((data, (r, c)), shape=(n, n))


def solve_porous_medium(spec: ProblemSpec, grids=None) -> VonMisesState:
    """March the shifted porous-medium equation over the channel length.

    Implicit (backward) x-steps with the diffusion coefficient lagged and
    iterated to a fixed point (relative update < 1e-10, at most 50 sweeps).
    The maximum-principle bounds are recorded as a post-check, never used to
    clamp the solution.
    """
    g = grids or spec.grids
    u_e, u_b = spec.u_e, spec.u_b
    ymax = half_line_ymax(spec.eps_min)
    gy = Grid1D.stretched(0.0, ymax, g.ny, g.y_factor)
    y = gy.nodes

    background = u_e + spec.ubar0(y)
    if np.min(background) <= 0:
        raise PositivityLost("POSITIVITY_LOST: inflow background u_e + ubar0 is not positive")
    eta = spline_cumulative(background, y)
    geta = Grid1D(eta, spacing="mapped")
    gx = Grid1D.uniform(0.0, spec.L, g.nx)
    grid = Grid2D(gx, geta, "von_mises")

    base = _shift_base(u_b, u_e, eta)
    f_eta = _forcing_deriv(u_b, u_e, eta)
    d1 = geta.diff(1)
    drift = ((u_b - u_e) * (d1 @ sparse.diags(np.exp(-eta)))).tocsr()

    n = len(eta)
    w = np.zeros((len(gx), n))
    w[0] = background - base
    w[0, 0] = 0.0

    eye = sparse.identity(n, format="csr")
    interior = np.ones(n, dtype=bool)
    interior[[0, -1]] = False
    bc_proj = sparse.diags(interior.astype(float)).tocsr()

    for i in range(1, len(gx)):
        dx = gx.nodes[i] - gx.nodes[i - 1]
        w_prev = w[i - 1]
        coeff = w_prev + base
        w_new = w_prev.copy()
        converged = False
        for _ in range(FIXED_POINT_MAXIT):
            op = eye / dx - _flux_operator(eta, coeff) + drift
            a = bc_proj @ op + sparse.diags((~interior).astype(float))
            rhs = np.where(interior, w_prev / dx - f_eta, 0.0)
            sol = sparse.linalg.spsolve(a.tocsc(), rhs)
            update = np.max(np.abs(sol - w_new)) / max(np.max(np.abs(sol)), 1.0)
            w_new = sol
            coeff = w_new + base
            if np.min(coeff) <= 0:
                raise PositivityLost(
                    f"POSITIVITY_LOST: transformed speed <= 0 at station x={gx.nodes[i]:.4f}"
                )
            if update < FIXED_POINT_RTOL:
                converged = True
                break
        if not converged:
            raise StepDiverged(f"STEP_DIVERGED: fixed point stalled at station x={gx.nodes[i]:.4f}")
        w[i] = w_new

    wvm = w + base[None, :]
    c0 = min(u_b, u_e, float(np.min(background)))
    c0_bar = max(u_b, u_e, float(np.max(background)))
    state = VonMisesState(
        W=ScalarField2D(grid, wvm),
        w_shift=ScalarField2D(grid, w),
        c0=c0,
        c0_bar=c0_bar,
        u_e=u_e,
        u_b=u_b,
    )
    if not state.max_principle_ok(1e-6):
        log.warning(
            "maximum principle violated beyond slack: min=%g max=%g vs [%g, %g]",
            state.min_W, state.max_W, c0, c0_bar,
        )
    return state


def invert_von_mises(state: VonMisesState, gy: Grid1D) -> ScalarField2D:
    """Map the transformed solution back to the physical half line.

    y(eta) = int_0^eta deta'/w_vm per station, then monotone cubic
    interpolation of u = w_vm - u_e onto the fixed physical y grid.  Beyond
    the image of the eta grid the profile has decayed to roundoff and is
    set to zero.
    """
    eta = state.eta_grid.nodes
    y = gy.nodes
    wvm = state.W.values
    if np.min(wvm) <= 0:
        raise PositivityLost("POSITIVITY_LOST: cannot invert a non-positive transformed speed")
    out = np.zeros((wvm.shape[0], len(y)))
    for i in range(wvm.shape[0]):
        y_of_eta = spline_cumulative(1.0 / wvm[i], eta)
        if np.any(np.diff(y_of_eta) <= 0):
            raise NonMonotoneMap("NON_MONOTONE_MAP: y(eta) is not strictly increasing")
        interp = PchipInterpolator(y_of_eta, wvm[i] - state.u_e, extrapolate=False)
        vals = interp(np.clip(y, y_of_eta[0], y_of_eta[-1]))
        vals[y > y_of_eta[-1]] = 0.0
        out[i] = vals
    grid = Grid2D(state.x_grid, gy, "half")
    return ScalarField2D(grid, out)


def build_v_from_continuity(u_inf: ScalarField2D) -> ScalarField2D:
    """v(x, y) = int_y^ymax du/dx, vanishing exactly at the far boundary."""
    ux = u_inf.grid.gx.diff(1) @ u_inf.values
    v = trapz_cumulative(ux, u_inf.grid.y, from_end=True)
    return ScalarField2D(u_inf.grid, v)


def half_line_fields(u_inf: ScalarField2D, u_e: float, u_b: float) -> HalfLineFields:
    g = u_inf.grid
    u = u_inf.values
    u_x = g.gx.diff(1) @ u
    return HalfLineFields(
        grid=g,
        u_e=u_e,
        u_b=u_b,
        u=u,
        u_x=u_x,
        u_y=u @ g.gy.diff(1).T,
        u_yy=u @ g.gy.diff(2).T,
        v=trapz_cumulative(u_x, g.y, from_end=True),
        tail=trapz_cumulative(u, g.y, from_end=True),
    )


def solve_half_line(spec: ProblemSpec, grids=None) -> tuple[VonMisesState, HalfLineFields]:
    """Full half-line stage: transformed solve, inversion, continuity."""
    g = grids or spec.grids
    state = solve_porous_medium(spec, g)
    gy = Grid1D.stretched(0.0, half_line_ymax(spec.eps_min), g.ny, g.y_factor)
    u_inf = invert_von_mises(state, gy)
    fields = half_line_fields(u_inf, spec.u_e, spec.u_b)
    mid = np.searchsorted(gy.nodes, gy.b / 2.0)
    tail_mag = float(np.max(np.abs(fields.u[:, mid:])))
    if tail_mag > DECAY_GUARD:
        log.warning("half-line truncation guard: |u| = %g beyond ymax/2", tail_mag)
    return state, fields


def strip_grid(spec: ProblemSpec, eps: float, grids=None) -> Grid2D:
    g = grids or spec.grids
    gy = Grid1D.stretched(0.0, 1.0 / np.sqrt(eps), g.ny, g.strip_factor)
    gx = Grid1D.uniform(0.0, spec.L, g.nx)
    return Grid2D(gx, gy, "scaled")


def cutoff_fields_on(hl: HalfLineFields, eps: float, chi, grid: Grid2D) -> CutoffFields:
    """Evaluate the cut-off profiles and commutator split on a target grid.

    The grid may be the strip grid (per-eps profiles) or the half-line grid
    itself (first-order forcing).  All chi factors are exact; half-line
    fields are cubic-resampled when the y grids differ.
    """
    y_src = hl.grid.y
    y = grid.y
    if y[-1] > y_src[-1] + 1e-12:
        raise DomainTooShort(
            f"DOMAIN_TOO_SHORT: half-line grid ends at {y_src[-1]:.3f} < target {y[-1]:.3f}"
        )
    same = len(y) == len(y_src) and np.allclose(y, y_src)

    def onto(vals):
        return vals if same else CubicSpline(y_src, vals, axis=1)(y)

    u = onto(hl.u)
    u_x = onto(hl.u_x)
    u_y = onto(hl.u_y)
    v = onto(hl.v)
    tail = onto(hl.tail)
    v_y = -u_x  # continuity, exact for the half-line construction
    v_wall = v[:, :1]
    u_e = hl.u_e

    rt = np.sqrt(eps)
    chi0, chi1, chi2, chi3 = (c[None, :] for c in chi.eval(rt * y))

    u_p0 = chi0 * u - rt * chi1 * tail
    v_p0 = chi0 * v
    u_p0_x = chi0 * u_x - rt * chi1 * v
    u_p0_y = chi0 * u_y + 2.0 * rt * chi1 * u - eps * chi2 * tail

    # int_0^y chi'(rt t) dt = (chi(rt y) - 1)/rt, exactly
    chi1_int = (chi0 - 1.0) / rt
    k_chi_vy = trapz_cumulative(chi0 * v_y, y)
    k_chi1_v = trapz_cumulative(chi1 * v, y)

    e1 = (
        chi0 * chi1_int * (u * u_x + v * u_y)
        - chi1 * chi0 * u_x * tail
        - chi1 * v * (u_e + chi0 * u)
        - 3.0 * chi1 * u_y
        + 2.0 * chi1 * u * k_chi_vy
    )
    e2 = (
        2.0 * chi1 * u * k_chi1_v
        - 3.0 * chi2 * u
        + chi1**2 * v * tail
        - chi2 * (chi0 * v - v_wall) * tail
        + rt * chi3 * tail
    )
    return CutoffFields(
        grid=grid, eps=eps,
        u_p0=u_p0, v_p0=v_p0, u_p0_x=u_p0_x, u_p0_y=u_p0_y,
        E1=e1, E2=e2, u_inf=u, v_inf=v,
    )


def cutoff_to_strip(hl: HalfLineFields, eps: float, chi, spec: ProblemSpec, grids=None) -> PrandtlZero:
    """Cut the half-line profiles off to the strip and audit the residual.

    Builds [u_p0, v_p0] on [0, L] x [0, 1/sqrt(eps)], evaluates the layer
    residual both from the sqrt(eps) E1 + eps E2 term list and by direct
    substitution of the cut-off fields into the layer equation with discrete
    operators, and reports L2 norms of both together with their gap.
    """
    grid = strip_grid(spec, eps, grids)
    cf = cutoff_fields_on(hl, eps, chi, grid)
    rt = np.sqrt(eps)
    r_list = rt * cf.E1 + eps * cf.E2

    u_p0 = ScalarField2D(grid, cf.u_p0)
    dxu = grid.gx.diff(1) @ cf.u_p0
    dyu = cf.u_p0 @ grid.gy.diff(1).T
    dyyu = cf.u_p0 @ grid.gy.diff(2).T
    coeff_v = cf.v_p0 - cf.v_p0[:, :1]
    r_direct = (hl.u_e + cf.u_p0) * dxu + coeff_v * dyu - dyyu

    norms = {
        "R_list_l2": weighted_norm(ScalarField2D(grid, r_list)),
        "R_direct_l2": weighted_norm(ScalarField2D(grid, r_direct)),
        "list_vs_direct_l2": weighted_norm(ScalarField2D(grid, r_direct - r_list)),
        "E1_l2": weighted_norm(ScalarField2D(grid, cf.E1)),
        "E2_l2": weighted_norm(ScalarField2D(grid, cf.E2)),
    }
    return PrandtlZero(
        eps=eps,
        fields=cf,
        R_list=ScalarField2D(grid, r_list),
        R_direct=ScalarField2D(grid, r_direct),
        norms=norms,
    )


def deferred_side_checks(spec: ProblemSpec, hl: HalfLineFields, tol: float = SIDE_COMPAT_TOL):
    """Solve-dependent side compatibility: Vb0(0) = -v0_p(0,0), VbL(0) = -v0_p(L,0).

    Returns (results, mismatches); violations are warnings, not failures.
    An affine rescaling of the side data vanishing at z = 1 is available via
    ``adjusted_side_profiles`` but stays off by default.
    """
    targets = {"Vb0(0)=-v0p(0,0)": (spec.Vb0, -hl.v_wall[0]), "VbL(0)=-v0p(L,0)": (spec.VbL, -hl.v_wall[-1])}
    results = {}
    for name, (prof, target) in targets.items():
        gap = float(prof(0.0)) - float(target)
        ok = abs(gap) <= tol
        results[name] = {"gap": gap, "passed": ok, "target": float(target)}
        if not ok:
            log.warning("deferred compatibility %s violated by %g (tol %g)", name, gap, tol)
    return results


def adjusted_side_profiles(spec: ProblemSpec, hl: HalfLineFields):
    """Return (Vb0, VbL) corrected by an affine term vanishing at z = 1."""
    from .problem import Profile

    out = []
    for prof, target in ((spec.Vb0, -hl.v_wall[0]), (spec.VbL, -hl.v_wall[-1])):
        delta = float(target) - float(prof(0.0))
        if prof.kind == "poly":
            coeffs = list(np.atleast_1d(np.asarray(prof.params["coeffs"], dtype=float)))
            coeffs = coeffs + [0.0] * max(0, 2 - len(coeffs))
            coeffs[0] += delta
            coeffs[1] -= delta
            out.append(Profile("poly", {"coeffs": coeffs}))
        else:
            zs = np.linspace(0.0, 1.0, 201)
            out.append(Profile("table", {"x": zs.tolist(), "y": (prof(zs) + delta * (1 - zs)).tolist()}))
    return tuple(out)
