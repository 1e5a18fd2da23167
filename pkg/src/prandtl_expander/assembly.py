"""Assembled approximation, full residual audit, and mirror extension.

The approximate solution on the scaled strip [0, L] x [0, 1/sqrt(eps)] is

    u_app = u_e0(z) + u0_p + sqrt(eps) (u1_e(x, z) + u1_p),
    v_app = v0_p + v1_e(x, z) + sqrt(eps) v1_p,
    p_app = sqrt(eps) (p1_e(x, z) + p1_p) + eps p2_p,     z = sqrt(eps) y,

with p1_p an absolute constant (zero).  Its residual against the scaled
momentum system,

    R_u = u_app u_app_x + v_app u_app_y + p_app_x - (d_yy + eps d_xx) u_app,
    R_v = u_app v_app_x + v_app v_app_y + p_app_y/eps - (d_yy + eps d_xx) v_app,

is evaluated two independent ways: directly with discrete operators on the
assembled sums, and by adding up the per-layer bookkeeping (Taylor tail E0,
outer viscous term, cutoff commutators, corrector residuals, and the
eps-order advection/pressure/streamwise-viscous leftovers).  The two must
agree to discretization order.

The mirror extension maps half-channel fields onto [0, 2/sqrt(eps)] with
even symmetry for scalars/streamwise velocity and odd symmetry for the
vertical velocity, duplicating or zeroing the mid-plane value accordingly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .errors import GridMismatch, ParityConflict
from .euler1 import EulerOne, sample_scaled
from .numerics import Grid1D, Grid2D, ScalarField2D, weighted_norm
from .prandtl0 import PrandtlZero
from .prandtl1 import PrandtlOne
from .problem import ProblemSpec

log = logging.getLogger("prandtl_expander")


@dataclass
class ExpansionSet:
    """Assembled approximation with component references and residuals."""

    eps: float
    grid: Grid2D
    u_app: np.ndarray
    v_app: np.ndarray
    p_app: np.ndarray
    layers: dict
    R_u_app: np.ndarray | None = None
    R_v_app: np.ndarray | None = None
    norms: dict = field(default_factory=dict)

    def field2d(self, name: str) -> ScalarField2D:
        return ScalarField2D(self.grid, getattr(self, name))

    def interpolator(self, name: str):
        vals = getattr(self, name)
        return RectBivariateSpline(self.grid.x, self.grid.y, vals, kx=3, ky=3)


def assemble(spec: ProblemSpec, eps: float, pz: PrandtlZero, eo: EulerOne, po: PrandtlOne) -> ExpansionSet:
    """Pointwise sums of the layer fields on the strip grid."""
    grid = pz.grid
    if po.strip_grid.shape != grid.shape or not np.allclose(po.strip_grid.y, grid.y):
        raise GridMismatch("GRID_MISMATCH: layer outputs live on different strip grids")
    rt = np.sqrt(eps)
    zq = rt * grid.y
    u_e0_s = spec.u_e0(np.clip(zq, 0.0, 1.0))[None, :]
    u1e_s = sample_scaled(eo.z, eo.u_e1, zq, "clamp")
    v1e_s = sample_scaled(eo.z, eo.v_e1, zq, "zero")
    p1e_s = sample_scaled(eo.z, eo.p_e1, zq, "clamp")

    u_app = u_e0_s + pz.fields.u_p0 + rt * (u1e_s + po.u_p1)
    v_app = pz.fields.v_p0 + v1e_s + rt * po.v_p1
    p_app = rt * p1e_s + eps * po.pp2
    return ExpansionSet(
        eps=eps,
        grid=grid,
        u_app=u_app,
        v_app=v_app,
        p_app=p_app,
        layers={"pz": pz, "eo": eo, "po": po, "u1e_s": u1e_s, "v1e_s": v1e_s, "u_e0_s": u_e0_s},
    )


def residual_app(spec: ProblemSpec, es: ExpansionSet) -> dict:
    """Direct discrete evaluation of the momentum residuals of the assembly.

    Independent of the per-layer bookkeeping: applies difference operators
    to the assembled sums only.  Returns the residual fields and the L2
    norms used by the acceptance gate (including sqrt(eps)-weighted R_v).
    """
    eps = es.eps
    grid = es.grid
    dx = grid.gx.diff(1)
    dxx = grid.gx.diff(2)
    dy = grid.gy.diff(1)
    dyy = grid.gy.diff(2)

    u, v, p = es.u_app, es.v_app, es.p_app
    r_u = u * (dx @ u) + v * (u @ dy.T) + dx @ p - (u @ dyy.T + eps * (dxx @ u))
    r_v = u * (dx @ v) + v * (v @ dy.T) + (p @ dy.T) / eps - (v @ dyy.T + eps * (dxx @ v))

    es.R_u_app = r_u
    es.R_v_app = r_v
    n_u = weighted_norm(ScalarField2D(grid, r_u))
    n_v = weighted_norm(ScalarField2D(grid, r_v))
    div = dx @ u + v @ dy.T
    es.norms.update(
        {
            "R_u_app_l2": n_u,
            "R_v_app_l2": n_v,
            "R_combo_l2": n_u + np.sqrt(eps) * n_v,
            "div_app_inf": float(np.max(np.abs(div))),
            "u_wall_gap": float(np.max(np.abs(u[:, 0] - spec.u_b))),
            "v_wall_inf": float(np.max(np.abs(v[:, 0]))),
            "v_top_inf": float(np.max(np.abs(v[:, -1]))),
        }
    )
    return {"R_u": ScalarField2D(grid, r_u), "R_v": ScalarField2D(grid, r_v), "norms": es.norms}


def bookkeeping_residual(spec: ProblemSpec, es: ExpansionSet, euler_res: dict) -> dict:
    """Per-layer reconstruction of R_u: the independent evaluation path.

    Sums the Taylor tail E0, the outer viscous term, the eps-weight part of
    the zeroth cutoff commutator, the sqrt(eps)-weighted corrector residual
    fields, and the eps-order advection/pressure/streamwise-viscous
    leftovers; reports the gap against the direct evaluation.
    """
    eps = es.eps
    rt = np.sqrt(eps)
    grid = es.grid
    pz: PrandtlZero = es.layers["pz"]
    po: PrandtlOne = es.layers["po"]
    u1e_s = es.layers["u1e_s"]
    zq = rt * grid.y
    u_e0_zz_s = spec.u_e0(np.clip(zq, 0.0, 1.0), 2)
    u_e0_zz_s = np.where(zq <= 1.0, u_e0_zz_s, 0.0)[None, :]

    dx = grid.gx.diff(1)
    dxx = grid.gx.diff(2)
    dy = grid.gy.diff(1)

    first_sum = u1e_s + po.u_p1
    adv = (first_sum) * (dx @ first_sum) + po.v_p1 * (first_sum @ dy.T)
    visc_x = dxx @ (pz.fields.u_p0 + rt * first_sum)

    r_book = (
        euler_res["E0"].values
        - eps * u_e0_zz_s
        + eps * pz.fields.E2
        + rt * euler_res["R_u1"].values
        + rt * po.R_tilde
        + rt * po.R_list
        + eps * adv
        + eps * po.pp2_x
        - eps * visc_x
    )
    gap = es.R_u_app - r_book if es.R_u_app is not None else None
    out = {"R_u_book": ScalarField2D(grid, r_book)}
    out["norms"] = {"R_u_book_l2": weighted_norm(out["R_u_book"])}
    if gap is not None:
        out["norms"]["book_gap_l2"] = weighted_norm(ScalarField2D(grid, gap))
    return out


def symmetric_extend(f: ScalarField2D, parity: str, tol: float = 1e-12) -> ScalarField2D:
    """Mirror a half-channel field across the mid-plane.

    Even parity duplicates the mid-plane value; odd parity requires it to
    vanish (|value| <= tol * field scale, else PARITY_CONFLICT) and forces
    an exact zero there.  The returned field lives on the doubled grid
    [0, 2 y_mid] with mirrored node spacing.
    """
    if parity not in ("even", "odd"):
        raise ValueError(f"parity must be even or odd, got {parity!r}")
    y = f.grid.y
    y_mid = y[-1]
    y_ext = np.concatenate([y, 2.0 * y_mid - y[-2::-1]])
    vals = f.values
    if parity == "even":
        ext = np.concatenate([vals, vals[:, -2::-1]], axis=1)
    else:
        scale = max(float(np.max(np.abs(vals))), 1e-300)
        center = float(np.max(np.abs(vals[:, -1])))
        if center > tol * scale:
            raise ParityConflict(
                f"PARITY_CONFLICT: odd extension needs a vanishing mid-plane trace, got {center:.3e}"
            )
        vals = vals.copy()
        vals[:, -1] = 0.0
        ext = np.concatenate([vals, -vals[:, -2::-1]], axis=1)
    gy = Grid1D(y_ext, spacing=f.grid.gy.spacing)
    return ScalarField2D(Grid2D(f.grid.gx, gy, "physical"), ext)


def mirror_gap(f_ext: ScalarField2D, parity: str) -> float:
    """Max mismatch between paired nodes of an extended field (should be 0)."""
    vals = f_ext.values
    n = (vals.shape[1] + 1) // 2
    lower = vals[:, :n]
    upper = vals[:, n - 1:][:, ::-1]
    sign = 1.0 if parity == "even" else -1.0
    return float(np.max(np.abs(lower - sign * upper)))
