"""Problem data: flow parameters, boundary profiles, cutoff, and validation.

All given data of a run lives in an immutable ``ProblemSpec``:

* ``u_b``        wall tangential speed (positive constant),
* ``u_e0``       outer shear profile on z in [0, 1] with flat top
                 (``u_e0'(1) = 0``) and ``u_e0 > 0``,
* ``ubar0``      inflow profile of the leading boundary layer on y >= 0,
* ``ubar1``      inflow profile of the first-order layer corrector,
* ``ub1``        inflow profile of the first-order outer corrector
                 (``ub1'(1) = 0``),
* ``Vb0, VbL``   side data for the outer corrector's vertical velocity,
                 vanishing at z = 1 together with their second derivatives,
* ``chi``        smooth cutoff on [0, 1] used to confine half-line profiles
                 to the strip.

Function-valued data comes either from a small registry of closed forms
(exact derivatives) or from sampled tables (cubic-spline derivatives); the
corner/endpoint checks use 1e-10 tolerance for closed forms and 1e-6 for
tables.  Two compatibility checks couple the side data to the wall trace of
the zeroth-order layer solve and can only run after it; ``validate_spec``
registers them as deferred.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import SpecRejected

TOL_CLOSED_FORM = 1e-10
TOL_TABLE = 1e-6
L_MAX = 1.0
GAMMA_MAX = 0.2  # open interval (0, 1/5)
PROFILE_KINDS = ("constant", "exp_decay", "poly", "sine", "table")


class Profile:
    """Scalar function of one variable with derivatives up to third order."""

    def __init__(self, kind: str, params: dict):
        if kind not in PROFILE_KINDS:
            raise SpecRejected("profile_kind", f"unknown profile kind {kind!r}")
        self.kind = kind
        self.params = dict(params)
        if kind == "table":
            x = np.asarray(self.params["x"], dtype=float)
            y = np.asarray(self.params["y"], dtype=float)
            if x.ndim != 1 or x.shape != y.shape or len(x) < 4:
                raise SpecRejected("profile_table", "table needs >= 4 monotone samples")
            if not np.all(np.diff(x) > 0):
                raise SpecRejected("profile_table", "table abscissae must be increasing")
            self._spline = CubicSpline(x, y)

    @property
    def is_table(self) -> bool:
        return self.kind == "table"

    @property
    def tol(self) -> float:
        return TOL_TABLE if self.is_table else TOL_CLOSED_FORM

    def __call__(self, t, deriv: int = 0):
        t = np.asarray(t, dtype=float)
        p = self.params
        if self.kind == "constant":
            return np.full_like(t, p["value"]) if deriv == 0 else np.zeros_like(t)
        if self.kind == "exp_decay":
            a, r, c = p.get("amplitude", 1.0), p.get("rate", 1.0), p.get("offset", 0.0)
            out = a * (-r) ** deriv * np.exp(-r * t)
            if deriv == 0:
                out = out + c
            return out
        if self.kind == "poly":
            coeffs = np.asarray(p["coeffs"], dtype=float)
            der = np.polynomial.polynomial.polyder(coeffs, deriv) if deriv else coeffs
            return np.polynomial.polynomial.polyval(t, der) if len(der) else np.zeros_like(t)
        if self.kind == "sine":
            a = p.get("amplitude", 1.0)
            w = p.get("frequency", 1.0)
            phase = p.get("phase", 0.0)
            c = p.get("offset", 0.0)
            out = a * w**deriv * np.sin(w * t + phase + deriv * np.pi / 2)
            if deriv == 0:
                out = out + c
            return out
        return self._spline(t, nu=deriv)

    def to_config(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}


class QuinticCutoff:
    """Default cutoff: the unique quintic on [0, 1] with value 1 -> 0 and
    vanishing first and second derivatives at both ends, extended by
    constants (exactly 0 for s >= 1)."""

    # chi(s) = 1 - s^3 (10 - 15 s + 6 s^2)
    def eval(self, s) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        s = np.asarray(s, dtype=float)
        inside = (s > 0.0) & (s < 1.0)
        si = np.where(inside, s, 0.0)
        chi = np.where(s <= 0.0, 1.0, np.where(inside, 1 - si**3 * (10 - 15 * si + 6 * si**2), 0.0))
        d1 = np.where(inside, -30 * si**2 + 60 * si**3 - 30 * si**4, 0.0)
        d2 = np.where(inside, -60 * si + 180 * si**2 - 120 * si**3, 0.0)
        d3 = np.where(inside, -60 + 360 * si - 360 * si**2, 0.0)
        return chi, d1, d2, d3

    def to_config(self) -> dict:
        return {"kind": "quintic"}


class TableCutoff:
    """Cutoff override from samples on [0, 1]; derivatives from the spline."""

    def __init__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if not (np.all(np.diff(x) > 0) and math.isclose(x[0], 0.0) and math.isclose(x[-1], 1.0)):
            raise SpecRejected("chi_table", "cutoff table must span [0, 1] monotonically")
        self._spline = CubicSpline(x, y, bc_type="clamped")

    def eval(self, s):
        s = np.asarray(s, dtype=float)
        inside = (s > 0.0) & (s < 1.0)
        si = np.where(inside, s, 0.0)
        outs = []
        for nu in range(4):
            v = self._spline(si, nu=nu)
            if nu == 0:
                v = np.where(s <= 0.0, 1.0, np.where(inside, v, 0.0))
            else:
                v = np.where(inside, v, 0.0)
            outs.append(v)
        return tuple(outs)

    def to_config(self) -> dict:
        xs = self._spline.x
        return {"kind": "table", "x": list(xs), "y": list(self._spline(xs))}


def eval_chi(s, chi=None):
    """Cutoff value and first three derivatives at s >= 0 (exact 0 for s >= 1)."""
    return (chi or QuinticCutoff()).eval(s)


@dataclass(frozen=True)
class GridConfig:
    """Grid resolutions shared by the pipeline stages.

    ``nx``/``ny`` size the layer solves (streamwise nodes / wall-normal nodes
    on half-line and strip grids), ``nz`` the outer-corrector domain
    [0, L] x [0, 1]; ``ns_nx``/``ns_ny`` are cell counts of the staggered
    reference solve.  Stretch factors are largest/smallest cell ratios of
    the wall-clustered grids (per-cell growth stays below 1.05).
    """

    nx: int = 129
    ny: int = 257
    nz: int = 257
    y_factor: float = 200.0
    strip_factor: float = 50.0
    z_factor: float = 50.0
    ns_nx: int = 128
    ns_ny: int = 192
    ns_factor: float = 50.0

    def to_config(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class ProblemSpec:
    """Immutable problem data; all fields are set at construction."""

    epsilon_list: tuple
    L: float
    gamma: float
    u_b: float
    u_e0: Profile
    ubar0: Profile
    ubar1: Profile
    ub1: Profile
    Vb0: Profile
    VbL: Profile
    kappa: float = 0.05
    chi: object = field(default_factory=QuinticCutoff)
    grids: GridConfig = field(default_factory=GridConfig)

    @property
    def u_e(self) -> float:
        """Outer speed at the wall, u_e0(0)."""
        return float(self.u_e0(0.0))

    @property
    def eps_min(self) -> float:
        return float(min(self.epsilon_list))

    def profiles(self) -> dict:
        return {
            "u_e0": self.u_e0,
            "ubar0": self.ubar0,
            "ubar1": self.ubar1,
            "ub1": self.ub1,
            "Vb0": self.Vb0,
            "VbL": self.VbL,
        }

    def to_config(self) -> dict:
        return {
            "epsilon_list": list(self.epsilon_list),
            "L": self.L,
            "gamma": self.gamma,
            "u_b": self.u_b,
            "kappa": self.kappa,
            "profiles": {k: p.to_config() for k, p in self.profiles().items()},
            "chi": self.chi.to_config(),
            "grids": self.grids.to_config(),
        }


@dataclass
class CheckResult:
    name: str
    passed: bool
    magnitude: float
    tolerance: float
    note: str = ""


@dataclass
class ValidationReport:
    checks: list
    deferred: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def first_failure(self):
        for c in self.checks:
            if not c.passed:
                return c
        return None

    def lines(self):
        out = []
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            out.append(f"[{status}] {c.name}: |violation|={c.magnitude:.3e} (tol {c.tolerance:.1e}) {c.note}")
        for d in self.deferred:
            out.append(f"[DEFER] {d}")
        return out


def validate_spec(spec: ProblemSpec, raise_on_fail: bool = True) -> ValidationReport:
    """Check every hard invariant of the problem data.

    Pure and idempotent.  Raises ``SpecRejected`` naming the first violated
    invariant unless ``raise_on_fail`` is false; the two solve-dependent side
    compatibilities (``Vb0(0) = -v0_p(0,0)`` and ``VbL(0) = -v0_p(L,0)``) are
    returned as deferred checks to be run after the zeroth-order solve.
    """
    checks: list[CheckResult] = []

    def add(name, violation, tol, note=""):
        checks.append(CheckResult(name, violation <= tol, float(violation), tol, note))

    eps = np.asarray(spec.epsilon_list, dtype=float)
    ok_eps = len(eps) >= 1 and np.all(eps > 0) and np.all(np.diff(eps) < 0)
    checks.append(CheckResult("epsilon_list_decreasing_positive", bool(ok_eps), 0.0 if ok_eps else 1.0, 0.0))

    add("gamma_in_(0,1/5)", 0.0 if 0.0 < spec.gamma < GAMMA_MAX else 1.0, 0.0, f"gamma={spec.gamma}")
    add("L_in_(0,L_max]", 0.0 if 0.0 < spec.L <= L_MAX else 1.0, 0.0, f"L={spec.L}")
    add("kappa_small_positive", 0.0 if 0.0 < spec.kappa <= 0.25 else 1.0, 0.0, f"kappa={spec.kappa}")
    add("u_b_positive", 0.0 if spec.u_b > 0 else 1.0, 0.0)

    zs = np.linspace(0.0, 1.0, 2001)
    add("u_e0_positive", max(0.0, -float(np.min(spec.u_e0(zs)))), 0.0)
    add("u_e0_flat_top", abs(float(spec.u_e0(1.0, 1))), spec.u_e0.tol, "u_e0'(1)")

    wall_gap = float(spec.ubar0(0.0)) - (spec.u_b - spec.u_e)
    add("ubar0_wall_match", abs(wall_gap), max(spec.ubar0.tol, spec.u_e0.tol), "ubar0(0) - (u_b - u_e)")

    if ok_eps:
        from .numerics import half_line_ymax

        yg = np.linspace(0.0, half_line_ymax(float(eps.min())), 4001)
        worst = np.inf
        for e in eps:
            ys = yg[yg <= 1.0 / np.sqrt(e)]
            worst = min(worst, float(np.min(spec.u_e0(np.sqrt(e) * ys) + spec.ubar0(ys))))
        add("background_positive", max(0.0, -worst), 0.0, f"min(u_e0+ubar0)={worst:.4g}")

    for name, prof in (("Vb0", spec.Vb0), ("VbL", spec.VbL)):
        add(f"{name}(1)=0", abs(float(prof(1.0))), prof.tol)
        add(f"{name}''(1)=0", abs(float(prof(1.0, 2))), prof.tol)
    add("ub1'(1)=0", abs(float(spec.ub1(1.0, 1))), spec.ub1.tol)

    c0, c1, *_ = spec.chi.eval(np.array([0.0, 1.0]))
    add("chi(0)=1", abs(float(c0[0]) - 1.0), TOL_CLOSED_FORM)
    add("chi(1)=0", abs(float(c0[1])), TOL_CLOSED_FORM)
    add("chi'(0)=chi'(1)=0", max(abs(float(c1[0])), abs(float(c1[1]))), TOL_CLOSED_FORM)
    tail = spec.chi.eval(np.array([1.0, 1.5, 2.0, 10.0]))[0]
    add("chi_support_[0,1]", float(np.max(np.abs(tail))), 0.0, "exact zero beyond 1")

    deferred = [
        "Vb0(0) = -v0_p(0, 0) (checked after the zeroth-order layer solve, tol 1e-4)",
        "VbL(0) = -v0_p(L, 0) (checked after the zeroth-order layer solve, tol 1e-4)",
    ]
    report = ValidationReport(checks, deferred)
    if raise_on_fail and not report.passed:
        bad = report.first_failure()
        exc = SpecRejected(bad.name, f"violation {bad.magnitude:.3e} > tol {bad.tolerance:.1e}")
        exc.report = report
        raise exc
    return report


# --- configuration files ----------------------------------------------------

_TOP_KEYS = {"epsilon_list", "L", "gamma", "u_b", "kappa", "profiles", "chi", "grids"}
_PROFILE_NAMES = ("u_e0", "ubar0", "ubar1", "ub1", "Vb0", "VbL")


def _profile_from_config(name: str, cfg: dict) -> Profile:
    if set(cfg) - {"kind", "params", "x", "y"}:
        raise SpecRejected("config_schema", f"unknown keys in profiles.{name}: {sorted(set(cfg) - {'kind', 'params', 'x', 'y'})}")
    kind = cfg.get("kind")
    if kind == "table":
        params = {"x": cfg.get("x", cfg.get("params", {}).get("x")), "y": cfg.get("y", cfg.get("params", {}).get("y"))}
        return Profile("table", params)
    return Profile(kind, cfg.get("params", {}))


def spec_from_config(cfg: dict) -> ProblemSpec:
    """Build a ProblemSpec from a parsed JSON configuration (strict keys)."""
    unknown = set(cfg) - _TOP_KEYS
    if unknown:
        raise SpecRejected("config_schema", f"unknown top-level keys: {sorted(unknown)}")
    missing = {"epsilon_list", "L", "gamma", "u_b", "profiles"} - set(cfg)
    if missing:
        raise SpecRejected("config_schema", f"missing required keys: {sorted(missing)}")
    profs = cfg["profiles"]
    unknown_p = set(profs) - set(_PROFILE_NAMES)
    if unknown_p:
        raise SpecRejected("config_schema", f"unknown profile names: {sorted(unknown_p)}")
    missing_p = set(_PROFILE_NAMES) - set(profs)
    if missing_p:
        raise SpecRejected("config_schema", f"missing profiles: {sorted(missing_p)}")
    profiles = {name: _profile_from_config(name, profs[name]) for name in _PROFILE_NAMES}

    chi_cfg = cfg.get("chi", {"kind": "quintic"})
    if chi_cfg.get("kind", "quintic") == "quintic":
        chi = QuinticCutoff()
    elif chi_cfg.get("kind") == "table":
        chi = TableCutoff(chi_cfg["x"], chi_cfg["y"])
    else:
        raise SpecRejected("config_schema", f"unknown chi kind {chi_cfg.get('kind')!r}")

    grids_cfg = cfg.get("grids", {})
    unknown_g = set(grids_cfg) - set(GridConfig.__dataclass_fields__)
    if unknown_g:
        raise SpecRejected("config_schema", f"unknown grid keys: {sorted(unknown_g)}")
    grids = GridConfig(**grids_cfg)

    return ProblemSpec(
        epsilon_list=tuple(float(e) for e in cfg["epsilon_list"]),
        L=float(cfg["L"]),
        gamma=float(cfg["gamma"]),
        u_b=float(cfg["u_b"]),
        kappa=float(cfg.get("kappa", 0.05)),
        chi=chi,
        grids=grids,
        **profiles,
    )


def load_spec(path) -> ProblemSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return spec_from_config(json.load(fh))


def save_spec(spec: ProblemSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(spec.to_config(), fh, indent=2, sort_keys=True)
        fh.write("\n")


# Side-data amplitudes of the default benchmark.  The outer corrector's side
# profiles must hit -v0_p at the inflow/outflow wall corners; v0_p(0,0) and
# v0_p(L,0) come out of the layer solve, so the shipped amplitudes are frozen
# from a converged run at the default grids (deferred check tolerance 1e-4).
BENCHMARK_VB0_AMPLITUDE = -0.4937120810035628
BENCHMARK_VBL_AMPLITUDE = -0.3991652174615464

# quintic step 1 -> 0 with flat ends: q(z) = 1 - 10 z^3 + 15 z^4 - 6 z^5
_QUINTIC_STEP = (1.0, 0.0, 0.0, -10.0, 15.0, -6.0)


def benchmark_spec(
    epsilon_list=(0.04, 0.02, 0.01, 0.005, 0.0025),
    L: float = 0.25,
    gamma: float = 0.1,
    kappa: float = 0.05,
    grids: GridConfig | None = None,
) -> ProblemSpec:
    """The default benchmark: u_b = 2, u_e = 1, ubar0 = exp(-y).

    The outer shear is ``u_e0(z) = 1 + 1.5 z^2 - z^3`` (positive, flat top);
    first-order inflow data are ``ub1 = 1.5 cos(pi z)`` and
    ``ubar1 = -1.5 exp(-y)`` so the corner condition ``ubar1(0) = -ub1(0)``
    holds; side data are quintic steps scaled by the frozen wall-trace
    amplitudes.  The sharp inflow corner of ubar0 = exp(-y) (its second
    derivative does not vanish at the wall) leaves a slowly-decaying floor
    in the outer-corrector residual, so the first-order inflow is sized to
    keep the decaying ingredients dominant over the sweep window.
    """
    scale = [BENCHMARK_VB0_AMPLITUDE * c for c in _QUINTIC_STEP]
    scale_l = [BENCHMARK_VBL_AMPLITUDE * c for c in _QUINTIC_STEP]
    return ProblemSpec(
        epsilon_list=tuple(epsilon_list),
        L=L,
        gamma=gamma,
        u_b=2.0,
        kappa=kappa,
        u_e0=Profile("poly", {"coeffs": [1.0, 0.0, 1.5, -1.0]}),
        ubar0=Profile("exp_decay", {"amplitude": 1.0, "rate": 1.0}),
        ubar1=Profile("exp_decay", {"amplitude": -1.5, "rate": 1.0}),
        ub1=Profile("sine", {"amplitude": 1.5, "frequency": np.pi, "phase": np.pi / 2}),
        Vb0=Profile("poly", {"coeffs": scale}),
        VbL=Profile("poly", {"coeffs": scale_l}),
        grids=grids or GridConfig(),
    )


def trivial_chain_spec(
    epsilon_list=(0.04, 0.01, 0.0025),
    L: float = 0.25,
    u_e: float = 1.0,
    grids: GridConfig | None = None,
) -> ProblemSpec:
    """Degenerate data making every corrector vanish identically:
    u_b = u_e, ubar0 = ubar1 = 0, ub1 = 0, Vb0 = VbL = 0."""
    zero = Profile("constant", {"value": 0.0})
    return ProblemSpec(
        epsilon_list=tuple(epsilon_list),
        L=L,
        gamma=0.1,
        u_b=u_e,
        u_e0=Profile("poly", {"coeffs": [u_e, 0.0, 1.5, -1.0]}),
        ubar0=zero,
        ubar1=zero,
        ub1=zero,
        Vb0=zero,
        VbL=zero,
        grids=grids or GridConfig(),
    )


def with_grids(spec: ProblemSpec, **kwargs) -> ProblemSpec:
    return replace(spec, grids=replace(spec.grids, **kwargs))
