"""Grids, difference operators, quadrature, norms, and sparse solves.

Conventions used throughout the package:

* 2-D fields are stored as arrays of shape ``(nx, ny)`` with ``values[i, j]``
  the nodal value at ``(x_i, y_j)`` (row-major in x, matching the CSV
  snapshot layout).
* Derivatives are second-order: 3-point centered stencils in the interior,
  one-sided stencils of the same order at the boundary rows (4 points for
  second derivatives).  On geometrically stretched grids the stencil weights
  come from polynomial interpolation (Fornberg), so the formal order is kept.
* All quadrature is trapezoidal on the native grid.
* The anisotropic Laplacian is ``lap_eps = d2/dy2 + eps * d2/dx2``, assembled
  exactly as the sum of the two discrete operators.
* Semi-infinite wall-normal domains are truncated at
  ``y_max = max(40, 8/sqrt(eps_min))`` with a homogeneous Dirichlet row at
  the far end; layer profiles decay exponentially, so the truncation error
  is below double precision roundoff well inside the domain.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.interpolate import CubicSpline
from scipy.sparse.linalg import splu

from .errors import GridTooSmall, SingularSystem

DOMAIN_TAGS = ("physical", "half", "scaled", "von_mises", "generic")

DIRECT_SOLVE_RTOL = 1e-10


def fd_weights(nodes: np.ndarray, x0: float, order: int) -> np.ndarray:
    """Finite-difference weights for the ``order``-th derivative at ``x0``.

    Fornberg's recursion on an arbitrary stencil ``nodes``; exact for
    polynomials of degree ``len(nodes) - 1``.
    """
    nodes = np.asarray(nodes, dtype=float)
    n = len(nodes)
    c = np.zeros((n, order + 1))
    c[0, 0] = 1.0
    c1 = 1.0
    c4 = nodes[0] - x0
    for i in range(1, n):
        mn = min(i, order)
        c2 = 1.0
        c5, c4 = c4, nodes[i] - x0
        for j in range(i):
            c3 = nodes[i] - nodes[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, order]


def diff_matrix(nodes: np.ndarray, order: int) -> sparse.csr_matrix:
    """Sparse differentiation matrix of the given derivative order.

    Interior rows are 3-point centered; boundary rows are one-sided with
    enough points (3 for first, 4 for second derivatives) to stay
    second-order accurate.
    """
    nodes = np.asarray(nodes, dtype=float)
    n = len(nodes)
    if n < 3:
        raise GridTooSmall(f"need at least 3 nodes for differencing, got {n}")
    rows, cols, vals = [], [], []

    def add_row(i, stencil):
        w = fd_weights(nodes[stencil], nodes[i], order)
        rows.extend([i] * len(stencil))
        cols.extend(stencil)
        vals.extend(w)

    side = min(4 if order == 2 else 3, n)
    add_row(0, list(range(side)))
    for i in range(1, n - 1):
        add_row(i, [i - 1, i, i + 1])
    add_row(n - 1, list(range(n - side, n)))
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))


def trapezoid_weights(nodes: np.ndarray) -> np.ndarray:
    nodes = np.asarray(nodes, dtype=float)
    w = np.zeros_like(nodes)
    d = np.diff(nodes)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


class Grid1D:
    """Strictly increasing 1-D node set with cached difference operators."""

    def __init__(self, nodes, spacing: str = "uniform", min_nodes: int = 8):
        nodes = np.asarray(nodes, dtype=float)
        if nodes.ndim != 1 or len(nodes) < min_nodes:
            raise GridTooSmall(f"Grid1D needs at least {min_nodes} nodes, got {nodes.shape}")
        if not np.all(np.diff(nodes) > 0):
            raise ValueError("Grid1D nodes must be strictly increasing")
        self.nodes = nodes
        self.nodes.setflags(write=False)
        self.spacing = spacing
        self._cache: dict[int, sparse.csr_matrix] = {}
        self._trapw: np.ndarray | None = None

    @classmethod
    def uniform(cls, a: float, b: float, n: int) -> "Grid1D":
        return cls(np.linspace(a, b, n), spacing="uniform")

    @classmethod
    def stretched(cls, a: float, b: float, n: int, factor: float = 50.0) -> "Grid1D":
        """Geometric stretch clustering nodes at the ``a`` end.

        ``factor`` is the largest-to-smallest cell ratio; the per-cell growth
        ratio is factor**(1/(n-2)), so refining n keeps the clustering shape
        fixed and shrinks every cell like 1/n (no runaway conditioning).
        """
        if factor <= 1.0:
            return cls.uniform(a, b, n)
        # per-cell growth stays below 1.05; on coarse grids the requested
        # clustering factor is capped accordingly
        r = min(factor ** (1.0 / (n - 2)), 1.05)
        k = np.arange(n - 1, dtype=float)
        h = r**k
        h *= (b - a) / h.sum()
        nodes = np.concatenate([[a], a + np.cumsum(h)])
        nodes[-1] = b
        return cls(nodes, spacing=f"geometric-stretch({r:.5f})")

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def a(self) -> float:
        return float(self.nodes[0])

    @property
    def b(self) -> float:
        return float(self.nodes[-1])

    def diff(self, order: int) -> sparse.csr_matrix:
        if order not in self._cache:
            self._cache[order] = diff_matrix(self.nodes, order)
        return self._cache[order]

    def trapz_weights(self) -> np.ndarray:
        if self._trapw is None:
            self._trapw = trapezoid_weights(self.nodes)
        return self._trapw


@dataclass
class Grid2D:
    """Tensor grid: ``gx`` streamwise, ``gy`` wall-normal, with a domain tag."""

    gx: Grid1D
    gy: Grid1D
    domain: str = "generic"

    def __post_init__(self):
        if self.domain not in DOMAIN_TAGS:
            raise ValueError(f"unknown domain tag {self.domain!r}")

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.gx), len(self.gy))

    @property
    def x(self) -> np.ndarray:
        return self.gx.nodes

    @property
    def y(self) -> np.ndarray:
        return self.gy.nodes


@dataclass
class ScalarField2D:
    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"field shape {self.values.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")

    def like(self, values: np.ndarray) -> "ScalarField2D":
        return ScalarField2D(self.grid, values)


def apply_diff(f: ScalarField2D, which: str, eps: float | None = None) -> ScalarField2D:
    """Apply a discrete differential operator to a field.

    ``which`` is one of ``dx, dy, dxx, dyy, lap_eps``; ``lap_eps`` needs the
    viscosity ``eps`` and returns exactly ``dyy(f) + eps * dxx(f)``.
    """
    v = f.values
    if which == "dx":
        out = f.grid.gx.diff(1) @ v
    elif which == "dxx":
        out = f.grid.gx.diff(2) @ v
    elif which == "dy":
        out = v @ f.grid.gy.diff(1).T
    elif which == "dyy":
        out = v @ f.grid.gy.diff(2).T
    elif which == "lap_eps":
        if eps is None:
            raise ValueError("lap_eps requires eps")
        out = v @ f.grid.gy.diff(2).T + eps * (f.grid.gx.diff(2) @ v)
    else:
        raise ValueError(f"unknown operator {which!r}")
    return ScalarField2D(f.grid, out)


def bracket_weight(y: np.ndarray, n: int) -> np.ndarray:
    """Polynomial decay weight <y>^n with <y> = sqrt(1 + y^2)."""
    if n == 0:
        return np.ones_like(np.asarray(y, dtype=float))
    return (1.0 + np.asarray(y, dtype=float) ** 2) ** (0.5 * n)


def weighted_norm(f, n: int = 0, norm: str = "l2_xy", y: np.ndarray | None = None):
    """Weighted norm ||<y>^n f|| with trapezoidal quadrature.

    ``f`` is either a ``ScalarField2D`` (norms ``l2_xy``/``linf``; ``l2_y``
    returns the per-x-station array) or a 1-D slice with its ``y`` nodes.
    """
    if n < 0 or n > 12:
        raise ValueError("weight exponent n must be in [0, 12]")
    if isinstance(f, ScalarField2D):
        ynodes = f.grid.y
        w = bracket_weight(ynodes, n)
        g = f.values * w[None, :]
        if norm == "linf":
            return float(np.max(np.abs(g)))
        wy = f.grid.gy.trapz_weights()
        per_x = np.sqrt((g * g) @ wy)
        if norm == "l2_y":
            return per_x
        if norm == "l2_xy":
            wx = f.grid.gx.trapz_weights()
            return float(np.sqrt(np.dot(wx, (g * g) @ wy)))
        raise ValueError(f"unknown norm {norm!r}")
    vals = np.asarray(f, dtype=float)
    if y is None:
        raise ValueError("1-D slices need explicit y nodes")
    g = vals * bracket_weight(y, n)
    if norm == "linf":
        return float(np.max(np.abs(g)))
    if norm == "l2_y":
        return float(np.sqrt(np.dot(trapezoid_weights(y), g * g)))
    raise ValueError(f"norm {norm!r} not defined for 1-D slices")


def trapz_cumulative(fvals: np.ndarray, nodes: np.ndarray, from_end: bool = False) -> np.ndarray:
    """Cumulative trapezoidal integral along the last axis.

    ``from_end=False`` returns ``F[..., j] = int_{nodes[0]}^{nodes[j]} f``;
    ``from_end=True`` returns ``int_{nodes[j]}^{nodes[-1]} f`` (zero at the
    last node exactly).
    """
    fvals = np.asarray(fvals, dtype=float)
    nodes = np.asarray(nodes, dtype=float)
    d = np.diff(nodes)
    seg = 0.5 * (fvals[..., :-1] + fvals[..., 1:]) * d
    out = np.zeros_like(fvals)
    np.cumsum(seg, axis=-1, out=out[..., 1:])
    if from_end:
        return out[..., -1:] - out
    return out


def spline_cumulative(fvals: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """Cumulative integral from nodes[0] via the cubic-spline antiderivative.

    Fourth-order accurate; reserved for the von Mises coordinate maps, whose
    round-trip tolerance is tighter than trapezoidal quadrature delivers.
    Field quadrature elsewhere stays trapezoidal.
    """
    spl = CubicSpline(nodes, fvals, axis=-1).antiderivative()
    return spl(nodes) - spl(nodes[0])


@dataclass
class LinearSystem:
    """Square sparse system with explicitly marked boundary rows."""

    matrix: sparse.csr_matrix
    rhs: np.ndarray
    boundary_rows: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        m, n = self.matrix.shape
        if m != n or len(self.rhs) != n:
            raise ValueError("linear system must be square and sized to rhs")
        if self.boundary_rows is None:
            self.boundary_rows = np.zeros(n, dtype=bool)
        diag = self.matrix.diagonal()
        bad = self.boundary_rows & (np.abs(diag - 1.0) > 1e-14)
        if np.any(bad):
            raise ValueError("boundary rows must carry a unit diagonal")


def solve_linear(system: LinearSystem) -> tuple[np.ndarray, float]:
    """Direct sparse factorization; returns (solution, relative residual).

    Raises ``SingularSystem`` when the factorization fails; emits an
    ILL_CONDITIONED warning when the residual check exceeds 1e-10.
    """
    a = system.matrix.tocsc()
    try:
        lu = splu(a)
        u = lu.solve(system.rhs)
    except (RuntimeError, ValueError) as exc:
        raise SingularSystem(f"SINGULAR_SYSTEM: {exc}") from exc
    if not np.all(np.isfinite(u)):
        raise SingularSystem("SINGULAR_SYSTEM: factorization produced non-finite values")
    denom = max(float(np.max(np.abs(system.rhs))), 1e-300)
    resid = float(np.max(np.abs(a @ u - system.rhs))) / denom
    if resid > DIRECT_SOLVE_RTOL:
        warnings.warn(f"ILL_CONDITIONED: direct solve residual {resid:.3e}", RuntimeWarning)
    return u, resid


def resample_y(f: ScalarField2D, new_gy: Grid1D, domain: str | None = None) -> ScalarField2D:
    """Cubic-spline resampling of a field onto new wall-normal nodes."""
    spl = CubicSpline(f.grid.y, f.values, axis=1)
    vals = spl(new_gy.nodes)
    grid = Grid2D(f.grid.gx, new_gy, domain or f.grid.domain)
    return ScalarField2D(grid, vals)


def sample_columns(z_nodes: np.ndarray, values: np.ndarray, z_query: np.ndarray) -> np.ndarray:
    """Evaluate a tensor field (nx, nz) at per-grid query points z_query (nz2,).

    Queries outside [z_nodes[0], z_nodes[-1]] are clamped to the end values
    (used for the constant extension of outer-flow fields above the channel
    mid-plane).
    """
    spl = CubicSpline(z_nodes, values, axis=1)
    zq = np.clip(z_query, z_nodes[0], z_nodes[-1])
    return spl(zq)


# --- snapshot I/O ---------------------------------------------------------

FIELD_MAGIC = b"PEXFLD01"


def write_field_csv(path, f: ScalarField2D) -> None:
    x, y = f.grid.x, f.grid.y
    with open(path, "w", encoding="ascii") as fh:
        fh.write("x,y,value\n")
        for i in range(len(x)):
            for j in range(len(y)):
                fh.write(f"{float(x[i])!r},{float(y[j])!r},{float(f.values[i, j])!r}\n")


def read_field_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    x = np.unique(data[:, 0])
    y = np.unique(data[:, 1])
    vals = data[:, 2].reshape(len(x), len(y))
    return x, y, vals


def write_field_binary(path, f: ScalarField2D) -> None:
    """Binary snapshot: magic, int64 nx, ny, then x, y, values as LE doubles."""
    nx, ny = f.grid.shape
    with open(path, "wb") as fh:
        fh.write(FIELD_MAGIC)
        fh.write(struct.pack("<qq", nx, ny))
        fh.write(f.grid.x.astype("<f8").tobytes())
        fh.write(f.grid.y.astype("<f8").tobytes())
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_field_binary(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != FIELD_MAGIC:
            raise ValueError(f"bad field snapshot magic {magic!r}")
        nx, ny = struct.unpack("<qq", fh.read(16))
        x = np.frombuffer(fh.read(8 * nx), dtype="<f8")
        y = np.frombuffer(fh.read(8 * ny), dtype="<f8")
        vals = np.frombuffer(fh.read(8 * nx * ny), dtype="<f8").reshape(nx, ny)
    return x.copy(), y.copy(), vals.copy()


def half_line_ymax(eps_min: float) -> float:
    return max(40.0, 8.0 / np.sqrt(eps_min))
