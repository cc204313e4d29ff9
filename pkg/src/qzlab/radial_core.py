"""Radial grids, finite-difference operators, quadrature and sparse BVP solves.

Every field in this package is a radial profile sampled on a uniform grid
that includes the origin.  Derivatives use 4th-order centered stencils; the
coordinate singularity at the origin is handled with parity ghost points
(``f(-kh) = +f(kh)`` for even profiles, ``-f(kh)`` for odd ones) and the
two outermost nodes use one-sided stencils of the same order.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "RadialGrid",
    "Profile",
    "LinearRadialOperator",
    "BoundaryRow",
    "ParityError",
    "SingularOperatorError",
    "TailWarning",
    "make_grid",
    "default_grid",
    "scalar_laplacian",
    "vector_radial_laplacian",
    "weighted_integral",
    "solve_linear_bvp",
    "solve_sparse",
    "fd_weights",
    "write_profile_csv",
    "read_profile_csv",
    "dirichlet_row",
    "neumann_row",
    "robin_row",
    "cumulative_weighted",
    "cumulative_weighted_matrix",
    "theta_inverse_matrix",
]

TAIL_TOL = 1e-8
MIN_NODES = 16


class ParityError(ValueError):
    """Raised when a profile's parity does not match what an operator needs."""


class SingularOperatorError(np.linalg.LinAlgError):
    def __init__(self, msg, cond=None):
        super().__init__(msg if cond is None else f"{msg} (condition estimate {cond:.3e})")
        self.cond = cond


class TailWarning(UserWarning):
    """Integrand has not decayed at the truncation radius."""


def fd_weights(offsets, order):
    """Finite-difference weights on integer ``offsets`` for the ``order``-th derivative.

    Weights are for unit spacing; divide by ``h**order``.
    """
    offsets = np.asarray(offsets, dtype=float)
    m = len(offsets)
    V = np.vander(offsets, m, increasing=True).T
    rhs = np.zeros(m)
    rhs[order] = float(np.prod(np.arange(1, order + 1)))
    return np.linalg.solve(V, rhs)


_C1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_C2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
_END_OFFSETS = {
    # node n-2 and n-1, 6-point one-sided stencils (5th order for D1, 4th for D2)
    -2: np.arange(-4, 2),
    -1: np.arange(-5, 1),
}


def _derivative_matrix(n, h, order, parity):
    """Sparse 4th-order derivative matrix with parity ghosts at the origin."""
    centered = _C1 if order == 1 else _C2
    rows, cols, vals = [], [], []
    for i in range(n - 2):
        for k, w in zip(range(-2, 3), centered):
            j = i + k
            if w == 0.0:
                continue
            if j < 0:
                j, w = -j, parity * w
            rows.append(i)
            cols.append(j)
            vals.append(w)
    for back, offs in _END_OFFSETS.items():
        i = n + back
        for k, w in zip(offs, fd_weights(offs, order)):
            rows.append(i)
            cols.append(i + k)
            vals.append(w)
    M = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    M.sum_duplicates()
    return M / h**order


_C1_6 = np.array([-1.0, 9.0, -45.0, 0.0, 45.0, -9.0, 1.0]) / 60.0


def _d1_sixth_order(n, h, fallback, parity=-1):
    """7-point centered first derivative on rows ``0 .. n-4``; ``fallback`` rows elsewhere."""
    M = sp.lil_matrix(fallback)
    for i in range(n - 3):
        row = {}
        for k, w in zip(range(-3, 4), _C1_6):
            j = i + k
            if w == 0.0:
                continue
            if j < 0:
                j, w = -j, parity * w
            row[j] = row.get(j, 0.0) + w / h
        M.rows[i] = sorted(row)
        M.data[i] = [row[j] for j in M.rows[i]]
    return M.tocsr()


def _endpoint_corrections(m):
    """Gregory-type corrections ``c_j`` for the first ``m`` trapezoid weights.

    With unit spacing, the trapezoid rule misses ``sum_k B_2k/(2k)! f^(2k-1)``
    at each end.  The corrections reproduce these terms exactly for
    polynomials of degree below ``m``: ``sum_j c_j j^p = B_(p+1)/(p+1)`` for odd
    ``p`` and zero for even ``p``.
    """
    from scipy.special import bernoulli

    B = bernoulli(m + 1)
    j = np.arange(m, dtype=float)
    A = np.vander(j, m, increasing=True).T
    rhs = np.array([B[p + 1] / (p + 1) if p % 2 else 0.0 for p in range(m)])
    return np.linalg.solve(A, rhs)


def _quadrature_weights(n, h, m=8):
    """Endpoint-corrected trapezoid weights, ``O(h^m)`` for smooth integrands."""
    m = min(m, n // 2)
    w = np.ones(n)
    w[0] = w[-1] = 0.5
    c = _endpoint_corrections(m)
    w[:m] += c
    w[n - m:] += c[::-1]
    return w * h


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Uniform radial grid on ``[0, r_max]`` for dimension ``d``.

    ``weights`` integrate against the radial measure ``xi**(d-1) dxi`` (angular
    factor omitted).
    """

    d: int
    r_max: float
    n: int

    @cached_property
    def nodes(self):
        return np.linspace(0.0, self.r_max, self.n)

    @property
    def h(self):
        return self.r_max / (self.n - 1)

    @cached_property
    def plain_weights(self):
        """Weights for ``dxi`` (no radial measure)."""
        return _quadrature_weights(self.n, self.h)

    @cached_property
    def weights(self):
        return self.plain_weights * self.nodes ** (self.d - 1)

    def D1(self, parity=1):
        return self._deriv(1, parity)

    def D2(self, parity=1):
        return self._deriv(2, parity)

    def _deriv(self, order, parity):
        key = f"_d{order}_{'e' if parity > 0 else 'o'}"
        cache = self.__dict__.setdefault("_op_cache", {})
        if key not in cache:
            cache[key] = _derivative_matrix(self.n, self.h, order, parity)
        return cache[key]

    @cached_property
    def laplacian_matrix(self):
        """Scalar radial Laplacian for even profiles; row 0 is ``d * f''(0)``."""
        xi = self.nodes
        inv = np.zeros_like(xi)
        inv[1:] = (self.d - 1) / xi[1:]
        D2 = self.D2(1)
        L = D2 + sp.diags(inv) @ self.D1(1)
        L = L.tolil()
        # d * f''(0), plus a 6th-difference term so the leading truncation error
        # at the origin matches the (d-1) f'/xi rows; keeps Delta(Delta f) 4th order
        row = self.d * D2[0, :].toarray().ravel()
        row[:4] -= (self.d - 1) * (2.0 / 90.0) * np.array([-20.0, 30.0, -12.0, 2.0]) / self.h**2
        L[0, :] = row
        return L.tocsr()

    @cached_property
    def vector_laplacian_matrix(self):
        """Radial component of the vector Laplacian for odd profiles; row 0 is zero."""
        xi = self.nodes
        inv = np.zeros_like(xi)
        inv2 = np.zeros_like(xi)
        inv[1:] = (self.d - 1) / xi[1:]
        inv2[1:] = (self.d - 1) / xi[1:] ** 2
        # an odd profile has a nonzero fifth derivative at the origin, so the
        # 4th-order D1 error divided by xi would be O(h^3) there
        L = self.D2(-1) + sp.diags(inv) @ _d1_sixth_order(self.n, self.h, self.D1(-1)) - sp.diags(inv2)
        L = L.tolil()
        L[0, :] = 0.0
        return L.tocsr()

    @cached_property
    def bilaplacian_matrix(self):
        return (self.laplacian_matrix @ self.laplacian_matrix).tocsr()

    @cached_property
    def vector_bilaplacian_matrix(self):
        return (self.vector_laplacian_matrix @ self.vector_laplacian_matrix).tocsr()

    def integrate(self, values):
        """``int values * xi**(d-1) dxi`` on the grid (no tail check)."""
        return float(np.dot(self.weights, np.asarray(values)))

    def cumulative(self, values):
        """Running integral ``int_0^xi values ds`` (4th-order, no radial measure)."""
        from scipy.integrate import cumulative_simpson

        out = np.zeros(self.n)
        out[1:] = cumulative_simpson(np.asarray(values, dtype=float), dx=self.h)
        return out

    def describe(self):
        return {"d": self.d, "r_max": self.r_max, "n": self.n}


def make_grid(d, r_max, n):
    """Build a :class:`RadialGrid`.

    Raises
    ------
    ValueError
        For ``d`` outside {2, 3}, non-positive ``r_max`` or fewer than 16 nodes.
    """
    if d not in (2, 3):
        raise ValueError(f"dimension must be 2 or 3, got {d!r}")
    if not r_max > 0:
        raise ValueError(f"r_max must be positive, got {r_max!r}")
    if int(n) != n or n < MIN_NODES:
        raise ValueError(f"need at least {MIN_NODES} nodes, got {n!r}")
    return RadialGrid(int(d), float(r_max), int(n))


def default_grid(d):
    """Default truncation: ``r_max=30`` with 3000 intervals in 2D, ``r_max=25`` with 2500 in 3D."""
    return make_grid(2, 30.0, 3001) if d == 2 else make_grid(3, 25.0, 2501)


@dataclass(eq=False)
class Profile:
    grid: RadialGrid
    values: np.ndarray
    parity: str = "even"
    far_field: str = "decaying"

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} samples, got shape {self.values.shape}")
        if self.parity not in ("even", "odd"):
            raise ValueError(f"parity must be 'even' or 'odd', got {self.parity!r}")

    @property
    def xi(self):
        return self.grid.nodes

    def like(self, values, parity=None):
        return Profile(self.grid, values, parity or self.parity, self.far_field)

    @classmethod
    def from_function(cls, grid, f, parity="even", far_field="decaying"):
        return cls(grid, f(grid.nodes), parity, far_field)


def _check_parity(p, expected, origin_tol=1e-12):
    if p.parity != expected:
        raise ParityError(f"operator needs a {expected} profile, got {p.parity}")
    if expected == "odd":
        scale = max(1.0, float(np.max(np.abs(p.values))))
        if abs(p.values[0]) > origin_tol * scale:
            raise ParityError(f"odd profile must vanish at the origin, got {p.values[0]!r}")


def scalar_laplacian(p):
    """``r**-(d-1) d/dr r**(d-1) d/dr`` applied to an even profile."""
    _check_parity(p, "even")
    return p.like(p.grid.laplacian_matrix @ p.values)


def vector_radial_laplacian(p):
    """``d/dr r**-(d-1) d/dr r**(d-1)`` applied to an odd profile."""
    _check_parity(p, "odd")
    return p.like(p.grid.vector_laplacian_matrix @ p.values)


def weighted_integral(p, tail_tol=TAIL_TOL):
    """``int_0^r_max p(xi) xi**(d-1) dxi``; warns if ``p`` has not decayed."""
    g = p.grid
    tail = abs(p.values[-1]) * g.r_max ** (g.d - 1)
    if tail >= tail_tol:
        warnings.warn(f"integrand tail {tail:.2e} at r_max={g.r_max}", TailWarning, stacklevel=2)
    return g.integrate(p.values)


@dataclass(frozen=True)
class BoundaryRow:
    """One boundary equation ``coeffs . x = value`` replacing row ``index``."""

    index: int
    coeffs: np.ndarray
    value: float = 0.0
    label: str = ""


def dirichlet_row(grid, index, value=0.0):
    c = np.zeros(grid.n)
    c[index] = 1.0
    return BoundaryRow(index % grid.n, c, value, "dirichlet")


def neumann_row(grid, index, parity=1, value=0.0):
    i = index % grid.n
    return BoundaryRow(i, grid.D1(parity)[i].toarray().ravel(), value, "neumann")


def robin_row(grid, index=-1, kappa=1.0, parity=1, value=0.0):
    """``p' + kappa p = value`` at ``index``."""
    i = index % grid.n
    c = grid.D1(parity)[i].toarray().ravel()
    c[i] += kappa
    return BoundaryRow(i, c, value, f"robin({kappa:g})")


@dataclass(eq=False)
class LinearRadialOperator:
    grid: RadialGrid
    matrix: sp.spmatrix
    boundary: list = field(default_factory=list)
    parity: str = "even"

    def assembled(self):
        A = sp.lil_matrix(self.matrix)
        for row in self.boundary:
            A[row.index, :] = row.coeffs
        return A.tocsr()

    def apply(self, p):
        """Operator applied to ``p`` with boundary rows evaluated in place."""
        return p.like(self.assembled() @ p.values)

    @property
    def bandwidth(self):
        A = self.assembled().tocoo()
        return int(np.max(np.abs(A.row - A.col))) if A.nnz else 0

    @classmethod
    def identity(cls, grid, parity="even"):
        return cls(grid, sp.identity(grid.n, format="csr"), [], parity)

    @classmethod
    def helmholtz(cls, grid, shift=-1.0, boundary="robin"):
        """``Delta_r + shift`` with a regular origin and a decaying outer row."""
        A = grid.laplacian_matrix + shift * sp.identity(grid.n)
        rows = [robin_row(grid, -1, np.sqrt(max(-shift, 0.0)) or 1.0)]
        if boundary == "dirichlet":
            rows = [dirichlet_row(grid, -1)]
        return cls(grid, A.tocsr(), rows, "even")


def _cond_estimate(A, lu):
    n = A.shape[0]
    inv = spla.LinearOperator(
        (n, n), matvec=lu.solve, rmatvec=lambda x: lu.solve(x, trans="T"), dtype=A.dtype
    )
    return spla.onenormest(A) * spla.onenormest(inv)


def solve_sparse(A, b, rtol=1e-10, max_cond=1e13):
    """Direct sparse solve with a residual check and singularity detection."""
    A = sp.csc_matrix(A)
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        raise SingularOperatorError(f"factorization failed: {exc}") from exc
    x = lu.solve(np.asarray(b))
    if not np.all(np.isfinite(x)):
        raise SingularOperatorError("non-finite solution", _cond_estimate(A, lu))
    cond = _cond_estimate(A, lu)
    if cond > max_cond:
        raise SingularOperatorError("operator is singular or ill-conditioned", cond)
    bn = np.max(np.abs(b))
    res = np.max(np.abs(A @ x - b))
    if bn > 0 and res / bn > rtol:
        # one round of refinement before giving up
        x = x + lu.solve(b - A @ x)
        res = np.max(np.abs(A @ x - b))
        # on fine grids |A| |x| can dwarf |b|; a residual at the rounding floor
        # of the product A @ x is as small as double precision allows
        floor = 64 * np.finfo(float).eps * spla.norm(A, np.inf) * np.max(np.abs(x))
        if res / bn > rtol and res > floor:
            raise SingularOperatorError(f"residual {res / bn:.2e} above {rtol:.0e}", cond)
    return x


def solve_linear_bvp(op, rhs):
    """Solve ``op x = rhs``; boundary rows take their own right-hand values."""
    if rhs.grid is not op.grid:
        raise ValueError("operator and right-hand side live on different grids")
    b = np.array(rhs.values, dtype=np.result_type(rhs.values, float))
    for row in op.boundary:
        b[row.index] = row.value
    x = solve_sparse(op.assembled(), b)
    return Profile(op.grid, x, op.parity, rhs.far_field)


def write_profile_csv(path, p):
    path = Path(path)
    complex_valued = np.iscomplexobj(p.values)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        if complex_valued:
            w.writerow(["xi", "re", "im"])
            for x, v in zip(p.xi, p.values):
                w.writerow([f"{x:.17g}", f"{v.real:.17g}", f"{v.imag:.17g}"])
        else:
            w.writerow(["xi", "value"])
            for x, v in zip(p.xi, p.values):
                w.writerow([f"{x:.17g}", f"{v:.17g}"])
    return path


def read_profile_csv(path, d, parity="even"):
    """Read a profile CSV written by :func:`write_profile_csv` onto a fresh grid."""
    data = np.genfromtxt(path, delimiter=",", names=True)
    xi = data["xi"]
    grid = make_grid(d, float(xi[-1]), len(xi))
    if not np.allclose(grid.nodes, xi, rtol=0, atol=1e-12 * max(1.0, xi[-1])):
        raise ValueError(f"{path}: nodes are not a uniform grid starting at 0")
    if "re" in data.dtype.names:
        values = data["re"] + 1j * data["im"]
    else:
        values = data["value"]
    return Profile(grid, values, parity)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W
_PI_OFFSETS = np.arange(-2, 4)  # quintic interpolant over [xi_j, xi_j+1]


def _interval_weights(grid, power, parity=0):
    """Per-interval product-integration weights for ``int s**power f(s) ds``.

    Row ``j`` integrates a local quintic interpolant of ``f`` on nodes
    ``j-2 .. j+3`` exactly against ``s**power`` over ``[xi_j, xi_{j+1}]``.
    Nodes left of the origin are folded back with ``parity`` (+1 even, -1 odd);
    with ``parity=0`` the stencil is shifted one-sided instead.  A uniform
    stencil keeps the quadrature error smooth from node to node, which matters
    when the result is differentiated again.
    """
    n, h = grid.n, grid.h
    m = n - 1
    k = len(_PI_OFFSETS)
    start = np.arange(m) + _PI_OFFSETS[0]
    if parity == 0:
        start = np.maximum(start, 0)
    start = np.minimum(start, n - k)
    local = np.arange(k)[None, :] + start[:, None] - np.arange(m)[:, None]
    jj = np.arange(m, dtype=float)[:, None]
    base = (jj + _GL_X[None, :]) ** power
    mu = np.stack([(base * _GL_X[None, :] ** q) @ _GL_W for q in range(k)], axis=1)
    mu[0] = 1.0 / (power + np.arange(k) + 1.0)
    W = np.empty((m, k))
    for offs in np.unique(local, axis=0):
        rows = np.all(local == offs, axis=1)
        coef = np.linalg.inv(np.vander(offs.astype(float), k, increasing=True))
        W[rows] = mu[rows] @ coef
    W *= h ** (power + 1.0)
    cols = local + np.arange(m)[:, None]
    sign = np.ones_like(W)
    if parity != 0:
        neg = cols < 0
        sign[neg] = parity
        cols = np.abs(cols)
    return W * sign, cols


def cumulative_weighted(grid, values, power, parity=0):
    """``int_0^xi s**power f(s) ds`` at every node (product integration)."""
    W, cols = _interval_weights(grid, power, parity)
    f = np.asarray(values)
    out = np.zeros(grid.n, dtype=np.result_type(f, float))
    out[1:] = np.cumsum(np.sum(W * f[cols], axis=1))
    return out


def cumulative_weighted_matrix(grid, power, parity=0):
    """Dense lower-triangular matrix of :func:`cumulative_weighted`."""
    W, cols = _interval_weights(grid, power, parity)
    m = grid.n - 1
    A = np.zeros((m, grid.n))
    np.add.at(A, (np.repeat(np.arange(m), W.shape[1]), cols.ravel()), W.ravel())
    C = np.zeros((grid.n, grid.n))
    C[1:] = np.cumsum(A, axis=0)
    return C


def theta_inverse_matrix(grid, a, parity=1):
    """Dense matrix of ``(xi d/dxi + a)**-1`` on regular profiles.

    ``u = xi**-a int_0^xi s**(a-1) f(s) ds`` is the solution of
    ``xi u' + a u = f`` that stays bounded at the origin, where ``u(0) = f(0)/a``.
    The result is cached on the grid.
    """
    key = f"_theta_inv_{a!r}_{parity}"
    cache = grid.__dict__.setdefault("_op_cache", {})
    if key not in cache:
        xi = grid.nodes
        C = cumulative_weighted_matrix(grid, a - 1.0, parity)
        scale = np.zeros(grid.n)
        scale[1:] = xi[1:] ** (-a)
        M = scale[:, None] * C
        M[0, :] = 0.0
        M[0, 0] = 1.0 / a
        cache[key] = M
    return cache[key]
