"""Linear correction systems around the leading-order profiles.

In 2D the corrections ``(sigma_i, nu_i)``, i = 1..3, solve

    Delta sigma - sigma + R^2 sigma - R nu = F_i
    -Delta nu - 2 Delta(R sigma)          = G_i

as one block-coupled sparse system, and ``upsilon_1`` follows from a single
quadrature.  The electrostatic variant swaps the Laplacian acting on ``sigma``
for the vector radial Laplacian and ``R`` for the vortex profile ``R1``.

In 3D the corrections ``(S_i, N_i, V_i)``, i = 1..5, reuse the dense Jacobian
of the self-similar Newton solve: ``N_i`` is eliminated through the exact
integral inverse of ``L = xi^2 d2 + 6.5 xi d + 7``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .ground_states import GroundStateBundle, selfsimilar_density_operator
from .radial_core import Profile, cumulative_weighted, dirichlet_row, robin_row, solve_sparse

__all__ = [
    "CorrectionSet",
    "coupled_operator_2d",
    "solve_corrections_2d",
    "solve_corrections_3d",
    "correction_jacobian_3d",
    "refit_origin",
]

VARIANTS_2D = {"scalar2d": "r2d", "electrostatic2d": "vortex"}


@dataclass(eq=False)
class CorrectionSet:
    variant: str
    entries: dict
    residuals: dict
    base: GroundStateBundle
    a0: float | None = None
    extras: dict = field(default_factory=dict)

    @property
    def grid(self):
        return self.base.grid

    def __getitem__(self, key):
        return self.entries[key]

    def max_residual(self):
        return max(v for r in self.residuals.values() for k, v in r.items() if not k.startswith("fd_"))


def refit_origin(values, grid, replace=6, window=(6, 14), degree=3):
    """Replace the first ``replace`` samples by an even least-squares fit.

    Fields built by differentiating an integral-inverse result twice pick up
    node-local noise at the origin.  The fit is a polynomial in ``xi**2`` over
    the nodes in ``window``.
    """
    xi = grid.nodes
    out = np.array(values, dtype=float)
    m = slice(*window)
    c = np.polyfit(xi[m] ** 2, out[m], degree)
    out[:replace] = np.polyval(c, xi[:replace] ** 2)
    return out


# ---------------------------------------------------------------------------
# 2D


def _variant_pieces(base, variant):
    if variant not in VARIANTS_2D:
        raise ValueError(f"unknown 2D variant {variant!r}; expected one of {sorted(VARIANTS_2D)}")
    if base.kind != VARIANTS_2D[variant]:
        raise ValueError(f"variant {variant} needs a {VARIANTS_2D[variant]} bundle, got {base.kind}")
    g = base.grid
    if variant == "scalar2d":
        return g, base["R"].values, g.laplacian_matrix, +1
    return g, base["R1"].values, g.vector_laplacian_matrix, -1


def coupled_operator_2d(base, variant="scalar2d"):
    """Assembled block matrix acting on ``[sigma; nu]`` with boundary rows."""
    g, R, lap_s, parity = _variant_pieces(base, variant)
    n = g.n
    lap = g.laplacian_matrix
    eye = sp.identity(n, format="csr")
    A = sp.bmat(
        [[lap_s - eye + sp.diags(R**2), -sp.diags(R)],
         [-2 * lap @ sp.diags(R), -lap]],
        format="lil",
    )
    A[n - 1, :] = 0
    A[n - 1, :n] = robin_row(g, -1, 1.0, parity).coeffs
    A[2 * n - 1, :] = 0
    A[2 * n - 1, n:] = dirichlet_row(g, -1).coeffs
    if parity < 0:
        A[0, :] = 0
        A[0, 0] = 1.0
    return A.tocsr()


def _rhs_2d(g, R, lap_s, parity):
    xi = g.nodes
    lap = g.laplacian_matrix
    R2 = R**2
    L2 = xi**2 * (g.D2(1) @ R2) + 6 * xi * (g.D1(1) @ R2) + 6 * R2
    zero = np.zeros(g.n)
    return {
        1: (zero, L2),
        2: (-(xi**2) * R / 4, zero),
        3: (lap_s @ (lap_s @ R), lap @ (lap @ R2)),
    }


def solve_corrections_2d(base, variant="scalar2d"):
    """Correction profiles ``sigma_i, nu_i`` (i = 1..3) and ``upsilon_1``."""
    g, R, lap_s, parity = _variant_pieces(base, variant)
    n = g.n
    xi = g.nodes
    lap = g.laplacian_matrix
    A = coupled_operator_2d(base, variant)
    sig_par = "even" if parity > 0 else "odd"
    entries, residuals = {}, {}
    for i, (F, G) in _rhs_2d(g, R, lap_s, parity).items():
        b = np.concatenate([F, G])
        b[n - 1] = 0.0
        b[2 * n - 1] = 0.0
        if parity < 0:
            b[0] = 0.0
        x = solve_sparse(A, b)
        sigma, nu = x[:n], x[n:]
        r1 = lap_s @ sigma - sigma + R**2 * sigma - R * nu - F
        r2 = -(lap @ nu) - 2 * (lap @ (R * sigma)) - G
        lo = 1 if parity < 0 else 0
        s1 = max(np.max(np.abs(F)), np.max(np.abs(lap_s @ sigma)), 1e-300)
        s2 = max(np.max(np.abs(G)), np.max(np.abs(lap @ nu)), 1e-300)
        residuals[i] = {
            "sigma_eq": float(np.max(np.abs(r1[lo:-1])) / s1),
            "nu_eq": float(np.max(np.abs(r2[:-1])) / s2),
        }
        entries[i] = {"sigma": Profile(g, sigma, sig_par), "nu": Profile(g, nu, "even")}
    # the source 2 R^2 + xi (R^2)' is xi^-1 (xi^2 R^2)', so integrating
    # xi^-1 (xi ups)' = source from a regular origin gives ups = xi R^2 exactly
    R2 = R**2
    ups = xi * R2
    entries["upsilon1"] = Profile(g, ups, "odd", "free")
    src = 2 * R2 + xi * (g.D1(1) @ R2)
    quad = np.zeros(n)
    quad[1:] = cumulative_weighted(g, src, 1.0, +1)[1:] / xi[1:]
    residuals["upsilon1"] = {"fd_quadrature_form": float(np.max(np.abs(quad - ups)) / np.max(np.abs(ups)))}
    return CorrectionSet(variant, entries, residuals, base)


# ---------------------------------------------------------------------------
# 3D


def correction_jacobian_3d(base):
    """``(J, K)``: the dense linearised amplitude operator and ``K = L^-1 Delta``.

    ``J S = (Delta - 1 - N0) S - S0 K (2 S0 S)`` with the Robin row in place of
    the last equation.
    """
    g = base.grid
    cache = g.__dict__.setdefault("_op_cache", {})
    key = ("_J3", id(base))
    if key not in cache:
        S0 = base["S0"].values
        N0 = base["N0"].values
        lap = g.laplacian_matrix.toarray()
        K = selfsimilar_density_operator(g) @ lap
        J = lap - np.eye(g.n) - np.diag(N0) - S0[:, None] * K * (2 * S0)[None, :]
        J[-1] = robin_row(g, -1, 1.0, +1).coeffs
        cache[key] = (J, K)
    return cache[key]


def _velocity(g, N, a0):
    """``V`` from ``xi^-2 (xi^2 V)' = -a0 (2N + xi N')``, regular at the origin."""
    xi = g.nodes
    V = np.zeros(g.n)
    V[1:] = -a0 * (xi[1:] * N[1:] - cumulative_weighted(g, N, 2.0, +1)[1:] / xi[1:] ** 2)
    return V


def _rhs_3d(base):
    g = base.grid
    xi = g.nodes
    lap = g.laplacian_matrix
    S0 = base["S0"].values
    N0 = base["N0"].values
    zero = np.zeros(g.n)
    lapN0 = refit_origin(lap @ N0, g)
    # G5 = -L(N0); by the density equation this equals -Delta(S0^2) exactly
    return {
        1: (-(xi**2) * S0 / 4, zero),
        2: (zero, lapN0),
        3: (lap @ (lap @ S0), zero),
        4: (zero, -refit_origin(lap @ lapN0, g)),
        5: (zero, -(lap @ (S0**2))),
    }


def solve_corrections_3d(base, a0):
    """Corrections ``(S_i, N_i, V_i)``, i = 1..5, around ``(S0, N0, V0)``.

    ``a0`` multiplies the velocity corrections only; the amplitude and density
    corrections do not depend on it.
    """
    if base.kind != "selfsim3d":
        raise ValueError(f"3D corrections need a selfsim3d bundle, got {base.kind}")
    if not a0 > 0:
        raise ValueError(f"a0 must be positive, got {a0!r}")
    g = base.grid
    xi = g.nodes
    lap = g.laplacian_matrix
    S0 = base["S0"].values
    N0 = base["N0"].values
    Linv = selfsimilar_density_operator(g)
    J, K = correction_jacobian_3d(base)
    entries, residuals = {}, {}
    for i, (F, G) in _rhs_3d(base).items():
        Gt = Linv @ G
        rhs = F + S0 * Gt
        rhs[-1] = 0.0
        S = np.linalg.solve(J, rhs)
        N = K @ (2 * S0 * S) + Gt
        V = _velocity(g, N, a0)
        r1 = lap @ S - S - N0 * S - S0 * N - F
        rN = N - K @ (2 * S0 * S) - Gt
        LN = xi**2 * (g.D2(1) @ N) + 6.5 * xi * (g.D1(1) @ N) + 7 * N
        r2 = LN - 2 * (lap @ (S0 * S)) - G
        s1 = max(np.max(np.abs(F)), np.max(np.abs(lap @ S)), 1e-300)
        sN = max(np.max(np.abs(N)), 1e-300)
        s2 = max(np.max(np.abs(G)), np.max(np.abs(2 * (lap @ (S0 * S)))), 1e-300)
        residuals[i] = {
            "amplitude_eq": float(np.max(np.abs(r1[:-1])) / s1),
            "density_eq": float(np.max(np.abs(rN)) / sN),
            "fd_density_eq": float(np.max(np.abs(r2[:-2])) / s2),
        }
        entries[i] = {
            "S": Profile(g, S, "even"),
            "N": Profile(g, N, "even", "free"),
            "V": Profile(g, V, "odd", "free"),
        }
    return CorrectionSet("threeD", entries, residuals, base, a0=float(a0))
