"""Leading-order profiles: ground states and self-similar collapse profiles.

Four nonlinear problems live here:

* the 2D ground state ``R`` of ``Delta R - R + R**3 = 0``;
* the vortex ground state ``R1`` (same equation, vector radial Laplacian);
* the 2D self-similar pair ``(P, M)`` for a given ``a0``;
* the 3D self-similar triple ``(S0, N0, V0)``.

The two ground states are bracketed by shooting and then polished by Newton
collocation on the full grid.  The self-similar problems go straight to a
damped Newton iteration, with the density eliminated through an exact
integral representation instead of a finite-difference discretization.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from .radial_core import (
    Profile,
    RadialGrid,
    cumulative_weighted,
    cumulative_weighted_matrix,
    default_grid,
    make_grid,
    robin_row,
    solve_sparse,
    theta_inverse_matrix,
)

__all__ = [
    "GroundStateBundle",
    "ShootingError",
    "NewtonDivergence",
    "ContinuationError",
    "PositivityError",
    "solve_ground_state_2d",
    "solve_vortex_ground_state",
    "solve_selfsimilar_2d",
    "selfsimilar_2d_family",
    "solve_selfsimilar_3d",
    "density_map_2d",
    "selfsimilar_density_operator",
]

log = logging.getLogger(__name__)

A0_BRACKET_MAX = 0.5


class ShootingError(RuntimeError):
    def __init__(self, msg, bracket):
        super().__init__(f"{msg}; bracket = [{bracket[0]!r}, {bracket[1]!r}]")
        self.bracket = tuple(bracket)


class NewtonDivergence(RuntimeError):
    def __init__(self, msg, last_residual):
        super().__init__(f"{msg} (last residual {last_residual:.3e})")
        self.last_residual = last_residual


class ContinuationError(RuntimeError):
    """Continuation in ``a0`` could not reach the requested value."""


class PositivityError(RuntimeError):
    """A converged amplitude profile changed sign (wrong branch)."""


@dataclass(eq=False)
class GroundStateBundle:
    kind: str
    profiles: dict
    residual_inf: float
    solver_meta: dict = field(default_factory=dict)

    @property
    def grid(self) -> RadialGrid:
        return next(iter(self.profiles.values())).grid

    def __getitem__(self, name):
        return self.profiles[name]

    def summary(self):
        out = {"kind": self.kind, "grid": self.grid.describe(), "residual_inf": self.residual_inf}
        out.update({k: v for k, v in self.solver_meta.items() if np.isscalar(v)})
        return out


# ---------------------------------------------------------------------------
# ground states: shooting bracket + Newton polish


def _rhs(d, vortex):
    def f(r, y):
        u, up = y
        acc = -(d - 1) / r * up + u - u**3
        if vortex:
            acc += (d - 1) / r**2 * u
        return [up, acc]

    return f


def _shoot(param, d, vortex, r_end):
    """Integrate outward from a small radius using the regular series start.

    For the ground state ``param`` is ``R(0)``; for the vortex it is the slope
    ``R1'(0)``.  Returns (overshoot, solution).
    """
    if vortex:
        r0 = 1e-4
        y0 = [param * r0, param]
    else:
        r0 = 1e-6
        y0 = [param, (param - param**3) / d * r0]

    def crosses_zero(r, y):
        return y[0]

    crosses_zero.terminal = True

    def turns_up(r, y):
        return y[1]

    turns_up.terminal = True
    turns_up.direction = 1
    sol = solve_ivp(
        _rhs(d, vortex), (r0, r_end), y0, method="DOP853",
        events=[crosses_zero, turns_up], rtol=1e-12, atol=1e-14, dense_output=True,
    )
    return len(sol.t_events[0]) > 0, sol


def _bisect(lo, hi, d, vortex, r_end, rel=1e-11):
    over_lo, _ = _shoot(lo, d, vortex, r_end)
    over_hi, _ = _shoot(hi, d, vortex, r_end)
    if over_lo or not over_hi:
        raise ShootingError("shooting bracket does not straddle the ground state", (lo, hi))
    while hi - lo > rel * hi:
        mid = 0.5 * (lo + hi)
        if _shoot(mid, d, vortex, r_end)[0]:
            hi = mid
        else:
            lo = mid
    return lo, _shoot(lo, d, vortex, r_end)[1]


def _sample_shot(grid, sol):
    xi = grid.nodes
    out = np.zeros(grid.n)
    m = (xi >= sol.t[0]) & (xi <= sol.t[-1])
    out[m] = sol.sol(xi[m])[0]
    return np.clip(out, 0.0, None)


def _polish(grid, u, lap, parity, tol=1e-13, max_iter=30):
    """Newton collocation for ``lap u - u + u**3 = 0`` with Robin decay."""
    n = grid.n
    robin = robin_row(grid, -1, 1.0, parity).coeffs
    eye = sp.identity(n, format="csr")
    scale = np.max(np.abs(u))
    last = np.inf
    for it in range(1, max_iter + 1):
        F = lap @ u - u + u**3
        F[-1] = robin @ u
        J = (lap - eye + sp.diags(3 * u**2)).tolil()
        J[-1, :] = robin
        if parity < 0:
            F[0] = u[0]
            J[0, :] = 0.0
            J[0, 0] = 1.0
        du = solve_sparse(J.tocsr(), -F)
        u = u + du
        step = np.max(np.abs(du))
        if step < tol * scale:
            return u, it
        if it > 5 and step > last:
            # roundoff floor: steps stop shrinking once F is at machine level
            if np.max(np.abs(F[:-1])) < 1e-9 * scale:
                return u, it
            raise NewtonDivergence("ground-state polish stopped converging", float(np.max(np.abs(F))))
        last = step
    raise NewtonDivergence("ground-state polish hit the iteration cap", float(np.max(np.abs(F))))


def _check_positive(name, values, skip_origin=False):
    v = values[1:-1] if skip_origin else values[:-1]
    if np.any(v <= 0):
        raise PositivityError(f"{name} changes sign (min {v.min():.3e}); not the ground-state branch")


def _residual(grid, lap, u, interior):
    r = lap @ u - u + u**3
    return float(np.max(np.abs(r[interior])) / np.max(np.abs(u)))


def solve_ground_state_2d(grid=None, bracket=(2.0, 2.5)):
    """Positive radial solution of ``Delta R - R + R**3 = 0`` in 2D."""
    grid = grid or default_grid(2)
    if grid.d != 2:
        raise ValueError("the scalar ground state is a 2D object")
    r_end = min(grid.r_max, 30.0)
    amp, sol = _bisect(bracket[0], bracket[1], 2, False, r_end)
    lap = grid.laplacian_matrix
    R, its = _polish(grid, _sample_shot(grid, sol), lap, +1)
    _check_positive("R", R)
    res = _residual(grid, lap, R, slice(0, -1))
    meta = {"shooting_R0": amp, "R0": float(R[0]), "newton_iterations": its,
            "mass": grid.integrate(R**2)}
    return GroundStateBundle("r2d", {"R": Profile(grid, R, "even")}, res, meta)


def solve_vortex_ground_state(grid=None, bracket=(0.5, 5.0)):
    """Positive solution of ``Delta1 R1 - R1 + R1**3 = 0`` vanishing at the origin."""
    grid = grid or default_grid(2)
    if grid.d != 2:
        raise ValueError("the vortex ground state is solved in 2D")
    r_end = min(grid.r_max, 30.0)
    slope, sol = _bisect(bracket[0], bracket[1], 2, True, r_end)
    lap = grid.vector_laplacian_matrix
    R1, its = _polish(grid, _sample_shot(grid, sol), lap, -1)
    R1[0] = 0.0
    _check_positive("R1", R1, skip_origin=True)
    res = _residual(grid, lap, R1, slice(1, -1))
    meta = {"shooting_slope": slope, "newton_iterations": its, "mass": grid.integrate(R1**2)}
    return GroundStateBundle("vortex", {"R1": Profile(grid, R1, "odd")}, res, meta)


# ---------------------------------------------------------------------------
# 2D self-similar pair (P, M)
#
# Multiplying the M equation by eta and integrating once gives the exact first
# integral (a0^2 eta^2 - 1) M' + 3 a0^2 eta M = (P^2)'.  With w = 1 - a0^2 eta^2
# its solution that stays regular at the sonic point eta_s = 1/a0 is
#     M = w^{-3/2} int_eta^{eta_s} w^{1/2} (P^2)' ds        (eta < eta_s)
# and the mirror formula beyond it.  Near eta_s, w^{1/2} = sqrt(a0 t (1 + a0 s))
# with t = |s - eta_s|, so product integration against t^{1/2} on a grid whose
# origin is the sonic point handles the square-root weight exactly.


def _snap_to_sonic(grid, a0):
    """Rescale the spacing (same n) so that ``1/a0`` falls on a node."""
    eta_s = 1.0 / a0
    if eta_s >= grid.r_max - 16 * grid.h:
        return grid
    k = max(16, int(round(eta_s / grid.h)))
    h = eta_s / k
    return make_grid(grid.d, h * (grid.n - 1), grid.n)


def density_map_2d(grid, a0):
    """Dense matrix ``T`` with ``M = T @ (P**2)`` for the regular density."""
    xi = grid.nodes
    n = grid.n
    D1 = grid.D1(1).toarray()
    if a0 == 0:
        return -np.eye(n)
    eta_s = 1.0 / a0
    c = np.sqrt(a0 * (1.0 + a0 * xi))
    js = int(round(eta_s / grid.h))
    if abs(js * grid.h - eta_s) > 1e-9 * eta_s or js > n - 16:
        # no sonic point inside the domain: plain integral to r_max
        w = 1.0 - (a0 * xi) ** 2
        C0 = cumulative_weighted_matrix(grid, 0.0, 0)
        return (w ** -1.5)[:, None] * ((C0[-1][None, :] - C0) * np.sqrt(w)[None, :]) @ D1
    T = np.zeros((n, n))
    inner = make_grid(2, eta_s, js + 1)
    C = cumulative_weighted_matrix(inner, 0.5, 0)[::-1, ::-1]
    wi = 1.0 - (a0 * xi[:js]) ** 2
    T[:js] = (wi ** -1.5)[:, None] * (C[:js] * c[None, : js + 1]) @ D1[: js + 1]
    outer = make_grid(2, grid.r_max - eta_s, n - js)
    C2 = cumulative_weighted_matrix(outer, 0.5, 0)
    wo = (a0 * xi[js + 1 :]) ** 2 - 1.0
    T[js + 1 :] = (wo ** -1.5)[:, None] * (C2[1:] * c[None, js:]) @ D1[js:]
    T[js] = D1[js] / (3.0 * a0)
    return T


def _interp_onto(old_grid, values, new_grid):
    if new_grid is old_grid:
        return values.copy()
    spline = CubicSpline(old_grid.nodes, values)
    x = new_grid.nodes
    out = np.where(x <= old_grid.r_max, spline(np.minimum(x, old_grid.r_max)), 0.0)
    return out


def _newton_pm(grid, a0, P, tol=1e-11, max_iter=40):
    n = grid.n
    lap = grid.laplacian_matrix.toarray()
    T = density_map_2d(grid, a0)
    robin = robin_row(grid, -1, 1.0, +1).coeffs
    scale = np.max(P)
    last = np.inf
    for it in range(1, max_iter + 1):
        M = T @ (P**2)
        F = lap @ P - P - M * P
        F[-1] = robin @ P
        res = np.max(np.abs(F[:-1])) / scale
        if res < tol:
            return P, M, it, res
        J = lap - np.eye(n) - np.diag(M) - P[:, None] * T * (2 * P)[None, :]
        J[-1] = robin
        dP = np.linalg.solve(J, -F)
        damp = 1.0 if res < 1e-2 else 0.5
        P = P + damp * dP
        if it > 8 and res > 0.9 * last:
            raise NewtonDivergence(f"(P, M) Newton stalled at a0={a0:g}", res)
        last = res
    raise NewtonDivergence(f"(P, M) Newton hit the iteration cap at a0={a0:g}", res)


def _pm_bundle(grid, a0, P, M, meta):
    xi = grid.nodes
    D1 = grid.D1(1)
    lap = grid.laplacian_matrix
    rP = lap @ P - P - M * P
    rM = M - density_map_2d(grid, a0) @ (P**2)
    # finite-difference cross-checks of the density equation; these measure the
    # O(h^4) gap between the integral representation and FD derivatives
    first = (a0**2 * xi**2 - 1.0) * (D1 @ M) + 3 * a0**2 * xi * M - D1 @ (P**2)
    second = (a0**2 * (xi**2 * (grid.D2(1) @ M) + 6 * xi * (D1 @ M) + 6 * M)
              - lap @ M - lap @ (P**2))
    mscale = max(np.max(np.abs(M)), 1e-300)
    res_P = float(np.max(np.abs(rP[:-1])) / np.max(P))
    res_M = float(np.max(np.abs(rM)) / mscale)
    meta = dict(meta, a0=a0, residual_P=res_P, residual_M=res_M,
                fd_check_first_integral=float(np.max(np.abs(first[:-3])) / mscale),
                fd_check_second_order=float(np.max(np.abs(second[:-3])) / mscale),
                sonic_point=(1.0 / a0 if a0 > 0 else np.inf), mass=grid.integrate(P**2))
    profiles = {"P": Profile(grid, P, "even"), "M": Profile(grid, M, "even", "free")}
    return GroundStateBundle("selfsim2d", profiles, max(res_P, res_M), meta)


def selfsimilar_2d_family(a0_values, grid=None, base=None, max_step=0.05, a0_max=A0_BRACKET_MAX):
    """Continue ``(P, M)`` from ``(R, -R**2)`` through increasing ``a0`` values.

    Returns one bundle per requested ``a0`` (in the order given).  Intermediate
    continuation steps are no larger than ``max_step`` and are halved on a
    Newton failure.
    """
    targets = sorted(set(float(a) for a in a0_values))
    if targets and (targets[0] < 0 or targets[-1] > a0_max):
        raise ValueError(f"a0 must lie in [0, {a0_max}], got {a0_values!r}")
    grid = grid or default_grid(2)
    base = base or solve_ground_state_2d(grid)
    g0 = base.grid
    R = base["R"].values
    results = {}
    cur_a, cur_grid, cur_P = 0.0, g0, R.copy()
    steps = 0
    for target in targets:
        if target == 0.0:
            results[0.0] = _pm_bundle(g0, 0.0, R.copy(), -R**2, {"continuation_steps": 0})
            continue
        step = min(max_step, target - cur_a)
        while cur_a < target - 1e-15:
            a = min(target, cur_a + step)
            g = _snap_to_sonic(g0, a)
            guess = _interp_onto(cur_grid, cur_P, g)
            try:
                P, M, its, res = _newton_pm(g, a, guess)
            except (NewtonDivergence, np.linalg.LinAlgError) as exc:
                step /= 2
                log.info("continuation step to a0=%g failed (%s); halving", a, exc)
                if step < 1e-4:
                    raise ContinuationError(
                        f"continuation stalled at a0={cur_a:g} on the way to {target:g}") from exc
                continue
            if np.any(P[:-1] <= 0):
                raise PositivityError(f"P changes sign at a0={a:g}")
            cur_a, cur_grid, cur_P = a, g, P
            steps += 1
            step = min(max_step, 2 * step)
        results[target] = _pm_bundle(cur_grid, cur_a, cur_P, M,
                                     {"continuation_steps": steps, "newton_iterations": its,
                                      "largest_a0_reached": cur_a})
    return [results[float(a)] for a in a0_values]


def solve_selfsimilar_2d(a0, grid=None, base=None, max_step=0.05, a0_max=A0_BRACKET_MAX):
    """Self-similar profiles ``(P, M)`` at one ``a0`` (continuation from 0)."""
    if not 0 <= a0 <= a0_max:
        raise ValueError(f"a0 must lie in [0, {a0_max}], got {a0!r}")
    return selfsimilar_2d_family([a0], grid, base, max_step, a0_max)[0]


# ---------------------------------------------------------------------------
# 3D self-similar triple


def selfsimilar_density_operator(grid):
    """Dense ``L**-1`` for ``L = xi^2 d2 + 6.5 xi d + 7 = (theta+2)(theta+3.5)``.

    Both homogeneous solutions (``xi**-2`` and ``xi**-3.5``) are singular at the
    origin, so the regular inverse is the product of the two first-order
    integral inverses.
    """
    cache = grid.__dict__.setdefault("_op_cache", {})
    if "_L3_inv" not in cache:
        cache["_L3_inv"] = theta_inverse_matrix(grid, 2.0) @ theta_inverse_matrix(grid, 3.5)
    return cache["_L3_inv"]


def _l3_apply(grid, N):
    xi = grid.nodes
    return xi**2 * (grid.D2(1) @ N) + 6.5 * xi * (grid.D1(1) @ N) + 7 * N


def velocity_from_amplitude(grid, S):
    """``V`` from ``(5/2) V + xi V' = -(S**2)'`` (the solution regular at 0)."""
    xi = grid.nodes
    f = -(grid.D1(1) @ (S**2))
    V = np.zeros(grid.n)
    V[1:] = cumulative_weighted(grid, f, 1.5, -1)[1:] / xi[1:] ** 2.5
    return V


def solve_selfsimilar_3d(grid=None, tol=1e-12, max_iter=40):
    """Profiles ``(S0, N0, V0)`` of the 3D self-similar collapse.

    ``N0 = L**-1 Delta(S0**2)`` is substituted into the amplitude equation so
    the Newton iteration runs on ``S0`` alone, with the full dense Jacobian.
    """
    grid = grid or default_grid(3)
    if grid.d != 3:
        raise ValueError("the self-similar triple is a 3D object")
    n = grid.n
    xi = grid.nodes
    Linv = selfsimilar_density_operator(grid)
    lap = grid.laplacian_matrix
    K = Linv @ lap.toarray()
    robin = robin_row(grid, -1, 1.0, +1).coeffs
    base = lap.toarray() - np.eye(n)
    S = 2.0 / np.cosh(xi)
    res = np.inf
    for it in range(1, max_iter + 1):
        N = K @ (S**2)
        F = lap @ S - S - N * S
        F[-1] = robin @ S
        res = np.max(np.abs(F))
        J = base - np.diag(N) - S[:, None] * K * (2 * S)[None, :]
        J[-1] = robin
        dS = np.linalg.solve(J, -F)
        S = S + (1.0 if res < 1.0 else 0.5) * dS
        if np.max(np.abs(dS)) < tol * np.max(np.abs(S)):
            break
    else:
        raise NewtonDivergence("3D self-similar Newton did not converge", float(res))
    _check_positive("S0", S)
    N = K @ (S**2)
    V = velocity_from_amplitude(grid, S)
    rS = lap @ S - S - N * S
    res_S = float(np.max(np.abs(rS[:-1])) / np.max(S))
    # the density equation in differential form, checked with the FD operators
    rN = _l3_apply(grid, N) - lap @ (S**2)
    res_N = float(np.max(np.abs(rN[:-2])) / np.max(np.abs(lap @ (S**2))))
    # second velocity equation, written as V' + 2V/xi = -(2N + xi N')
    Dodd = grid.D1(-1)
    lhs = Dodd @ V
    lhs[1:] += 2 * V[1:] / xi[1:]
    lhs[0] *= 3.0
    w = 2 * N + xi * (grid.D1(1) @ N)
    res_v = float(np.max(np.abs(lhs + w)) / np.max(np.abs(w)))
    meta = {"newton_iterations": it, "S0_0": float(S[0]), "N0_0": float(N[0]),
            "residual_S": res_S, "residual_N": res_N, "velocity_consistency": res_v,
            "alpha0": grid.integrate(S**2)}
    profiles = {
        "S0": Profile(grid, S, "even"),
        "N0": Profile(grid, N, "even", "free"),
        "V0": Profile(grid, V, "odd", "free"),
    }
    return GroundStateBundle("selfsim3d", profiles, max(res_S, res_N), meta)
