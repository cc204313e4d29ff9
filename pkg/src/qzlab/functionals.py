"""Conserved quantities and the a-priori gradient bound.

Integrals use the radial measure ``xi**(d-1) dxi`` without the angular factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .radial_core import Profile

__all__ = ["FieldState", "plasmon_number", "hamiltonian_scalar", "hamiltonian_terms", "gradient_bound",
           "gradient_norm"]


@dataclass(eq=False)
class FieldState:
    """Radial envelope ``E``, density ``n`` and velocity ``v`` at one instant."""

    E: Profile
    n: Profile
    v: Profile
    Gamma: float = 0.0

    def __post_init__(self):
        g = self.E.grid
        if self.n.grid is not g or self.v.grid is not g:
            raise ValueError("E, n and v must share one grid")
        if np.iscomplexobj(self.n.values) or np.iscomplexobj(self.v.values):
            raise ValueError("n and v must be real")
        if self.Gamma < 0:
            raise ValueError(f"Gamma must be non-negative, got {self.Gamma}")

    @property
    def grid(self):
        return self.E.grid

    @property
    def d(self):
        return self.E.grid.d

    @classmethod
    def from_arrays(cls, grid, E, n, v=None, Gamma=0.0):
        v = np.zeros(grid.n) if v is None else v
        return cls(Profile(grid, np.asarray(E), "even"), Profile(grid, np.asarray(n, float), "even", "free"),
                   Profile(grid, np.asarray(v, float), "odd", "free"), Gamma)


def plasmon_number(s):
    """``int |E|^2 xi^(d-1) dxi``."""
    return float(s.grid.integrate(np.abs(s.E.values) ** 2))


def _grad(g, f):
    return g.D1(+1) @ f


def gradient_norm(s):
    """``int |dE/dxi|^2 xi^(d-1) dxi``."""
    g = s.grid
    E = s.E.values
    return float(g.integrate(np.abs(_grad(g, E.real)) ** 2 + np.abs(_grad(g, np.imag(E))) ** 2))


def hamiltonian_terms(s):
    """The six integrals making up the Hamiltonian, keyed by name."""
    g = s.grid
    E = s.E.values
    n = s.n.values
    lap = g.laplacian_matrix
    Er, Ei = np.real(E), np.imag(E)
    absE2 = Er**2 + Ei**2
    return {
        "grad_E": gradient_norm(s),
        "coupling": float(g.integrate(n * absE2)),
        "density": 0.5 * float(g.integrate(n**2)),
        "velocity": 0.5 * float(g.integrate(s.v.values ** 2)),
        "lap_E": s.Gamma * float(g.integrate((lap @ Er) ** 2 + (lap @ Ei) ** 2)),
        "grad_n": 0.5 * s.Gamma * float(g.integrate(_grad(g, n) ** 2)),
    }


def hamiltonian_scalar(s):
    """``int (|E'|^2 + n|E|^2 + n^2/2 + v^2/2 + Gamma |Delta E|^2 + Gamma/2 |n'|^2)``."""
    return float(math.fsum(hamiltonian_terms(s).values()))


def gradient_bound(N, H, Gamma, d, C=1.0):
    """Largest fixed point of ``x = |H| + (C/Gamma) N^(2-d/4) x^(d/4)``.

    For ``d < 4`` the map grows sublinearly, so ``x - map(x)`` is convex,
    non-positive at the origin and positive for large ``x``: exactly one
    positive root exists and is bracketed explicitly.
    """
    if not Gamma > 0:
        raise ValueError(f"Gamma must be positive, got {Gamma}")
    if not C > 0:
        raise ValueError(f"C must be positive, got {C}")
    if d not in (2, 3):
        raise ValueError(f"d must be 2 or 3, got {d}")
    if N < 0:
        raise ValueError(f"N must be non-negative, got {N}")
    h = abs(H)
    k = (C / Gamma) * N ** (2 - d / 4)
    q = d / 4
    if k == 0:
        return float(h)
    f = lambda x: x - h - k * x**q  # noqa: E731
    lo = (k * q) ** (1 / (1 - q))  # minimum of f
    hi = max(2 * h, (2 * k) ** (1 / (1 - q)), lo) * 2 + 1.0
    while f(hi) <= 0:
        hi *= 2
    if f(lo) >= 0:  # only when h == 0 and the minimum sits on the root
        return float(lo)
    return float(brentq(f, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500))
