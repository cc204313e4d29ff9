"""Direct radial integration of the scalar quantum Zakharov model.

    i E_t + Delta E = n E + Gamma Delta^2 E
    n_tt - Delta n  = Delta |E|^2 - Gamma Delta^2 n

The spatial operator is the flux-form radial Laplacian on cell volumes
``w_i``: ``W L`` is symmetric, so ``A = -L + Gamma L^2`` is self-adjoint in
the weighted inner product.  One step is a Strang splitting

    linear half step  ->  nonlinear kick  ->  linear half step

where the linear part is Crank-Nicolson for ``E`` (exactly unitary, so the
plasmon number is conserved to round-off) and the implicit midpoint rule for
``(n, n_t)`` (exactly conserving the linear wave energy).  The kick is solved
exactly: ``E <- E exp(-i n dt)`` and ``n_t <- n_t + dt L|E|^2``.  The outer
node carries a homogeneous Dirichlet condition and a sponge damps the outer
part of the domain.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq
from scipy.signal import find_peaks

from .functionals import FieldState, gradient_bound
from .radial_core import make_grid

__all__ = [
    "SimConfig",
    "SimState",
    "SimDiagnostics",
    "RadialZakharov",
    "SimulationInstability",
    "UnderResolvedWarning",
    "step",
    "run",
]

OVERFLOW = 1e6


class SimulationInstability(RuntimeError):
    pass


class UnderResolvedWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class SimConfig:
    d: int = 2
    Gamma: float = 5e-3
    c: float = 2.85
    r_max: float = 16.0
    n: int = 1601
    dt: float = 5e-4
    t_end: float = 5.0
    output_every: float = 0.01
    sponge_frac: float = 0.1
    sponge_strength: float = 4.0
    snapshot_every: float | None = None
    resolution_cells: float = 8.0
    stop_on_unresolved: bool = False

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError(f"d must be 2 or 3, got {self.d}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_end > 0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if self.Gamma < 0:
            raise ValueError(f"Gamma must be non-negative, got {self.Gamma}")
        if self.n < 16 or not self.r_max > 0:
            raise ValueError("need n >= 16 and r_max > 0")


@dataclass(eq=False)
class SimState:
    t: float
    E: np.ndarray
    n: np.ndarray
    nt: np.ndarray

    def copy(self):
        return SimState(self.t, self.E.copy(), self.n.copy(), self.nt.copy())


class RadialZakharov:
    """Discrete operators and factorizations for one grid, ``Gamma`` and ``dt``."""

    def __init__(self, d, r_max, n, Gamma, dt, sponge_frac=0.1, sponge_strength=4.0):
        self.d, self.Gamma, self.dt = d, float(Gamma), float(dt)
        self.r = np.linspace(0.0, r_max, n)
        self.h = h = self.r[1]
        m = n - 1  # the last node is held at zero
        r = self.r[:m]
        lo = np.maximum(r - h / 2, 0.0)
        self.w = ((r + h / 2) ** d - lo**d) / d
        a = (r + h / 2) ** (d - 1)  # a[i] sits between nodes i and i+1
        K = sp.diags([-a[:-1], np.r_[a[0], a[1:] + a[:-1]], -a[:-1]], [-1, 0, 1], shape=(m, m)) / h
        self.K = K.tocsr()  # W L = -K, symmetric positive definite
        self.L = (-sp.diags(1.0 / self.w) @ self.K).tocsr()
        self.A = (-self.L + self.Gamma * (self.L @ self.L)).tocsc()
        eye = sp.identity(m, format="csc")
        self._cn_rhs = (eye - 0.25j * dt * self.A).tocsr()  # half step, see linear()
        self._cn_half = spla.splu((eye + 0.25j * dt * self.A).tocsc())
        q = dt / 2
        self._wave = spla.splu((eye + (q * q / 4) * self.A).tocsc())
        self._wave_rhs = (eye - (q * q / 4) * self.A).tocsr()
        self._Lsolve = spla.splu((-self.K).tocsc())
        s0 = (1.0 - sponge_frac) * r_max
        x = np.clip((r - s0) / max(r_max - s0, 1e-300), 0.0, 1.0)
        self.sigma = sponge_strength * np.sin(0.5 * np.pi * x) ** 2

    @property
    def m(self):
        return self.r.size - 1

    # -- substeps --------------------------------------------------------

    def linear(self, s, tau):
        """Advance the linear stiff part by ``tau`` (must be ``dt/2``)."""
        E = self._cn_half.solve(self._cn_rhs @ s.E)
        # implicit midpoint for n' = nt, nt' = -A n with step tau
        rhs = self._wave_rhs @ s.n + tau * s.nt
        n1 = self._wave.solve(rhs)
        nt1 = s.nt - 0.5 * tau * (self.A @ (s.n + n1))
        return SimState(s.t + tau, E, n1, nt1)

    def kick(self, s, tau):
        E = s.E * np.exp(-1j * s.n * tau)
        nt = s.nt + tau * (self.L @ (np.abs(s.E) ** 2))
        return SimState(s.t, E, s.n, nt)

    def sponge(self, s, tau):
        f = np.exp(-self.sigma * tau)
        return SimState(s.t, s.E * f, s.n * f, s.nt * f)

    def step(self, s, dt=None):
        if dt is None:
            dt = self.dt
        if dt == 0:
            return s.copy()
        if not math.isclose(dt, self.dt, rel_tol=1e-12):
            raise ValueError(f"operator was factorized for dt = {self.dt}, got {dt}")
        s = self.linear(s, dt / 2)
        s = self.kick(s, dt)
        s = self.linear(s, dt / 2)
        if not (np.all(np.isfinite(s.E)) and np.max(np.abs(s.E)) < OVERFLOW
                and np.all(np.isfinite(s.n)) and np.max(np.abs(s.n)) < OVERFLOW):
            raise SimulationInstability(f"overflow guard tripped at t = {s.t:.6g}")
        return s

    # -- invariants ------------------------------------------------------

    def inner(self, f, g):
        return float(np.real(np.sum(self.w * np.conj(f) * g)))

    def plasmon_number(self, s):
        return float(np.sum(self.w * np.abs(s.E) ** 2))

    def gradient_norm(self, s):
        return self.inner(s.E, self.K @ s.E / self.w)

    def velocity_potential(self, nt):
        """``phi`` with ``L phi = n_t``; the velocity is ``v = phi'``."""
        return self._Lsolve.solve(self.w * nt)

    def hamiltonian_terms(self, s):
        LE = self.L @ s.E
        phi = self.velocity_potential(s.nt)
        return {
            "grad_E": self.gradient_norm(s),
            "coupling": float(np.sum(self.w * s.n * np.abs(s.E) ** 2)),
            "density": 0.5 * float(np.sum(self.w * s.n**2)),
            "velocity": 0.5 * float(phi @ (self.K @ phi)),
            "lap_E": self.Gamma * float(np.sum(self.w * np.abs(LE) ** 2)),
            "grad_n": 0.5 * self.Gamma * float(s.n @ (self.K @ s.n)),
        }

    def hamiltonian(self, s):
        return float(math.fsum(self.hamiltonian_terms(s).values()))

    def efold_width(self, s):
        a = np.abs(s.E)
        k = int(np.argmax(a))
        below = np.nonzero(a[k:] < a[k] / math.e)[0]
        if below.size == 0:
            return self.r[self.m - 1] - self.r[k]
        return self.r[k + below[0]] - self.r[k]

    def initial_state(self, c):
        E = c * np.exp(-self.r[: self.m] ** 2) + 0j
        return SimState(0.0, E, -np.abs(E) ** 2, np.zeros(self.m))

    def to_field_state(self, s):
        """Sample onto a :class:`RadialGrid` as a :class:`FieldState`."""
        g = make_grid(self.d, self.r[-1], self.r.size)
        phi = self.velocity_potential(s.nt)
        v = np.zeros(g.n)
        v[:-1] = np.gradient(np.r_[phi, 0.0], self.h)[:-1]
        v[0] = 0.0
        return FieldState.from_arrays(g, np.r_[s.E, 0.0], np.r_[s.n, 0.0], v, self.Gamma)


@dataclass(eq=False)
class SimDiagnostics:
    t: np.ndarray
    maxE: np.ndarray
    lambda_est: np.ndarray
    N: np.ndarray
    H: np.ndarray
    sponge_loss: np.ndarray
    sponge_loss_H: np.ndarray
    events: list = field(default_factory=list)
    config: SimConfig | None = None
    extras: dict = field(default_factory=dict)
    final_state: SimState | None = None

    def drift(self):
        """Relative drift of ``N`` and ``H`` with sponge absorption added back."""
        N = self.N + self.sponge_loss
        H = self.H + self.sponge_loss_H
        return {
            "N": float(np.max(np.abs(N - N[0])) / abs(N[0])),
            "H": float(np.max(np.abs(H - H[0])) / max(abs(H[0]), 1e-300)),
        }

    def lambda_minima(self, prominence=0.1):
        idx, _ = find_peaks(-self.lambda_est, prominence=prominence)
        return self.t[idx], self.lambda_est[idx]

    def gradient_bound_check(self, C_max=1e6):
        """Calibrate ``C`` on the first half of the run, then test the second half.

        ``C`` is the smallest constant whose bound covers every early sample of
        ``|grad E|^2``; the result reports whether any later sample exceeds the
        bound built from that constant.  A self-consistency check only.
        """
        cfg = self.config
        if cfg is None or cfg.Gamma <= 0:
            raise ValueError("the gradient bound needs Gamma > 0")
        g = self.extras["grad_norm"]
        half = len(g) // 2
        N, H = float(self.N[0]), float(self.H[0])
        target = float(np.max(g[: half + 1]))
        f = lambda lc: gradient_bound(N, H, cfg.Gamma, cfg.d, math.exp(lc)) - target  # noqa: E731
        lo, hi = math.log(1e-12), math.log(C_max)
        if f(lo) >= 0:
            C = math.exp(lo)
        else:
            C = math.exp(brentq(f, lo, hi, xtol=1e-12))
        bound = gradient_bound(N, H, cfg.Gamma, cfg.d, C)
        late = float(np.max(g[half:]))
        return {"C": C, "bound": bound, "late_max": late, "ok": late <= bound * (1 + 1e-9)}

    def write_csv(self, path):
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "maxE", "lambda_est", "N", "H", "sponge_loss"])
            for row in zip(self.t, self.maxE, self.lambda_est, self.N, self.H, self.sponge_loss):
                w.writerow([f"{x:.17g}" for x in row])
        return path


def step(state, dt, model):
    """One split step of ``model`` (a :class:`RadialZakharov`); ``dt = 0`` is the identity."""
    return model.step(state, dt)


def run(cfg, snapshot_cb=None):
    """Integrate from the Gaussian initial data of ``cfg`` and collect diagnostics."""
    model = RadialZakharov(cfg.d, cfg.r_max, cfg.n, cfg.Gamma, cfg.dt, cfg.sponge_frac, cfg.sponge_strength)
    s = model.initial_state(cfg.c)
    n_steps = int(round(cfg.t_end / cfg.dt))
    every = max(1, int(round(cfg.output_every / cfg.dt)))
    snap = None if cfg.snapshot_every is None else max(1, int(round(cfg.snapshot_every / cfg.dt)))
    E0max = float(np.max(np.abs(s.E)))
    power = 1.0 if cfg.d == 2 else 2.0 / 3.0
    rows = []
    events = []
    lossN = lossH = 0.0
    flagged = False

    def record(st):
        mx = float(np.max(np.abs(st.E)))
        rows.append((st.t, mx, (E0max / mx) ** power, model.plasmon_number(st), model.hamiltonian(st),
                     lossN, lossH, model.gradient_norm(st)))

    record(s)
    max_n0 = float(np.max(np.abs(s.n)))
    extras = {"dt_max_linear": math.inf, "phase_per_step": cfg.dt * max_n0, "h": model.h}
    for k in range(1, n_steps + 1):
        try:
            s = model.step(s)
        except SimulationInstability as exc:
            if flagged:
                events.append(("blowup_floor", s.t))
                break
            raise exc
        if cfg.sponge_strength > 0:
            N_before, H_before = model.plasmon_number(s), model.hamiltonian(s)
            s = model.sponge(s, cfg.dt)
            lossN += N_before - model.plasmon_number(s)
            lossH += H_before - model.hamiltonian(s)
        if k % every == 0:
            width = model.efold_width(s)
            if not flagged and width < cfg.resolution_cells * model.h:
                flagged = True
                events.append(("under_resolved", s.t))
                warnings.warn(f"focusing under-resolved at t = {s.t:.4g}", UnderResolvedWarning, stacklevel=2)
            record(s)
            if flagged and cfg.stop_on_unresolved:
                break
        if snap is not None and snapshot_cb is not None and k % snap == 0:
            snapshot_cb(s)
    arr = np.array(rows)
    diag = SimDiagnostics(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4], arr[:, 5], arr[:, 6],
                          events, cfg, extras, s)
    diag.extras["grad_norm"] = arr[:, 7]
    return diag
