"""Effective dynamics of the focusing scale lambda(t).

2D: with ``y = lambda**2`` and ``Q(y) = H y^2 + Nt y - Gamma m3``,

    y_t^2 = 4 Q(y) / (m1 + m2 y),      y_tt = d/dy [2 Q(y) / (m1 + m2 y)].

The second-order form is integrated (no square-root branches) and the first
integral is kept as a diagnostic.

3D: ``lambda_t^2 = F(lambda)`` with a quartic numerator.  There is no
second-order form to lean on, so the first-order equation is integrated
segment by segment.  Each segment ends a small distance from a root of ``F``;
the remaining passage through the turning point uses the local expansion
``F ~ F'(root) (lambda - root)``, and the sign of ``lambda_t`` flips there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq

__all__ = [
    "ReducedParams2D",
    "ReducedParams3D",
    "LambdaTrajectory",
    "OrbitPeriod",
    "NoBoundedOrbit",
    "threshold_gamma",
    "turning_points",
    "integrate_lambda_2d",
    "integrate_y_2d",
    "integrate_lambda_3d",
    "turning_radii_3d",
    "oscillation_period",
    "first_integral_residual_2d",
    "radicand_3d",
    "fit_blowup_exponent",
]

LAMBDA_FLOOR = 1e-6


class NoBoundedOrbit(ValueError):
    """The parameters admit no oscillation between positive turning points."""


@dataclass(frozen=True)
class ReducedParams2D:
    H: float
    N_tilde: float
    Gamma: float
    m1: float
    m2: float
    m3: float

    def __post_init__(self):
        if min(self.m1, self.m2, self.m3) <= 0:
            raise ValueError(f"m1, m2, m3 must be positive, got {(self.m1, self.m2, self.m3)}")
        if self.Gamma < 0:
            raise ValueError(f"Gamma must be non-negative, got {self.Gamma}")

    def with_gamma(self, gamma):
        return ReducedParams2D(self.H, self.N_tilde, gamma, self.m1, self.m2, self.m3)

    def Q(self, y):
        return self.H * y**2 + self.N_tilde * y - self.Gamma * self.m3


@dataclass(frozen=True)
class ReducedParams3D:
    H: float
    N: float
    Gamma: float
    a0: float
    m1: float
    m2: float
    m3: float
    m4: float
    m5: float
    m6: float

    def __post_init__(self):
        if not self.a0 > 0:
            raise ValueError(f"a0 must be positive, got {self.a0}")
        if self.Gamma < 0:
            raise ValueError(f"Gamma must be non-negative, got {self.Gamma}")

    @classmethod
    def from_coefficients(cls, values, N, H, Gamma, a0=None):
        """Build from a coefficient map; ``a0`` defaults to the closure ``sqrt(-m6 N / m4)``."""
        m = [float(values[f"m{i}"]) for i in range(1, 7)]
        if a0 is None:
            a0 = math.sqrt(-m[5] * N / m[3])
        return cls(H, N, Gamma, a0, *m)

    def with_gamma(self, gamma):
        d = dict(self.__dict__)
        d["Gamma"] = gamma
        return ReducedParams3D(**d)


@dataclass(eq=False)
class LambdaTrajectory:
    t: np.ndarray
    lam: np.ndarray
    lam_t: np.ndarray
    lam_min: float
    lam_max: float
    period: float | None = None
    event: float | None = None
    turning: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def samples(self):
        return np.column_stack([self.t, self.lam, self.lam_t])


@dataclass(frozen=True)
class OrbitPeriod:
    kind: str  # "periodic" or "blowup"
    period: float | None

    def __float__(self):
        return math.inf if self.period is None else float(self.period)


# ---------------------------------------------------------------------------
# 2D


def threshold_gamma(p):
    """Largest ``Gamma`` with real turning points: ``Nt^2 / (4 |H| m3)``."""
    if p.H >= 0:
        raise ValueError(f"the threshold needs H < 0, got H = {p.H}")
    if p.N_tilde < 0:
        raise ValueError(f"the threshold needs a non-negative plasmon excess, got {p.N_tilde}")
    return p.N_tilde**2 / (4.0 * abs(p.H) * p.m3)


def turning_points(p):
    """Roots ``(y_m, y_M)`` of ``H y^2 + Nt y - Gamma m3``."""
    if p.H >= 0:
        raise ValueError(f"turning points need H < 0, got H = {p.H}")
    a = abs(p.H)
    disc = p.N_tilde**2 - 4 * a * p.Gamma * p.m3
    if disc < 0:
        raise NoBoundedOrbit(
            f"Gamma = {p.Gamma:.6g} is above the threshold {threshold_gamma(p):.6g}; no real turning points")
    root = math.sqrt(disc)
    y_M = (p.N_tilde + root) / (2 * a)
    # product of roots is Gamma m3 / |H|; avoids cancellation in the small root
    y_m = 0.0 if p.Gamma == 0 else p.Gamma * p.m3 / (a * y_M)
    return y_m, y_M


def first_integral_residual_2d(p, y, y_t):
    return y_t**2 - 4 * p.Q(y) / (p.m1 + p.m2 * y)


def _accel(p):
    m1, m2 = p.m1, p.m2

    def f(t, z):
        y, v = z
        q = p.Q(y)
        dq = 2 * p.H * y + p.N_tilde
        den = m1 + m2 * y
        return [v, 2 * (dq * den - m2 * q) / den**2]

    return f


def integrate_y_2d(p, y0, yt0, t_end, events=(), rtol=1e-12, atol=(1e-16, 1e-14), max_step=np.inf):
    """Raw DOP853 solution of the second-order ``y`` equation (dense output)."""
    return solve_ivp(_accel(p), (0.0, t_end), [y0, yt0], method="DOP853", rtol=rtol,
                     atol=list(atol), dense_output=True, events=list(events), max_step=max_step)


def integrate_lambda_2d(p, y0, t_end, lam_floor=LAMBDA_FLOOR, n_samples=4001):
    """Integrate the 2D scaling dynamics from ``y(0) = y0`` with a focusing start."""
    if y0 <= 0:
        raise ValueError(f"y0 must be positive, got {y0}")
    q0 = p.Q(y0)
    scale = max(abs(p.H) * y0**2, abs(p.N_tilde) * y0, p.Gamma * p.m3, 1e-300)
    if q0 < -1e-14 * scale:
        lo, hi = turning_points(p) if p.H < 0 and p.N_tilde**2 >= 4 * abs(p.H) * p.Gamma * p.m3 else (None, None)
        raise ValueError(f"y0 = {y0} lies outside the allowed region [{lo}, {hi}]")
    yt0 = -2.0 * math.sqrt(max(q0, 0.0) / (p.m1 + p.m2 * y0))

    def floor(t, z):
        return z[0] - lam_floor**2

    floor.terminal = True
    floor.direction = -1

    def turn(t, z):
        return z[1]

    collapse = p.Gamma == 0

    def bottom(t, z):
        return z[1]

    # with Gamma = 0 the orbit touches y = 0 as a parabola, usually inside a
    # single step, so the floor crossing is located after stopping at the bottom
    bottom.terminal = collapse
    bottom.direction = 1
    sol = integrate_y_2d(p, y0, yt0, t_end, events=(floor, turn, bottom))
    if collapse and len(sol.t_events[2]) and not len(sol.t_events[0]):
        tb = float(sol.t_events[2][0])
        yb = lambda tt: sol.sol(tt)[0] - lam_floor**2  # noqa: E731
        ta = tb
        step = max(tb * 1e-3, 1e-12)
        while yb(ta) <= 0 and ta > 0:
            ta = max(ta - step, 0.0)
            step *= 2
        if yb(tb) < 0:
            te = brentq(yb, ta, tb, xtol=1e-15, rtol=4 * np.finfo(float).eps)
            sol.t_events[0] = np.array([te])
            sol.y_events[0] = np.array([sol.sol(te)])
            sol.t = np.append(sol.t[sol.t < te], te)
    t_stop = sol.t[-1]
    t = np.linspace(0.0, t_stop, n_samples)
    y, yt = sol.sol(t)
    y = np.maximum(y, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = np.sqrt(y)
        lam_t = np.where(lam > 0, yt / (2 * np.maximum(lam, 1e-300)), 0.0)
    event = float(sol.t_events[0][0]) if len(sol.t_events[0]) else None
    turns = [(float(tt), float(z[0])) for tt, z in zip(sol.t_events[1], sol.y_events[1])]
    y_ext = [y0] + [yy for _, yy in turns] + list(y)
    minima = [tt for tt, z in zip(sol.t_events[1], sol.y_events[1])
              if _accel(p)(0, z)[1] > 0]
    period = float(np.mean(np.diff(minima))) if len(minima) >= 2 else None
    res = first_integral_residual_2d(p, y, yt)
    diag = {"first_integral_max": float(np.max(np.abs(res))), "nfev": int(sol.nfev)}
    if event is not None:
        ye, _ = sol.y_events[0][0]
        # secant over the last stretch: near collapse lambda is linear in t up to
        # O(lambda^2), and y itself is resolved far better than y_t there
        lam_a = 1e-3
        ta = brentq(lambda tt: sol.sol(tt)[0] - lam_a**2, 0.0, event)
        diag["terminal_slope"] = float((math.sqrt(ye) - math.sqrt(sol.sol(ta)[0])) / (event - ta))
        diag["terminal_lambda"] = float(math.sqrt(ye))
    return LambdaTrajectory(t, lam, lam_t, float(math.sqrt(max(min(y_ext), 0.0))),
                            float(math.sqrt(max(y_ext))), period, event, turns, diag)


# ---------------------------------------------------------------------------
# 3D


def _numerator_coeffs(p):
    """Coefficients (highest power first) of ``lambda^2 (m1 a0^2 lambda^2 + m4 lambda) F``."""
    return [p.H, -p.m2, -p.m6 * p.N, -p.m5 * p.Gamma, -p.m3 * p.Gamma * p.a0**2]


def radicand_3d(p, lam):
    """Right-hand side ``F(lambda)`` of ``lambda_t^2 = F(lambda)``."""
    lam = np.asarray(lam, dtype=float)
    num = np.polyval(_numerator_coeffs(p), lam)
    den = lam**2 * (p.m1 * p.a0**2 * lam**2 + p.m4 * lam)
    return num / den


def turning_radii_3d(p):
    """Positive real roots of ``F``, polished by a bracketed solve."""
    coeffs = _numerator_coeffs(p)
    raw = np.roots(coeffs)
    cand = sorted(r.real for r in raw if abs(r.imag) < 1e-9 * max(1.0, abs(r)) and r.real > 0)
    out = []
    f = lambda x: np.polyval(coeffs, x)  # noqa: E731
    for r in cand:
        w = 1e-6 * r
        a, b = r - w, r + w
        if f(a) * f(b) < 0:
            out.append(brentq(f, a, b, xtol=1e-15 * r, rtol=4 * np.finfo(float).eps))
        else:
            out.append(r)
    return out


def _passage_time(p, lam_from, root):
    """Time to travel from ``lam_from`` to the simple root ``root``.

    The gap is a relative 1e-9 or so, where the leading term of
    ``int dlam / sqrt(F'(root) (lam - root))`` is exact to the same order.
    """
    return 2.0 * math.sqrt(abs(root - lam_from) / abs(_root_slope(p, root)))


def integrate_lambda_3d(p, lambda0, t_end, lam_floor=LAMBDA_FLOOR, rel_gap=1e-9, n_samples=4001):
    """Integrate ``lambda_t^2 = F(lambda)`` starting on the focusing branch."""
    if lambda0 <= 0:
        raise ValueError(f"lambda0 must be positive, got {lambda0}")
    F0 = float(radicand_3d(p, lambda0))
    roots = turning_radii_3d(p)
    near_root = [r for r in roots if abs(r - lambda0) <= 1e-9 * r]
    if F0 < 0 and not near_root:
        raise ValueError(f"negative radicand F = {F0:.3e} at lambda0 = {lambda0}")

    pieces = []  # (t0, t1, callable lam(t))
    turns = []
    t, lam, s = 0.0, float(lambda0), -1.0
    event = None
    if near_root:
        # starting on a turning radius: leave it into the allowed band
        r = near_root[0]
        if radicand_3d(p, r * (1 - rel_gap)) <= 0:
            s = 1.0
        lam = r * (1 + s * rel_gap)
        dt = _passage_time(p, lam, r)
        pieces.append((0.0, dt, _parabola(r, _root_slope(p, r), 0.0)))
        turns.append((0.0, r))
        t = dt
    s_start = s
    while t < t_end:
        below = [r for r in roots if r < lam * (1 - 0.5 * rel_gap)]
        above = [r for r in roots if r > lam * (1 + 0.5 * rel_gap)]
        if s < 0:
            target = below[-1] if below else None
            stop = target * (1 + rel_gap) if target is not None else lam_floor
        else:
            target = above[0] if above else None
            if target is None:
                stop = np.inf
            else:
                stop = target * (1 - rel_gap)

        def rhs(tt, z, s=s):
            F = radicand_3d(p, z[0])
            return [s * math.sqrt(F) if F > 0 else 0.0]

        def hit(tt, z, stop=stop):
            return z[0] - stop

        hit.terminal = True
        sol = solve_ivp(rhs, (t, t_end), [lam], method="DOP853", rtol=1e-12, atol=1e-15,
                        dense_output=True, events=[hit] if np.isfinite(stop) else None)
        t1 = float(sol.t[-1])
        pieces.append((t, t1, lambda tt, sol=sol: sol.sol(tt)[0]))
        lam = float(sol.y[0, -1])
        t = t1
        if t >= t_end or sol.status != 1:
            break
        if target is None:
            event = t
            break
        dt = _passage_time(p, lam, target)
        Fp = _root_slope(p, target)
        pieces.append((t, t + 2 * dt, _parabola(target, Fp, t + dt)))
        turns.append((t + dt, target))
        t = t + 2 * dt
        s = -s

    t_stop = min(t, t_end)
    ts = np.linspace(0.0, t_stop, n_samples)
    lam_s = np.empty_like(ts)
    starts = np.array([a for a, _, _ in pieces])
    which = np.clip(np.searchsorted(starts, ts, side="right") - 1, 0, len(pieces) - 1)
    for k in np.unique(which):
        sel = which == k
        a, b, fn = pieces[k]
        lam_s[sel] = np.vectorize(fn, otypes=[float])(np.clip(ts[sel], a, b))
    lam_s = np.maximum(lam_s, 0.0)
    sign = np.full_like(ts, s_start)
    for tt, r in turns:
        if tt > 0:
            sign = np.where(ts > tt, -sign, sign)
    with np.errstate(invalid="ignore", divide="ignore"):
        Fs = radicand_3d(p, np.maximum(lam_s, 1e-300))
    lam_t = sign * np.sqrt(np.maximum(Fs, 0.0))
    ext = list(lam_s) + [r for _, r in turns]
    kinds = [r for _, r in turns]
    period = None
    if len(turns) >= 3:
        same = [tt for tt, r in turns if abs(r - turns[-1][1]) < 1e-9 * r]
        if len(same) >= 2:
            period = float(np.mean(np.diff(same)))
    diag = {"turning_residuals": [float(abs(radicand_3d(p, r))) for r in kinds], "roots": roots}
    if event is not None:
        diag["terminal_lambda"] = lam
    return LambdaTrajectory(ts, lam_s, lam_t, float(min(ext)), float(max(ext)), period, event,
                            turns, diag)


def _root_slope(p, r):
    h = 1e-6 * r
    return float((radicand_3d(p, r + h) - radicand_3d(p, r - h)) / (2 * h))


def _parabola(root, Fp, t_turn):
    # near a simple root, lambda - root = (F'(root) / 4) (t - t_turn)^2
    return lambda tt: root + 0.25 * Fp * (tt - t_turn) ** 2


def fit_blowup_exponent(traj, lam_window=(1e-4, 1e-2)):
    """Fit ``lambda ~ C (t* - t)^k`` near a blow-up event; returns ``(k, t*)``."""
    if traj.event is None:
        raise ValueError("trajectory has no blow-up event")
    t_star = traj.event
    m = (traj.lam > lam_window[0]) & (traj.lam < lam_window[1]) & (traj.t < t_star)
    if m.sum() < 5:
        raise ValueError("too few samples inside the fitting window")
    k, _ = np.polyfit(np.log(t_star - traj.t[m]), np.log(traj.lam[m]), 1)
    return float(k), float(t_star)


# ---------------------------------------------------------------------------
# periods


def oscillation_period(p):
    """Exact period of the bounded orbit via a singularity-free quadrature.

    Between two simple turning points ``a < b`` the substitution
    ``x = (a+b)/2 + (b-a)/2 sin(phi)`` absorbs the inverse square-root
    singularities of ``dt = dx / |x_t|``.
    """
    if isinstance(p, ReducedParams2D):
        y_m, y_M = turning_points(p)
        if p.Gamma == 0:
            return OrbitPeriod("blowup", None)
        c, w = 0.5 * (y_m + y_M), 0.5 * (y_M - y_m)
        f = lambda phi: math.sqrt((p.m1 + p.m2 * (c + w * math.sin(phi))) / abs(p.H))  # noqa: E731
        return OrbitPeriod("periodic", quad(f, -math.pi / 2, math.pi / 2, epsabs=0, epsrel=1e-13)[0])
    if p.Gamma == 0:
        return OrbitPeriod("blowup", None)
    roots = turning_radii_3d(p)
    band = None
    for a, b in zip(roots[:-1], roots[1:]):
        if radicand_3d(p, 0.5 * (a + b)) > 0:
            band = (a, b)
    if band is None:
        raise NoBoundedOrbit("no band of positive radicand between two turning radii")
    a, b = band
    c, w = 0.5 * (a + b), 0.5 * (b - a)

    # near the ends (x-a)(b-x)/F -> (b-a)/F'(a) or (b-a)/|F'(b)|
    def g_safe(phi):
        x = c + w * math.sin(phi)
        if (x - a) < 1e-12 * w:
            return math.sqrt((b - a) / abs(_root_slope(p, a)))
        if (b - x) < 1e-12 * w:
            return math.sqrt((b - a) / abs(_root_slope(p, b)))
        return math.sqrt((x - a) * (b - x) / radicand_3d(p, x))

    return OrbitPeriod("periodic", 2 * quad(g_safe, -math.pi / 2, math.pi / 2, epsabs=0, epsrel=1e-12)[0])
