import csv
import math

import numpy as np
import pytest
import scipy.linalg as la

from qzlab.functionals import plasmon_number
from qzlab.qz_simulator import (
    RadialZakharov,
    SimConfig,
    SimState,
    SimulationInstability,
    UnderResolvedWarning,
    run,
    step,
)


@pytest.fixture(scope="module")
def small():
    return RadialZakharov(2, 10.0, 201, 5e-3, 1e-3, sponge_frac=0.1, sponge_strength=0.0)


def test_zero_step_is_identity(small):
    s = small.initial_state(2.0)
    out = step(s, 0.0, small)
    assert out is not s
    assert np.array_equal(out.E, s.E) and np.array_equal(out.n, s.n) and out.t == s.t


def test_step_rejects_foreign_dt(small):
    with pytest.raises(ValueError):
        step(small.initial_state(1.0), 2e-3, small)


def test_weighted_laplacian_is_symmetric(small):
    K = small.K.toarray()
    assert np.array_equal(K, K.T)
    WL = small.w[:, None] * small.L.toarray()
    assert np.allclose(WL, WL.T, atol=1e-12 * np.abs(WL).max())


def test_linear_schrodinger_eigenmode():
    model = RadialZakharov(2, 10.0, 121, 0.0, 1e-3, sponge_strength=0.0)
    mu, V = la.eigh(model.K.toarray(), np.diag(model.w))
    k = 3
    v = V[:, k].astype(complex)
    s = SimState(0.0, v, np.zeros(model.m), np.zeros(model.m))
    # the linear flow of one step; with n = 0 the kick only feeds n_t, which
    # would couple back into E on the next step
    for _ in range(200):
        s = model.linear(model.linear(s, 5e-4), 5e-4)
    t = s.t
    assert np.max(np.abs(np.abs(s.E) - np.abs(v))) < 1e-12
    # Crank-Nicolson phase error is (mu dt)^3 / 12 per unit step
    assert np.max(np.abs(s.E - np.exp(-1j * mu[k] * t) * v)) < 200 * (mu[k] * 1e-3) ** 3 + 1e-12


def test_acoustic_energy_conserved_without_field(small):
    r = small.r[: small.m]
    s = SimState(0.0, np.zeros(small.m, complex), 0.3 * np.exp(-(r**2)), 0.1 * r**2 * np.exp(-(r**2)))
    H0 = small.hamiltonian(s)
    for _ in range(300):
        s = small.step(s)
    assert abs(small.hamiltonian(s) - H0) < 1e-11 * abs(H0)


def test_plasmon_number_conserved_to_roundoff(small):
    s = small.initial_state(2.85)
    N0 = small.plasmon_number(s)
    for _ in range(200):
        s = small.step(s)
    assert abs(small.plasmon_number(s) - N0) < 1e-12 * N0


def test_overflow_guard(small):
    s = small.initial_state(1.0)
    s.E[:] = 2e6
    with pytest.raises(SimulationInstability):
        small.step(s)


def test_initial_invariants_match_quadrature():
    model = RadialZakharov(2, 12.0, 2401, 5e-3, 1e-3)
    s = model.initial_state(2.85)
    # cell-volume quadrature: second-order accurate in h
    assert model.plasmon_number(s) == pytest.approx(2.85**2 / 4, rel=1e-4)
    fs = model.to_field_state(s)
    assert plasmon_number(fs) == pytest.approx(2.85**2 / 4, rel=1e-10)


def test_time_step_refinement():
    def max_e(dt):
        cfg = SimConfig(Gamma=5e-3, c=2.85, r_max=12.0, n=401, dt=dt, t_end=0.4, output_every=0.4,
                        sponge_strength=0.0)
        return run(cfg).maxE[-1]

    a, b, c, ref = (max_e(dt) for dt in (4e-3, 2e-3, 1e-3, 2.5e-4))
    e = np.abs(np.array([a, b, c]) - ref)
    # second-order splitting: each halving should cut the error by about 4
    assert np.all(e[:-1] / e[1:] > 3.0)


def test_short_run_diagnostics(tmp_path):
    cfg = SimConfig(Gamma=5e-3, c=2.85, r_max=12.0, n=401, dt=1e-3, t_end=0.3, output_every=0.05)
    diag = run(cfg)
    assert diag.t[0] == 0.0 and diag.t[-1] == pytest.approx(0.3)
    assert np.all(diag.lambda_est > 0)
    assert diag.lambda_est[0] == 1.0
    assert np.all(diag.sponge_loss >= -1e-15)
    assert diag.drift()["N"] < 1e-10
    path = diag.write_csv(tmp_path / "d.csv")
    with path.open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "maxE", "lambda_est", "N", "H", "sponge_loss"]
    assert len(rows) == len(diag.t) + 1


def test_three_dimensional_run_uses_two_thirds_power():
    cfg = SimConfig(d=3, Gamma=1e-3, c=2.0, r_max=10.0, n=201, dt=1e-3, t_end=0.1, output_every=0.05)
    diag = run(cfg)
    expected = (diag.maxE[0] / diag.maxE) ** (2 / 3)
    assert np.allclose(diag.lambda_est, expected, rtol=1e-14)


def test_snapshots_are_delivered():
    seen = []
    cfg = SimConfig(c=1.0, r_max=8.0, n=161, dt=1e-3, t_end=0.05, snapshot_every=0.01)
    run(cfg, snapshot_cb=lambda s: seen.append(s.t))
    assert len(seen) == 5


def test_collapse_is_flagged():
    cfg = SimConfig(Gamma=0.0, c=2.85, stop_on_unresolved=True, t_end=4.0)
    with pytest.warns(UnderResolvedWarning):
        diag = run(cfg)
    assert diag.events and diag.events[0][0] == "under_resolved"
    assert diag.maxE.max() / diag.maxE[0] >= 10


@pytest.mark.parametrize("kw", [dict(dt=0.0), dict(d=1), dict(t_end=-1.0), dict(Gamma=-1.0), dict(n=8)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SimConfig(**kw)


def test_gradient_bound_check_needs_gamma():
    cfg = SimConfig(Gamma=0.0, c=1.0, r_max=8.0, n=161, dt=1e-3, t_end=0.02)
    with pytest.raises(ValueError):
        run(cfg).gradient_bound_check()
