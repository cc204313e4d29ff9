"""Shared, session-cached solves.

The ground states and correction systems take seconds each; every test module
reads them from here instead of re-solving.
"""

import pytest

from qzlab.coefficients import coeffs_2d, coeffs_3d, coeffs_electrostatic
from qzlab.correction_profiles import solve_corrections_2d, solve_corrections_3d
from qzlab.ground_states import solve_ground_state_2d, solve_selfsimilar_3d, solve_vortex_ground_state
from qzlab.lambda_dynamics import ReducedParams2D

# Fig. 2 top panel, as printed
FIG2_TOP = dict(H=-0.0430, N_tilde=0.240, Gamma=5e-3, m1=0.727, m2=0.553, m3=10.785)


@pytest.fixture(scope="session")
def r2d():
    return solve_ground_state_2d()


@pytest.fixture(scope="session")
def vortex():
    return solve_vortex_ground_state()


@pytest.fixture(scope="session")
def selfsim3d():
    return solve_selfsimilar_3d()


@pytest.fixture(scope="session")
def corr_scalar(r2d):
    return solve_corrections_2d(r2d, "scalar2d")


@pytest.fixture(scope="session")
def corr_electro(vortex):
    return solve_corrections_2d(vortex, "electrostatic2d")


@pytest.fixture(scope="session")
def corr_3d(selfsim3d):
    return solve_corrections_3d(selfsim3d, 1.0)


@pytest.fixture(scope="session")
def cs_scalar(r2d, corr_scalar):
    return coeffs_2d(r2d, corr_scalar)


@pytest.fixture(scope="session")
def cs_electro(vortex, corr_electro):
    return coeffs_electrostatic(vortex, corr_electro)


@pytest.fixture(scope="session")
def cs_3d(selfsim3d, corr_3d):
    return coeffs_3d(selfsim3d, corr_3d)


@pytest.fixture
def fig2_top():
    return ReducedParams2D(**FIG2_TOP)


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance lines recorded by tests/test_acceptance.py."""
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            for name, value in getattr(rep, "user_properties", []):
                if name == "acceptance" and rep.when == "call":
                    lines.append(value)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
