import math

import numpy as np
import pytest

from qzlab.coefficients import (
    A0_DEPENDENT,
    PAPER_VALUES,
    coeffs_2d,
    coeffs_3d,
    coeffs_electrostatic,
    compare_with_paper,
    far_field_fit,
    product_tail,
    with_velocity_scale,
)
from qzlab.correction_profiles import solve_corrections_2d
from qzlab.ground_states import solve_ground_state_2d
from qzlab.radial_core import make_grid


@pytest.mark.parametrize("name", ["m1", "m2", "m3"])
def test_scalar_coefficients(cs_scalar, name):
    assert cs_scalar[name] == pytest.approx(PAPER_VALUES["scalar2d"][name], rel=0.01)


@pytest.mark.parametrize("name", ["m1", "m2", "m3", "mass"])
def test_electrostatic_coefficients(cs_electro, name):
    assert cs_electro[name] == pytest.approx(PAPER_VALUES["electrostatic2d"][name], rel=0.01)


@pytest.mark.parametrize("name", ["alpha0", "alpha1", "alpha2", "alpha3", "alpha4", "beta1", "m1"])
def test_3d_velocity_free_entries(cs_3d, name):
    assert cs_3d[name] == pytest.approx(PAPER_VALUES["threeD"][name], rel=0.02)


@pytest.mark.parametrize("name", sorted(A0_DEPENDENT))
def test_3d_velocity_entries_with_unscaled_corrections(cs_3d, name):
    # the velocity corrections carry no a0 factor in this table; see the sensitivity test
    assert cs_3d[name] == pytest.approx(PAPER_VALUES["threeD"][name], rel=0.02)


def test_3d_beta0_vanishes(cs_3d):
    assert abs(cs_3d["beta0"]) / cs_3d["alpha0"] < 1e-5


def test_3d_table_sensitivity_to_a0(cs_3d):
    a0 = math.sqrt(5.64 / cs_3d["alpha0"])
    scaled = with_velocity_scale(cs_3d, a0)
    for name in ("alpha0", "alpha1", "beta1", "m1"):
        assert scaled[name] == cs_3d[name]
    assert any(abs(scaled[k] - cs_3d[k]) > 0.02 * abs(cs_3d[k]) for k in A0_DEPENDENT)
    # a0 = 1 reproduces the unscaled table exactly
    same = with_velocity_scale(cs_3d, 1.0)
    for k in A0_DEPENDENT:
        assert same[k] == pytest.approx(cs_3d[k], rel=1e-13)


def test_3d_algebraic_identities(cs_3d):
    v = cs_3d.values
    assert v["m4"] / v["m6"] == pytest.approx(-v["alpha0"], rel=1e-14)
    assert v["m6"] == pytest.approx(v["beta2"] / (2 * v["alpha1"]), rel=1e-14)
    N = 5.64
    assert -v["m6"] * N / v["m4"] == pytest.approx(N / v["alpha0"], rel=1e-14)


def test_3d_alpha5_is_half_alpha0(cs_3d):
    assert cs_3d["alpha5"] == pytest.approx(0.5 * cs_3d["alpha0"], rel=1e-8)


def test_values_finite(cs_scalar, cs_electro, cs_3d):
    for cs in (cs_scalar, cs_electro, cs_3d):
        assert all(np.isfinite(v) for v in cs.values.values())


def test_compare_with_paper_rows(cs_3d, cs_scalar):
    rows = compare_with_paper(cs_3d)
    assert {r["name"] for r in rows} == set(PAPER_VALUES["threeD"])
    for r in rows:
        assert set(r) >= {"name", "computed", "paper_value", "rel_err", "pass", "a0_dependent"}
    rows2 = {r["name"]: r for r in compare_with_paper(cs_scalar)}
    assert rows2["m1"]["pass"] and rows2["m2"]["pass"] and rows2["m3"]["pass"]


def test_variant_mismatch(r2d, corr_scalar, vortex, corr_electro, selfsim3d, corr_3d):
    with pytest.raises(ValueError):
        coeffs_electrostatic(r2d, corr_scalar)
    with pytest.raises(ValueError):
        coeffs_2d(vortex, corr_electro)
    with pytest.raises(ValueError):
        coeffs_3d(selfsim3d, corr_scalar)
    with pytest.raises(ValueError):
        with_velocity_scale(coeffs_2d(r2d, corr_scalar), 2.0)


def test_corrections_must_belong_to_bundle(corr_scalar):
    other = solve_ground_state_2d(make_grid(2, 30.0, 3001))
    with pytest.raises(ValueError):
        coeffs_2d(other, corr_scalar)


@pytest.mark.parametrize("r_max, n", [(37.5, 3751), (30.0, 6001)])
def test_scalar_coefficients_stable_under_domain_changes(cs_scalar, r_max, n):
    b = solve_ground_state_2d(make_grid(2, r_max, n))
    cs = coeffs_2d(b, solve_corrections_2d(b, "scalar2d"))
    for k in ("m1", "m2", "m3"):
        assert abs(cs[k] - cs_scalar[k]) / abs(cs_scalar[k]) < 5e-3


def test_power_law_tail_integral():
    g = make_grid(3, 20.0, 401)
    x = np.maximum(g.nodes, g.h)
    f = far_field_fit(g, 3.0 * x**-2.5 + 0.5 * x**-3.0, (-2.5, -3.0))
    assert np.allclose(f[0], [3.0, 0.5], rtol=1e-8)
    # int_20^inf (3 x^-2.5)^2 x^2 dx = 9 int_20^inf x^-3 dx = 9 / 800
    single = (np.array([3.0]), (-2.5,))
    assert product_tail(single, single, 20.0, 3) == pytest.approx(9 / 800, rel=1e-14)
    with pytest.raises(ValueError):
        product_tail((np.array([1.0]), (-1.0,)), (np.array([1.0]), (-1.0,)), 20.0, 3)
