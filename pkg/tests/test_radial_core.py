import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qzlab.radial_core import (
    LinearRadialOperator,
    ParityError,
    Profile,
    SingularOperatorError,
    TailWarning,
    make_grid,
    neumann_row,
    read_profile_csv,
    scalar_laplacian,
    solve_linear_bvp,
    vector_radial_laplacian,
    weighted_integral,
    write_profile_csv,
)


def gauss(g, a=1.0):
    return Profile(g, np.exp(-a * g.nodes**2))


# -- make_grid ---------------------------------------------------------------

@pytest.mark.parametrize("d, r_max, n, expected", [(2, 1.0, 64, 0.5), (3, 2.0, 128, 8 / 3)])
def test_weights_integrate_constant(d, r_max, n, expected):
    g = make_grid(d, r_max, n)
    assert g.weights.sum() == pytest.approx(expected, rel=1e-13)


def test_gaussian_moment_on_fine_grid():
    g = make_grid(2, 30.0, 2048)
    assert abs(g.integrate(np.exp(-2 * g.nodes**2)) - 0.25) < 1e-10


@pytest.mark.parametrize("args", [(1, 1.0, 64), (4, 1.0, 64), (2, 0.0, 64), (2, -1.0, 64), (2, 1.0, 15)])
def test_make_grid_rejects(args):
    with pytest.raises(ValueError):
        make_grid(*args)


@pytest.mark.parametrize("d", [2, 3])
@pytest.mark.parametrize("k", range(0, 6))
def test_quadrature_exact_for_low_degree(d, k):
    # the endpoint-corrected rule is exact for polynomials through degree 7
    g = make_grid(d, 1.7, 40)
    exact = 1.7 ** (k + d) / (k + d)
    assert g.integrate(g.nodes**k) == pytest.approx(exact, rel=1e-13)


# -- scalar Laplacian --------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(c=st.floats(-1e3, 1e3), d=st.sampled_from([2, 3]))
def test_laplacian_of_constant_vanishes(c, d):
    g = make_grid(d, 5.0, 101)
    out = scalar_laplacian(Profile(g, np.full(g.n, c)))
    assert np.max(np.abs(out.values)) <= 1e-9 * max(1.0, abs(c))


def test_laplacian_of_xi_squared_is_four():
    g = make_grid(2, 3.0, 61)
    out = scalar_laplacian(Profile(g, g.nodes**2))
    assert np.allclose(out.values, 4.0, atol=1e-9)


def test_laplacian_gaussian_oracle():
    g = make_grid(2, 8.0, 401)
    x = g.nodes
    err = np.max(np.abs(scalar_laplacian(gauss(g)).values - (4 * x**2 - 4) * np.exp(-x**2)))
    assert err < 10 * g.h**4


def test_scalar_laplacian_rejects_odd_profile():
    g = make_grid(2, 3.0, 61)
    with pytest.raises(ParityError):
        scalar_laplacian(Profile(g, g.nodes, "odd"))


def observed_order(errors, ratio=2.0):
    return np.log(errors[:-1] / errors[1:]) / np.log(ratio)


@pytest.mark.parametrize("d", [2, 3])
def test_scalar_laplacian_converges_at_fourth_order(d):
    errs = []
    for n in (201, 401, 801):
        g = make_grid(d, 8.0, n)
        x = g.nodes
        exact = (4 * x**2 - 2 * d) * np.exp(-x**2)
        errs.append(np.max(np.abs(scalar_laplacian(gauss(g)).values - exact)))
    assert np.all(observed_order(np.array(errs)) >= 3.5)


# -- vector Laplacian --------------------------------------------------------

def test_vector_laplacian_annihilates_xi_in_2d():
    g = make_grid(2, 3.0, 61)
    out = vector_radial_laplacian(Profile(g, g.nodes.copy(), "odd"))
    assert np.max(np.abs(out.values)) < 1e-10


def test_vector_laplacian_matches_equivalent_form():
    g = make_grid(2, 8.0, 401)
    x = g.nodes
    p = x * np.exp(-(x**2))
    # Delta_r p - p / xi^2, written out by hand
    expected = (4 * x**3 - 8 * x) * np.exp(-(x**2))
    got = vector_radial_laplacian(Profile(g, p, "odd")).values
    assert np.max(np.abs(got - expected)) < 10 * g.h**4


@pytest.mark.parametrize("d", [2, 3])
def test_vector_laplacian_converges_and_matches_scalar_form(d):
    errs, gaps = [], []
    for n in (201, 401, 801):
        g = make_grid(d, 8.0, n)
        x = g.nodes
        p = x * np.exp(-(x**2))
        exact = (4 * x**3 - (2 * d + 4) * x) * np.exp(-(x**2))
        vec = vector_radial_laplacian(Profile(g, p, "odd")).values
        errs.append(np.max(np.abs(vec - exact)))
        # same operator assembled from the scalar pieces, away from the origin
        scal = g.D2(-1) @ p + (d - 1) * (g.D1(-1) @ p) / np.where(x > 0, x, 1) - (d - 1) * p / np.where(x > 0, x, 1) ** 2
        gaps.append(np.max(np.abs((vec - scal)[5:])))
    assert np.all(observed_order(np.array(errs)) >= 3.5)
    assert gaps[-1] < gaps[0]


def test_vector_laplacian_rejects_nonzero_origin():
    g = make_grid(2, 3.0, 61)
    with pytest.raises(ParityError):
        vector_radial_laplacian(Profile(g, 1.0 + g.nodes, "odd"))


# -- weighted integral -------------------------------------------------------

def test_weighted_integral_of_zero():
    g = make_grid(2, 5.0, 101)
    assert weighted_integral(Profile(g, np.zeros(g.n))) == 0.0


def test_weighted_integral_gaussian():
    g = make_grid(2, 10.0, 1001)
    assert weighted_integral(gauss(g, 2.0)) == pytest.approx(0.25, abs=1e-12)


def test_weighted_integral_ground_state_mass(r2d):
    mass = weighted_integral(r2d["R"].like(r2d["R"].values ** 2))
    # independent reference: the critical mass 11.7009 of the 2D cubic NLS ground
    # state over the full plane, divided by the omitted angular factor 2 pi
    assert mass == pytest.approx(11.7009 / (2 * np.pi), rel=1e-4)


def test_weighted_integral_warns_on_undecayed_tail():
    g = make_grid(2, 2.0, 101)
    with pytest.warns(TailWarning):
        weighted_integral(gauss(g, 0.5))


def test_weighted_integral_silent_when_decayed():
    g = make_grid(2, 10.0, 201)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        weighted_integral(gauss(g))


# -- linear BVP --------------------------------------------------------------

@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_identity_solve_returns_rhs(seed):
    g = make_grid(2, 5.0, 64)
    rhs = Profile(g, np.random.default_rng(seed).normal(size=g.n))
    out = solve_linear_bvp(LinearRadialOperator.identity(g), rhs)
    assert np.allclose(out.values, rhs.values, rtol=0, atol=1e-14)


def test_manufactured_helmholtz_solution():
    g = make_grid(2, 10.0, 801)
    x = g.nodes
    rhs = Profile(g, (4 * x**2 - 4 - 1) * np.exp(-x**2))
    op = LinearRadialOperator.helmholtz(g, -1.0)
    out = solve_linear_bvp(op, rhs)
    assert np.max(np.abs(out.values - np.exp(-x**2))) < 10 * g.h**4
    res = op.assembled() @ out.values - np.where(np.arange(g.n) == g.n - 1, 0.0, rhs.values)
    assert np.max(np.abs(res)) / np.max(np.abs(rhs.values)) < 1e-10


def test_pure_neumann_laplacian_is_singular():
    g = make_grid(2, 5.0, 101)
    op = LinearRadialOperator(g, g.laplacian_matrix, [neumann_row(g, -1)])
    with pytest.raises(SingularOperatorError) as info:
        solve_linear_bvp(op, Profile(g, np.ones(g.n)))
    assert info.value.cond is None or info.value.cond > 1e12


def test_solve_rejects_foreign_grid():
    g1, g2 = make_grid(2, 5.0, 64), make_grid(2, 5.0, 64)
    with pytest.raises(ValueError):
        solve_linear_bvp(LinearRadialOperator.identity(g1), Profile(g2, np.ones(64)))


# -- CSV ---------------------------------------------------------------------

@pytest.mark.parametrize("complex_valued", [False, True])
def test_profile_csv_round_trip(tmp_path, complex_valued):
    g = make_grid(3, 4.0, 81)
    v = np.exp(-g.nodes**2) * (1 + 0.5j if complex_valued else 1)
    path = write_profile_csv(tmp_path / "p.csv", Profile(g, v))
    header = path.read_text().splitlines()[0]
    assert header == ("xi,re,im" if complex_valued else "xi,value")
    back = read_profile_csv(path, 3)
    assert np.array_equal(back.values, v)
    assert back.grid.n == g.n and back.grid.r_max == g.r_max
