import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st
from scipy.integrate import quad

from src.errors import DomainError
from src.mp_law import (
    MPLawTable,
    boundary_values,
    density,
    find_edges,
    full_quantiles,
    h,
    h_prime,
    h_second,
    m_dot0,
    m_prime,
    solve_m,
    solve_m_array,
    solve_m_at_zero,
    upper_edge,
)
from src.shrinkage import Ell
from src.spectral import PopulationSpectrum, build_setting

C = 0.5
LOWER, UPPER = (1 - np.sqrt(C)) ** 2, (1 + np.sqrt(C)) ** 2


@pytest.fixture(scope="module")
def identity():
    return PopulationSpectrum(np.ones(100), 200)


@pytest.fixture(scope="module")
def identity_table(identity):
    return MPLawTable.build(identity)


@pytest.fixture(scope="module")
def two_atom():
    return build_setting("two-atom", 100, 200).base


@pytest.fixture(scope="module")
def two_bulk():
    return build_setting("iv", 300, 600).base


def closed_form_m(z: np.ndarray, c: float) -> np.ndarray:
    """Root in C+ of z m² + (z + 1 − c) m + 1 = 0"""
    disc = np.sqrt((z + 1 - c) ** 2 - 4 * z)
    roots = np.stack([(-(z + 1 - c) + disc) / (2 * z), (-(z + 1 - c) - disc) / (2 * z)])
    return np.where(roots[0].imag > roots[1].imag, roots[0], roots[1])


def closed_form_density(E: np.ndarray) -> np.ndarray:
    return np.sqrt(np.maximum((UPPER - E) * (E - LOWER), 0.0)) / (2 * np.pi * E)


def z_grid(count_re: int, count_im: int, top: float) -> np.ndarray:
    E = np.linspace(0.1, top, count_re)
    eta = np.geomspace(1e-2, 10.0, count_im)
    return (E[:, None] + 1j * eta[None, :]).reshape(-1)


def test_h_identity_formula(identity):
    x = np.array([-3.0, -0.5, 0.7, 2.0])
    np.testing.assert_allclose(h(x, identity), -1 / x + C / (1 + x))
    np.testing.assert_allclose(h_prime(x, identity), 1 / x ** 2 - C / (1 + x) ** 2)
    assert isinstance(h(0.7, identity), float)


def test_h_rejects_poles(identity):
    with pytest.raises(DomainError):
        h(-1.0, identity)
    with pytest.raises(DomainError):
        h(0.0, identity)


def test_identity_edges_are_exact(identity_table):
    np.testing.assert_allclose(identity_table.edges, [UPPER, LOWER], atol=1e-9)
    assert identity_table.q == 1
    assert identity_table.lambda_plus == pytest.approx(UPPER, abs=1e-9)
    np.testing.assert_allclose(identity_table.companions,
                               [-1 / (1 + np.sqrt(C)), -1 / (1 - np.sqrt(C))], atol=1e-9)


def test_solve_m_matches_closed_form(identity):
    z = z_grid(10, 10, 4.0)
    m, residual, _ = solve_m_array(z, identity)
    np.testing.assert_allclose(m, closed_form_m(z, C), rtol=0, atol=1e-10)
    assert np.all(m.imag > 0)


def test_solve_m_scalar_and_real_axis(identity):
    sol = solve_m(1.0 + 0.5j, identity)
    assert sol.m == pytest.approx(complex(closed_form_m(np.array([1.0 + 0.5j]), C)[0]), abs=1e-10)

    inside = solve_m(1.0, identity)
    assert inside.m.imag == pytest.approx(np.pi * closed_form_density(np.array([1.0]))[0], abs=1e-8)

    outside = boundary_values(np.array([5.0]), identity)[0]
    assert outside.imag == 0.0
    assert abs(5.0 - h(outside.real, identity)) < 1e-10


@pytest.mark.parametrize("name", ["identity", "two_atom", "two_bulk"])
def test_self_consistency(name, request):
    spec = request.getfixturevalue(name)
    z = z_grid(20, 10, 1.3 * float(spec.sigmas[0]) * (1 + np.sqrt(spec.c)) ** 2)
    m, _, _ = solve_m_array(z, spec)
    assert np.all(np.abs(z - h(m, spec)) <= 1e-12 * np.maximum(1.0, np.abs(z)))


@pytest.mark.parametrize("name, edges", [("identity", 2), ("two_atom", 2), ("two_bulk", 4)])
def test_edges_are_critical_points(name, edges, request):
    spec = request.getfixturevalue(name)
    table = find_edges(spec)
    assert table.edges.size == edges
    assert np.all(np.diff(table.edges) < 0)
    assert np.all(np.abs(h_prime(table.companions, spec)) <= 1e-9)
    assert table.bulk_counts[-1] == spec.K


def test_two_bulk_counts(two_bulk):
    table = find_edges(two_bulk)
    assert table.q == 2
    np.testing.assert_array_equal(table.bulk_counts, [150, 300])
    np.testing.assert_allclose(table.bulk_masses, [0.25, 0.25], atol=1e-6)


def test_density_matches_closed_form(identity):
    E = np.linspace(0.2, 2.8, 25)
    np.testing.assert_allclose(density(E, identity), closed_form_density(E), atol=1e-8)
    assert density(5.0, identity) == 0.0
    with pytest.raises(DomainError):
        density(0.0, identity)


def test_bulk_mass_is_min_one_c(identity_table):
    assert identity_table.bulk_masses.sum() == pytest.approx(C, abs=1e-6)
    assert identity_table.zero_mass_n == pytest.approx(0.5)
    assert identity_table.zero_mass_p == 0.0


def test_quantiles_invert_the_tail_mass(identity_table):
    gammas = identity_table.quantiles
    assert gammas.size == 100
    assert np.all(np.diff(gammas) < 0)
    assert np.all(identity_table.in_support(gammas))
    for k in (1, 10, 50, 90, 100):
        tail, _ = quad(closed_form_density, gammas[k - 1], UPPER)
        assert tail == pytest.approx((k - 0.5) / 200, abs=1e-5)


def test_gamma_convention(identity_table):
    assert identity_table.gamma(1) == identity_table.quantiles[0]
    assert identity_table.gamma(150) == 0.0
    padded = full_quantiles(identity_table)
    assert padded.size == 200
    assert np.all(padded[100:] == 0.0)


def test_m_at_zero_for_wide_identity():
    spec = PopulationSpectrum(np.ones(400), 200)
    assert solve_m_at_zero(spec) == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(DomainError):
        solve_m_at_zero(PopulationSpectrum(np.ones(100), 200))


def test_m_prime_is_inverse_h_prime(identity):
    z = 1.5 + 0.2j
    m = solve_m(z, identity).m
    eps = 1e-6
    numeric = (solve_m(z + eps, identity).m - solve_m(z - eps, identity).m) / (2 * eps)
    assert m_prime(z, identity) == pytest.approx(numeric, rel=1e-5)
    assert m_prime(z, identity, m=m) == pytest.approx(1 / h_prime(m, identity))


def test_solver_domain_errors(identity):
    with pytest.raises(DomainError):
        solve_m(1.0 - 0.1j, identity)
    with pytest.raises(DomainError):
        solve_m(0.0, identity)


def test_regularity_report(identity_table, two_bulk):
    report = identity_table.regularity()
    assert report.regular
    assert report.lower_edge == pytest.approx(LOWER, abs=1e-9)
    assert set(report.as_dict()) == {"min_edge_gap", "lower_edge", "min_pole_distance", "tau", "regular"}
    assert find_edges(two_bulk).regularity().min_edge_gap > 0


@hsettings(max_examples=40, deadline=None)
@given(E=st.floats(0.05, 12.0), eta=st.floats(1e-3, 5.0))
def test_two_atom_solution_stays_in_upper_half_plane(E, eta):
    spec = PopulationSpectrum(np.repeat([3.0, 1.0], 50), 200)
    z = E + 1j * eta
    sol = solve_m(z, spec)
    assert sol.m.imag > 0
    assert abs(z - h(sol.m, spec)) <= 1e-12 * max(1.0, abs(z))


def test_h_second_is_the_derivative_of_h_prime(two_atom):
    for x in (-0.9, -0.2, 0.4 + 0.3j):
        eps = 1e-6
        numeric = (h_prime(x + eps, two_atom) - h_prime(x - eps, two_atom)) / (2 * eps)
        assert h_second(x, two_atom) == pytest.approx(numeric, rel=1e-6)


def test_upper_edge_of_the_identity(identity):
    edge = upper_edge(identity)
    assert edge.lambda_plus == pytest.approx(UPPER, abs=1e-9)
    assert edge.b1 == pytest.approx(-1.0 / (1.0 + np.sqrt(C)), rel=1e-9)
    expected = 2 * (1 + np.sqrt(C)) ** 3 * (1 + 1 / np.sqrt(C))
    assert edge.curvature == pytest.approx(expected, rel=1e-8)
    # square-root decay of the closed-form density at the edge
    slope = np.sqrt(UPPER - LOWER) / (2 * np.pi * UPPER)
    assert np.sqrt(2.0 / edge.curvature) / np.pi == pytest.approx(slope, rel=1e-8)
    assert edge.spacing == pytest.approx((3.0 / (4.0 * 200 * slope)) ** (2.0 / 3.0), rel=1e-8)


def test_upper_edge_matches_the_full_edge_search(two_bulk):
    table = find_edges(two_bulk)
    edge = upper_edge(two_bulk)
    assert edge.lambda_plus == pytest.approx(table.lambda_plus, rel=1e-10)
    assert edge.b1 == pytest.approx(table.b1, rel=1e-8)
    assert edge.spacing > 0


def test_m_dot0_vanishes_for_zero_ell(two_atom):
    assert m_dot0(9.0, 2.0, two_atom, lambda s: 0.0 * s) == 0.0
    assert m_dot0(1.5 + 0.3j, 2.0, two_atom, lambda s: 0.0 * s) == 0.0
    with pytest.raises(DomainError):
        m_dot0(9.0, 0.0, two_atom, Ell.X)


@pytest.mark.parametrize("z", [4.5, 12.0])
def test_m_dot0_identity_closed_form(identity, z):
    m = solve_m(z, identity).m.real
    mp = m_prime(z, identity, m=m).real
    expected = (mp / m ** 2 - 1.0) / z
    assert m_dot0(z, z, identity, Ell.X) == pytest.approx(expected, rel=1e-9)


@pytest.mark.parametrize("z", [9.0, 2.0 + 0.5j])
@pytest.mark.parametrize("ell", [Ell.X, Ell.XINV])
def test_m_dot0_matches_the_perturbed_equation(two_atom, z, ell):
    x, t = 2.0, 1e-5
    sigmas = two_atom.sigmas

    def perturbed(step: float) -> complex:
        moved = sigmas / (1.0 + step * ell(sigmas) / x)
        return solve_m(z, PopulationSpectrum.from_values(moved, two_atom.n)).m

    numeric = (perturbed(t) - perturbed(-t)) / (2 * t)
    assert m_dot0(z, x, two_atom, ell) == pytest.approx(numeric, rel=1e-5)
