import numpy as np
import pytest

from src.errors import DomainError, EstimationError
from src.estimation import (
    EstimatedSpectrum,
    assemble_shrunken,
    bulk_edge,
    build_shrinker_report,
    estimate_phi_hat_curve,
    estimate_phi_hat_fn,
    estimate_population_spectrum,
    estimate_psi_hat,
    estimate_rank,
    estimate_shrinkers,
    estimate_vartheta_hat,
    estimate_xi_zeta_hat,
    estimated_theta,
    estimated_xi_curve,
    fit_estimators,
    population_moments,
    sample_stieltjes,
    truncation_indices,
)
from src.mp_law import MPLawTable
from src.shrinkage import Ell, LossKind, vartheta
from src.spectral import (
    PopulationSpectrum,
    SampleSpectrum,
    SpikedModel,
    build_setting,
    generate_data,
    sample_covariance,
)

TOY = [10.0, 3.0, 2.0, 1.0]
BULK = np.array([3.0, 2.0, 1.0, 0.0, 0.0, 0.0, 0.0])


@pytest.fixture
def toy():
    return SampleSpectrum.from_eigenvalues(TOY, 8)


@pytest.fixture
def toy_fit(toy):
    st = sample_stieltjes(toy, 1)
    est = estimate_population_spectrum(toy, 1, method="oracle", truth=np.array([2.0, 1.5, 1.0, 0.5]))
    return st, est


def test_sample_stieltjes_hand_sums(toy):
    st = sample_stieltjes(toy, 1)
    m = np.sum(1.0 / (BULK - 10.0)) / 8
    mp = np.sum(1.0 / (BULK - 10.0) ** 2) / 8
    assert st.m_hat[0] == pytest.approx(m)
    assert st.m_hat_prime[0] == pytest.approx(mp)
    assert st.b_hat[0] == pytest.approx(1.0 / (10.0 * mp))
    assert st.sigma_tilde_hat[0] == pytest.approx(-1.0 / m)
    assert st.eta == pytest.approx(8 ** -0.5)
    np.testing.assert_array_equal(st.bulk, BULK)

    expected = np.sum(1.0 / (BULK - 1.5 - 1j * st.eta)) / 8
    assert st.m_at(1.5) == pytest.approx(expected)
    assert st.m_at(np.array([1.5, 2.5])).shape == (2,)


def test_sample_stieltjes_errors(toy):
    with pytest.raises(DomainError):
        sample_stieltjes(toy, 4)
    collided = SampleSpectrum.from_eigenvalues([2.0, 2.0, 1.0], 8)
    with pytest.raises(EstimationError, match="collides"):
        sample_stieltjes(collided, 1)


def test_truncation_indices():
    sigma = np.array([3.0, 2.0, 1.0, 0.5])
    assert truncation_indices(0.6, sigma, -1 / 2.5) == (3, 3)
    assert truncation_indices(0.6, sigma, -1 / 10.0) == (3, 1)
    assert truncation_indices(0.6, sigma, -1 / 0.1) == (3, 5)
    assert truncation_indices(5.0, sigma, -1 / 10.0)[0] == 0
    with pytest.raises(DomainError):
        truncation_indices(0.0, sigma, -0.1)


def test_gap_rule_below_the_moment_sample_size():
    bulk = np.linspace(3.0, 0.5, 40)
    assert estimate_rank(SampleSpectrum.from_eigenvalues(np.r_[20.0, bulk], 80)) == 1
    assert estimate_rank(SampleSpectrum.from_eigenvalues(np.r_[30.0, 20.0, bulk[1:]], 80)) == 2
    assert estimate_rank(SampleSpectrum.from_eigenvalues(np.r_[3.05, bulk], 80)) == 0
    with pytest.raises(DomainError):
        estimate_rank(SampleSpectrum.from_eigenvalues(bulk[:10], 20))


@pytest.mark.parametrize("model, expected", [
    (build_setting("identity", 200, 400), 0),
    (build_setting("i", 300, 600), 1),
    (SpikedModel.with_spikes(PopulationSpectrum(np.ones(200), 400), [20.0, 10.0]), 2),
])
def test_rank_estimate_on_simulated_samples(model, expected):
    sample = sample_covariance(generate_data(model, 3))
    assert estimate_rank(sample) == expected


def test_bulk_edge_of_an_identity_sample():
    model = build_setting("identity", 200, 400)
    sample = sample_covariance(generate_data(model, 5))
    edge = bulk_edge(sample, 0)
    assert edge.lambda_plus == pytest.approx((1 + np.sqrt(0.5)) ** 2, abs=0.15)
    assert 0 < edge.spacing < 0.2


def test_population_moments_of_the_identity():
    c = 0.5
    sample_moments = np.array([1.0, 1.0 + c, 1.0 + 3 * c + c ** 2])
    np.testing.assert_allclose(population_moments(sample_moments, c), [1.0, 1.0, 1.0], atol=1e-12)


def test_oracle_spectrum_passthrough(toy):
    truth = PopulationSpectrum(np.array([2.0, 1.5, 1.0, 0.5]), 8)
    est = estimate_population_spectrum(toy, 1, method="oracle", truth=truth)
    np.testing.assert_array_equal(est.sigma_hat, truth.sigmas)
    assert est.method == "oracle" and not est.fallback
    with pytest.raises(DomainError):
        estimate_population_spectrum(toy, 1, method="oracle")
    with pytest.raises(DomainError):
        estimate_population_spectrum(toy, 1, method="bootstrap")
    with pytest.raises(DomainError):
        estimate_population_spectrum(toy, 1, method="moment")


def test_estimated_spectrum_validation():
    with pytest.raises(EstimationError):
        EstimatedSpectrum(np.array([1.0, 2.0]), "oracle")
    with pytest.raises(EstimationError):
        EstimatedSpectrum(np.array([1.0, 0.0]), "oracle")


def test_psi_hat_hand_value(toy, toy_fit):
    st, est = toy_fit
    a, m, mp, b = 10.0, st.m_hat[0], st.m_hat_prime[0], st.b_hat[0]
    sigma = est.sigma_hat[1:]
    m_dot = mp / (8 * a) * np.sum(sigma ** 2 / (1.0 + m * sigma) ** 2)
    expected = b * (1.0 + a * m_dot)
    assert estimate_psi_hat(1, Ell.X, toy, est, st, eps=0.05) == pytest.approx(expected)
    assert estimate_psi_hat(1, lambda x: 0.0 * x, toy, est, st, eps=0.05) == 0.0
    with pytest.raises(DomainError):
        estimate_psi_hat(2, Ell.X, toy, est, st)


def test_psi_hat_empty_range(toy, toy_fit):
    st, est = toy_fit
    with pytest.raises(EstimationError, match="empty truncated range"):
        estimate_psi_hat(1, Ell.X, toy, est, st, eps=5.0)


def test_vartheta_hat_and_phi_hat(toy, toy_fit):
    st, est = toy_fit
    x = 2.0
    sigma = est.sigma_hat[1:]
    m = st.m_at(x)
    weights = st.c * sigma / (x * np.abs(1.0 + m * sigma) ** 2)
    expected = np.sum(weights * sigma) / 4
    assert estimate_vartheta_hat(3, Ell.X, toy, est, st, eps=0.05, stieltjes="sample") == pytest.approx(expected)
    assert estimate_phi_hat_fn(toy, est, st, 2, x) == pytest.approx(weights[0])
    with pytest.raises(DomainError):
        estimate_phi_hat_fn(toy, est, st, 1, x)
    with pytest.raises(DomainError):
        estimate_vartheta_hat(1, Ell.X, toy, est, st, stieltjes="sample")


def test_phi_hat_curve_is_a_weighted_sum(toy, toy_fit):
    st, est = toy_fit
    overlaps = np.array([0.0, 0.5, 0.5, 0.0])
    xs = np.array([1.0, 2.5])
    curve = estimate_phi_hat_curve(st, est, overlaps, xs)
    for x, value in zip(xs, curve):
        expected = 0.5 * (estimate_phi_hat_fn(toy, est, st, 2, x) + estimate_phi_hat_fn(toy, est, st, 3, x))
        assert value == pytest.approx(expected)
    with pytest.raises(DomainError):
        estimate_phi_hat_curve(st, est, np.ones(3), xs)


def test_estimated_theta_layout(toy, toy_fit):
    st, est = toy_fit
    theta = estimated_theta(Ell.XINV, toy, est, st, eps=0.05, stieltjes="sample")
    assert theta.shape == (4,)
    assert theta[0] == pytest.approx(estimate_psi_hat(1, Ell.XINV, toy, est, st, eps=0.05))
    assert theta[2] == pytest.approx(estimate_vartheta_hat(3, Ell.XINV, toy, est, st, eps=0.05, stieltjes="sample"))


def test_xi_hat_values(toy, toy_fit):
    st, _ = toy_fit
    spike = estimate_xi_zeta_hat(toy, st, 1)
    assert spike == pytest.approx(st.b_hat[0] * st.m_hat_prime[0] / st.m_hat[0] ** 2)
    bulk = estimate_xi_zeta_hat(toy, st, 2)
    assert bulk == pytest.approx(1.0 / (3.0 * abs(st.m_at(3.0)) ** 2))
    curve = estimated_xi_curve(toy, st)
    assert curve[0] == pytest.approx(spike) and curve[1] == pytest.approx(bulk)
    with pytest.raises(DomainError):
        estimate_xi_zeta_hat(toy, st, 0)


def test_zero_block_shares_one_value():
    model = build_setting("identity", 60, 30)
    sample = sample_covariance(generate_data(model, 2))
    st = sample_stieltjes(sample, 0)
    est = estimate_population_spectrum(sample, 0, method="oracle", truth=model.base)
    theta = estimated_theta(Ell.XINV, sample, est, st, stieltjes="sample")
    assert np.all(theta[30:] == theta[30])
    assert theta[30] == pytest.approx(estimate_vartheta_hat(0, Ell.XINV, sample, est, st, stieltjes="sample"))
    expected = np.mean(1.0 / ((1.0 - 1.0 / st.c) * (1.0 + st.m0)))
    assert theta[30] == pytest.approx(expected)
    assert estimate_xi_zeta_hat(sample, st, 0) == pytest.approx(1.0 / st.m0)


def test_assemble_reproduces_the_sample_covariance():
    model = build_setting("ii", 20, 60)
    X = generate_data(model, 1)
    sample = sample_covariance(X)
    S = X @ X.T
    shrunken = assemble_shrunken(sample, LossKind.FROBENIUS, sample.eigenvalues)
    np.testing.assert_allclose(shrunken.matrix, S, atol=1e-10)
    precision = assemble_shrunken(sample, LossKind.STEIN, sample.eigenvalues, target="precision")
    np.testing.assert_allclose(precision.matrix @ S, np.eye(20), atol=1e-8)


def test_assemble_errors_and_zero_block_average():
    model = build_setting("identity", 20, 10)
    sample = sample_covariance(generate_data(model, 1))
    phi = np.ones(20)
    phi[10:] = np.linspace(1.0, 2.0, 10)
    shrunken = assemble_shrunken(sample, LossKind.FROBENIUS, phi)
    assert np.all(shrunken.phi[10:] == pytest.approx(1.5))

    phi[3] = -1.0
    with pytest.raises(EstimationError, match="index 4"):
        assemble_shrunken(sample, LossKind.STEIN, phi)
    assemble_shrunken(sample, LossKind.FROBENIUS, phi)
    with pytest.raises(DomainError):
        assemble_shrunken(sample, LossKind.STEIN, np.ones(20), target="inverse")
    with pytest.raises(DomainError):
        assemble_shrunken(sample, LossKind.STEIN, np.ones(5))


def test_shrinker_report_columns():
    model = build_setting("identity", 40, 120)
    sample = sample_covariance(generate_data(model, 4))
    r, est, st = fit_estimators(sample, r=0, method="oracle", truth=model.base)
    mp = MPLawTable.build(model.base)
    report = build_shrinker_report(sample, LossKind.SYMMETRIZED_STEIN, est, st, model=model, mp=mp)
    assert list(report.records.columns) == ["index", "empirical", "estimated", "theoretical", "loss", "ell"]
    assert len(report.records) == 80
    assert report.column("estimated", "xinv").size == 40
    assert report.zero_block is None
    assert report.risk_pred is not None and report.risk_emp is not None


@pytest.mark.slow
def test_identity_shrinkers_are_close_to_one():
    model = build_setting("identity", 200, 400)
    sample = sample_covariance(generate_data(model, 7))
    r, est, st = fit_estimators(sample, r=0, method="oracle", truth=model.base)
    phi = estimate_shrinkers(LossKind.FROBENIUS, sample, est, st)
    assert np.median(np.abs(phi - 1.0)) < 0.15


@pytest.mark.slow
def test_moment_fit_recovers_two_atom_moments():
    model = build_setting("two-atom", 300, 600)
    sample = sample_covariance(generate_data(model, 0))
    est = estimate_population_spectrum(sample, 0, method="moment")
    assert not est.fallback
    first, second = est.diagnostics["population_moments"][:2]
    assert first == pytest.approx(2.0, rel=0.05)
    assert second == pytest.approx(5.0, rel=0.05)


def test_moment_scale_uses_the_bulk_count():
    model = build_setting("identity", 200, 400)
    values = sample_covariance(generate_data(model, 1)).eigenvalues.copy()
    values[0] = 50.0
    sample = SampleSpectrum.from_eigenvalues(values, 400)
    est = estimate_population_spectrum(sample, 1, method="moment")
    assert not est.fallback
    assert est.diagnostics["population_moments"][0] == pytest.approx(np.mean(values[1:]), rel=1e-10)
    with pytest.raises(DomainError):
        estimate_population_spectrum(sample, 200, method="moment")


@pytest.mark.parametrize("level", [1.0, 2.0])
def test_fitted_source_matches_the_limiting_vartheta(level):
    model = SpikedModel.with_spikes(PopulationSpectrum(np.full(100, level), 200), [])
    sample = sample_covariance(generate_data(model, 2))
    r, est, st = fit_estimators(sample, r=0, method="oracle", truth=model.base)
    theta = estimated_theta(Ell.XINV, sample, est, st, stieltjes="fitted")
    expected = [vartheta(Ell.XINV, x, model) for x in sample.eigenvalues]
    np.testing.assert_allclose(theta, expected, rtol=1e-8)


def test_fitted_source_on_the_zero_block():
    model = build_setting("identity", 60, 30)
    sample = sample_covariance(generate_data(model, 2))
    r, est, st = fit_estimators(sample, r=0, method="oracle", truth=model.base)
    assert est.m_zero(30) == pytest.approx(1.0, rel=1e-10)
    theta = estimated_theta(Ell.XINV, sample, est, st, stieltjes="fitted")
    assert np.all(theta[30:] == theta[30])
    assert theta[30] == pytest.approx(vartheta(Ell.XINV, 0.0, model), rel=1e-10)


def test_sample_source_reads_identity_ell_from_xi_hat():
    model = build_setting("ii", 100, 200)
    sample = sample_covariance(generate_data(model, 4))
    r, est, st = fit_estimators(sample, r=1)
    np.testing.assert_array_equal(estimated_theta(Ell.X, sample, est, st, stieltjes="sample"),
                                  estimated_xi_curve(sample, st))
    with pytest.raises(DomainError, match="Stieltjes source"):
        estimated_theta(Ell.X, sample, est, st, stieltjes="smoothed")


def test_fitted_law_is_unit_mean():
    est = EstimatedSpectrum(np.array([4.0, 2.0, 2.0, 0.004]), "oracle")
    law, scale = est.fitted_law(8)
    assert scale == pytest.approx(2.001)
    assert np.mean(law.sigmas) == pytest.approx(1.0)
    np.testing.assert_allclose(law.sigmas * scale, est.sigma_hat)
