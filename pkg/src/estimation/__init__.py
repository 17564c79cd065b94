from .spectrum import (
    EstimatedSpectrum,
    SampleStieltjes,
    bulk_edge,
    estimate_population_spectrum,
    estimate_rank,
    population_moments,
    sample_stieltjes,
    truncation_indices,
)
from .shrinkers import (
    ShrinkerReport,
    ShrunkenMatrix,
    assemble_shrunken,
    build_shrinker_report,
    empirical_shrinker,
    estimate_phi_hat_curve,
    estimate_phi_hat_fn,
    estimate_psi_hat,
    estimate_shrinkers,
    estimate_vartheta_hat,
    estimate_xi_zeta_hat,
    estimated_theta,
    estimated_xi_curve,
    fit_estimators,
)

__all__ = [
    "EstimatedSpectrum",
    "SampleStieltjes",
    "bulk_edge",
    "estimate_population_spectrum",
    "estimate_rank",
    "population_moments",
    "sample_stieltjes",
    "truncation_indices",
    "ShrinkerReport",
    "ShrunkenMatrix",
    "assemble_shrunken",
    "build_shrinker_report",
    "empirical_shrinker",
    "estimate_phi_hat_curve",
    "estimate_phi_hat_fn",
    "estimate_psi_hat",
    "estimate_shrinkers",
    "estimate_vartheta_hat",
    "estimate_xi_zeta_hat",
    "estimated_theta",
    "estimated_xi_curve",
    "fit_estimators",
]
