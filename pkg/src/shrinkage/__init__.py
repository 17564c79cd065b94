from .losses import (
    Ell,
    LossKind,
    as_ell,
    ell_moments,
    exact_risk_decomposition,
    loss_value,
    matrix_function,
    optimal_shrinkers,
    shrinker_from_moments,
)
from .theory import (
    OutlierAsymptotics,
    asymptotic_risk,
    outlier_asymptotics,
    phi,
    phi_curve,
    phi_weights,
    psi,
    theta_for_loss,
    theta_limit,
    theta_vector,
    vartheta,
    xi_zeta,
    xi_zeta_outlier,
)

__all__ = [
    "Ell",
    "LossKind",
    "as_ell",
    "ell_moments",
    "exact_risk_decomposition",
    "loss_value",
    "matrix_function",
    "optimal_shrinkers",
    "shrinker_from_moments",
    "OutlierAsymptotics",
    "asymptotic_risk",
    "outlier_asymptotics",
    "phi",
    "phi_curve",
    "phi_weights",
    "psi",
    "theta_for_loss",
    "theta_limit",
    "theta_vector",
    "vartheta",
    "xi_zeta",
    "xi_zeta_outlier",
]
