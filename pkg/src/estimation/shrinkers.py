"""Data-driven shrinkers and the shrunken covariance/precision matrices.

Spikes use ψ̂ᵢ(ℓ, ε), bulk indices use ϑ̂ᵢ(ℓ, ε) evaluated at λ̃ᵢ and the
structural zero block (p > n) shares ϑ̂₀(ℓ, ε).
"""

from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple, Union
import logging

import numpy as np
import pandas as pd

from ..config import settings
from ..errors import DomainError, EstimationError
from ..mp_law.table import MPLawTable
from ..shrinkage.losses import Ell, EllLike, LossKind, as_ell, ell_moments, loss_value, shrinker_from_moments
from ..shrinkage.theory import asymptotic_risk, theta_vector
from ..spectral.population import PopulationSpectrum, SampleSpectrum, SpikedModel
from .spectrum import (
    EstimatedSpectrum,
    SampleStieltjes,
    estimate_population_spectrum,
    estimate_rank,
    sample_stieltjes,
    truncation_indices,
)

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["index", "empirical", "estimated", "theoretical", "loss", "ell"]
FLOAT_FORMAT = "%.10g"


def _ell_name(ell: EllLike) -> str:
    return ell.value if isinstance(ell, Ell) else getattr(ell, "__name__", "custom")


def _ell_of(ell: EllLike, values: np.ndarray, what: str) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if isinstance(ell, Ell) and ell.needs_positive and np.any(values <= 0):
        raise EstimationError(f"ℓ = {ell.value} needs positive {what}, got min {values.min():.4g}")
    return np.asarray(ell(values), dtype=np.float64)


def _eps(eps: Optional[float]) -> float:
    eps = settings.SHRINK_EPS if eps is None else eps
    if eps <= 0:
        raise DomainError(f"eps must be positive, got {eps}")
    return eps


def _k_plus(est: EstimatedSpectrum, eps: float) -> int:
    above = np.flatnonzero(est.sigma_hat >= eps)
    return int(above[-1] + 1) if above.size else 0


STIELTJES_SOURCES = ("fitted", "sample")


def _source(stieltjes: Optional[str]) -> str:
    stieltjes = settings.BULK_STIELTJES if stieltjes is None else stieltjes
    if stieltjes not in STIELTJES_SOURCES:
        raise DomainError(f"bulk Stieltjes source must be one of {STIELTJES_SOURCES}, got '{stieltjes}'")
    return stieltjes


def _bulk_m(est: EstimatedSpectrum, st: SampleStieltjes, x: np.ndarray, stieltjes: str) -> np.ndarray:
    """m at positive x: boundary values of the fitted law, or the sample m̂(x + iη)"""
    if stieltjes == "fitted":
        return np.atleast_1d(est.m_real(x, st.n)).astype(np.complex128)
    return np.atleast_1d(st.m_at(x))


def _zero_m(est: EstimatedSpectrum, st: SampleStieltjes, stieltjes: str) -> float:
    return est.m_zero(st.n) if stieltjes == "fitted" else st.m0


def _phi_hat_weights(st: SampleStieltjes, sigma: np.ndarray, x, m: Optional[np.ndarray] = None,
                     m0: Optional[float] = None) -> np.ndarray:
    """φ̂ⱼ(x) for every σ̂ⱼ in sigma; one row per x"""
    sigma = np.asarray(sigma, dtype=np.float64)
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if np.any(x < 0):
        raise DomainError("φ̂ is defined for x >= 0")
    out = np.empty((x.size, sigma.size))

    zero = x == 0.0
    if np.any(zero):
        if st.c <= 1.0:
            raise DomainError(f"φ̂ at x = 0 needs p/n > 1, got {st.c:.4f}")
        m0 = st.m0 if m0 is None else m0
        out[zero] = 1.0 / ((1.0 - 1.0 / st.c) * (1.0 + m0 * sigma))
    if np.any(~zero):
        xs = x[~zero]
        ms = np.atleast_1d(st.m_at(xs)) if m is None else np.atleast_1d(m)[~zero]
        out[~zero] = st.c * sigma / (xs[:, None] * np.abs(1.0 + np.multiply.outer(ms, sigma)) ** 2)
    return out


def estimate_phi_hat_fn(sample: SampleSpectrum, est: EstimatedSpectrum, st: SampleStieltjes,
                        j: int, x: float) -> float:
    """φ̂ⱼ(x) = c σ̂ⱼ/(x|1 + m̂(x)σ̂ⱼ|²), and (1 − 1/c)⁻¹/(1 + m̂₀σ̂ⱼ) at x = 0"""
    if not st.r < j <= sample.p:
        raise DomainError(f"φ̂ⱼ needs r < j <= p, got j={j} with r={st.r}")
    return float(_phi_hat_weights(st, est.sigma_hat[j - 1: j], x)[0, 0])


def estimate_phi_hat_curve(st: SampleStieltjes, est: EstimatedSpectrum, overlaps: np.ndarray,
                           xs: np.ndarray) -> np.ndarray:
    """Σⱼ (v·vⱼ)² φ̂ⱼ(x) along xs, the data-driven eigenvector variance profile"""
    overlaps = np.asarray(overlaps, dtype=np.float64)
    if overlaps.shape != est.sigma_hat.shape:
        raise DomainError(f"need {est.p} squared overlaps, got {overlaps.size}")
    return _phi_hat_weights(st, est.sigma_hat, xs) @ overlaps


def estimate_psi_hat(i: int, ell: EllLike, sample: SampleSpectrum, est: EstimatedSpectrum,
                     st: SampleStieltjes, eps: Optional[float] = None) -> float:
    """ψ̂ᵢ(ℓ, ε) = 𝔟̂ᵢ(ℓ(σ̃̂ᵢ)/σ̃̂ᵢ + 𝔞̂ᵢ m̂′ᵢ,₀(ε)) for a spike index i ≤ r"""
    ell = as_ell(ell)
    eps = _eps(eps)
    r, p = st.r, sample.p
    if not 1 <= i <= r:
        raise DomainError(f"ψ̂ needs a spike index 1 <= i <= {r}, got {i}")

    k_plus, k_minus = truncation_indices(eps, est, float(st.m_hat[r - 1]))
    start, stop = max(r + 1, k_minus), min(p, k_plus)
    if start > stop:
        raise EstimationError(
            f"empty truncated range for ψ̂{i}: (r+1)∨K⁻ = {start} > p∧K⁺ = {stop}"
        )

    k = i - 1
    a, m, mp, b = st.a_hat[k], st.m_hat[k], st.m_hat_prime[k], st.b_hat[k]
    sigma_tilde = st.sigma_tilde_hat[k]
    sigma = est.sigma_hat[start - 1: stop]
    total = np.sum(_ell_of(ell, sigma, "σ̂") * sigma / (1.0 + m * sigma) ** 2)
    m_dot = mp / (sample.n * a) * total
    head = _ell_of(ell, np.array([sigma_tilde]), f"σ̃̂{i}")[0] / sigma_tilde
    return float(b * (head + a * m_dot))


def _vartheta_rows(ell: EllLike, est: EstimatedSpectrum, st: SampleStieltjes, x: np.ndarray,
                   eps: float, truncate: bool, stieltjes: str = "sample") -> np.ndarray:
    r = st.r
    stop = min(est.p, _k_plus(est, eps))
    if stop <= r:
        raise EstimationError(f"empty bulk range for ϑ̂: p∧K⁺ = {stop} <= r = {r}")
    sigma = est.sigma_hat[r:stop]
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    m = np.zeros(x.size, dtype=np.complex128)
    positive = x > 0
    if np.any(positive):
        m[positive] = _bulk_m(est, st, x[positive], stieltjes)
    m0 = _zero_m(est, st, stieltjes) if np.any(~positive) else None
    weights = _phi_hat_weights(st, sigma, x, m=m, m0=m0)
    if truncate:
        weights = np.where(np.abs(1.0 + np.multiply.outer(m, sigma)) >= eps, weights, 0.0)
    return weights @ _ell_of(ell, sigma, "σ̂") / est.p


def estimate_vartheta_hat(i: int, ell: EllLike, sample: SampleSpectrum, est: EstimatedSpectrum,
                          st: SampleStieltjes, eps: Optional[float] = None,
                          stieltjes: Optional[str] = None) -> float:
    """ϑ̂ᵢ(ℓ, ε) at λ̃ᵢ for a bulk index r < i ≤ K, or ϑ̂₀(ℓ, ε) for i = 0"""
    ell = as_ell(ell)
    eps = _eps(eps)
    stieltjes = _source(stieltjes)
    if i == 0:
        return float(_vartheta_rows(ell, est, st, np.zeros(1), eps, False, stieltjes)[0])
    if not st.r < i <= sample.K:
        raise DomainError(f"ϑ̂ needs r < i <= K={sample.K} or i = 0, got {i}")
    x = sample.eigenvalues[i - 1]
    if x <= 0:
        raise EstimationError(f"bulk eigenvalue λ̃{i} = {x:.3g} is not positive")
    return float(_vartheta_rows(ell, est, st, np.array([x]), eps, True, stieltjes)[0])


def estimated_theta(ell: EllLike, sample: SampleSpectrum, est: EstimatedSpectrum,
                    st: SampleStieltjes, eps: Optional[float] = None,
                    stieltjes: Optional[str] = None) -> np.ndarray:
    """θ̂₁(ℓ), …, θ̂_p(ℓ): ψ̂ for spikes, ϑ̂ along the bulk and ϑ̂₀ on the zero block

    With the sample Stieltjes source ℓ(x) = x is read off ξ̂ and 𝔟̂ζ̂ instead.
    """
    ell = as_ell(ell)
    eps = _eps(eps)
    stieltjes = _source(stieltjes)
    if ell is Ell.X and stieltjes == "sample":
        return estimated_xi_curve(sample, st)

    r, K, p = st.r, sample.K, sample.p
    out = np.empty(p)
    for i in range(1, r + 1):
        out[i - 1] = estimate_psi_hat(i, ell, sample, est, st, eps)

    bulk = sample.eigenvalues[r:K]
    if np.any(bulk <= 0):
        raise EstimationError(f"{int(np.sum(bulk <= 0))} bulk eigenvalues are not positive")
    out[r:K] = _vartheta_rows(ell, est, st, bulk, eps, True, stieltjes)
    if K < p:
        out[K:] = _vartheta_rows(ell, est, st, np.zeros(1), eps, False, stieltjes)[0]
    if not np.all(np.isfinite(out)):
        raise EstimationError(f"non-finite estimated shrinker for ℓ = {_ell_name(ell)}")
    return out


def estimate_xi_zeta_hat(sample: SampleSpectrum, st: SampleStieltjes, i: int) -> float:
    """𝔟̂ᵢζ̂ᵢ for a spike, ξ̂ᵢ = 1/(λ̃ᵢ|m̂(λ̃ᵢ)|²) for the bulk, ξ̂₀ = 1/((c−1)m̂₀) beyond K"""
    r, K = st.r, sample.K
    if 1 <= i <= r:
        k = i - 1
        zeta = st.m_hat_prime[k] / abs(st.m_hat[k]) ** 2
        return float(st.b_hat[k] * zeta)
    if r < i <= K:
        x = sample.eigenvalues[i - 1]
        if x <= 0:
            raise EstimationError(f"bulk eigenvalue λ̃{i} = {x:.3g} is not positive")
        return float(1.0 / (x * abs(st.m_at(x)) ** 2))
    if i == 0 or K < i <= sample.p:
        if st.c <= 1.0:
            raise DomainError(f"ξ̂₀ needs p/n > 1, got {st.c:.4f}")
        return float(1.0 / ((st.c - 1.0) * st.m0))
    raise DomainError(f"index {i} is outside 0..{sample.p}")


def estimated_xi_curve(sample: SampleSpectrum, st: SampleStieltjes) -> np.ndarray:
    """ℓ(x) = x estimates that skip σ̂ entirely"""
    r, K, p = st.r, sample.K, sample.p
    out = np.empty(p)
    for i in range(1, r + 1):
        out[i - 1] = estimate_xi_zeta_hat(sample, st, i)
    bulk = sample.eigenvalues[r:K]
    out[r:K] = 1.0 / (bulk * np.abs(np.atleast_1d(st.m_at(bulk))) ** 2)
    if K < p:
        out[K:] = estimate_xi_zeta_hat(sample, st, 0)
    return out


def estimate_shrinkers(loss: LossKind, sample: SampleSpectrum, est: EstimatedSpectrum,
                       st: SampleStieltjes, eps: Optional[float] = None,
                       stieltjes: Optional[str] = None) -> np.ndarray:
    moments = {ell: estimated_theta(ell, sample, est, st, eps, stieltjes) for ell in loss.ell_set}
    return np.asarray(shrinker_from_moments(loss, moments))


def empirical_shrinker(sample: SampleSpectrum, Sigma: np.ndarray, ell: EllLike) -> np.ndarray:
    """uᵢᵀℓ(Σ)uᵢ with the trace average over the zero block"""
    return ell_moments(Sigma, sample.basis, as_ell(ell), sample.K)


def fit_estimators(sample: SampleSpectrum, r: Optional[int] = None, method: str = "moment",
                   truth: Optional[Union[PopulationSpectrum, np.ndarray]] = None,
                   eta: Optional[float] = None) -> Tuple[int, EstimatedSpectrum, SampleStieltjes]:
    """Rank, non-spiked spectrum and Stieltjes sums needed by every shrinker estimate"""
    r = estimate_rank(sample) if r is None else r
    est = estimate_population_spectrum(sample, r, method=method, truth=truth)
    st = sample_stieltjes(sample, r, eta=eta)
    bad = np.flatnonzero(st.b_hat <= 0)
    if bad.size:
        logger.warning(f"Spikes {(bad + 1).tolist()} have nonpositive 𝔟̂; rank may be overestimated")
    return r, est, st


@dataclass(frozen=True)
class ShrunkenMatrix:
    """Σ̃ = Σ φᵢ uᵢuᵢᵀ, or Ω̃ with the reciprocal shrinkers for a precision target"""

    basis: np.ndarray
    phi: np.ndarray
    target: str = "covariance"

    @property
    def matrix(self) -> np.ndarray:
        M = (self.basis * self.phi) @ self.basis.T
        return 0.5 * (M + M.T)


def assemble_shrunken(sample: SampleSpectrum, loss: LossKind, phi_hat: np.ndarray,
                      target: str = "covariance") -> ShrunkenMatrix:
    if target not in ("covariance", "precision"):
        raise DomainError(f"target must be covariance or precision, got '{target}'")
    phi = np.array(phi_hat, dtype=np.float64)
    p, K = sample.p, sample.K
    if phi.shape != (p,):
        raise DomainError(f"need {p} shrinkers, got shape {phi.shape}")

    if K < p and np.ptp(phi[K:]) > 1e-12 * max(1.0, np.abs(phi[K:]).max()):
        logger.warning("Zero-block shrinkers differ; replacing them by their mean")
        phi[K:] = phi[K:].mean()

    if target == "precision" or loss is not LossKind.FROBENIUS:
        bad = np.flatnonzero(~(phi > 0))
        if bad.size:
            raise EstimationError(
                f"{loss.value} needs positive shrinkers; index {int(bad[0]) + 1} has {phi[bad[0]]:.4g}"
            )
    if target == "precision":
        phi = 1.0 / phi
    return ShrunkenMatrix(basis=sample.basis, phi=phi, target=target)


@dataclass(frozen=True)
class ShrinkerReport:
    loss: LossKind
    records: pd.DataFrame
    K: int
    risk_pred: Optional[float] = None
    risk_emp: Optional[float] = None

    @property
    def zero_block(self) -> Optional[pd.DataFrame]:
        rows = self.records[self.records["index"] > self.K]
        return None if rows.empty else rows

    def column(self, name: str, ell: Union[Ell, str]) -> np.ndarray:
        key = as_ell(ell)
        key = key.value if isinstance(key, Ell) else str(key)
        return self.records.loc[self.records["ell"] == key, name].to_numpy(dtype=np.float64)

    def to_csv(self, path) -> None:
        self.records.to_csv(path, index=False, float_format=FLOAT_FORMAT)


def build_shrinker_report(sample: SampleSpectrum, loss: LossKind, est: EstimatedSpectrum,
                          st: SampleStieltjes, eps: Optional[float] = None,
                          model: Optional[SpikedModel] = None, mp: Optional[MPLawTable] = None,
                          ells: Optional[Sequence[EllLike]] = None,
                          stieltjes: Optional[str] = None) -> ShrinkerReport:
    """Estimated, empirical and theoretical shrinker moments per index and ℓ

    Empirical values need the truth (``model``) and the sample eigenvectors;
    theoretical values need the model and its MP table.
    """
    ells = [as_ell(e) for e in (loss.ell_set if ells is None else ells)]
    p = sample.p
    Sigma = model.covariance() if model is not None and sample.eigenvectors is not None else None

    frames = []
    estimated: Dict[Ell, np.ndarray] = {}
    theoretical: Dict[Ell, np.ndarray] = {}
    for ell in ells:
        est_values = estimated_theta(ell, sample, est, st, eps, stieltjes)
        emp_values = empirical_shrinker(sample, Sigma, ell) if Sigma is not None else np.full(p, np.nan)
        theo_values = theta_vector(model, mp, ell) if model is not None and mp is not None else np.full(p, np.nan)
        estimated[ell] = est_values
        theoretical[ell] = theo_values
        frames.append(pd.DataFrame({
            "index": np.arange(1, p + 1),
            "empirical": emp_values,
            "estimated": est_values,
            "theoretical": theo_values,
            "loss": loss.value,
            "ell": _ell_name(ell),
        }))
    records = pd.concat(frames, ignore_index=True)[REPORT_COLUMNS]

    risk_pred = risk_emp = None
    if model is not None and mp is not None and set(loss.ell_set) <= set(theoretical):
        risk_pred = asymptotic_risk(loss, {e: theoretical[e] for e in loss.ell_set}, model)
    if Sigma is not None and set(loss.ell_set) <= set(estimated):
        phi = shrinker_from_moments(loss, {e: estimated[e] for e in loss.ell_set})
        try:
            shrunken = assemble_shrunken(sample, loss, phi)
            risk_emp = loss_value(loss, Sigma, shrunken.matrix)
        except (EstimationError, DomainError) as e:
            logger.warning(f"Empirical {loss.value} risk unavailable: {e}")

    return ShrinkerReport(loss=loss, records=records, K=sample.K, risk_pred=risk_pred, risk_emp=risk_emp)
