"""Closed-form limits of the shrinkers under a spiked population model.

All Stieltjes quantities are those of the non-spiked law (spec = model.base);
the spiked eigenvalues σ̃ only enter through ℓ(σ̃) and the eigenbasis.
"""

from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Tuple
import logging

import numpy as np

from .losses import Ell, EllLike, LossKind
from ..errors import DomainError
from ..mp_law.stieltjes import boundary_values, h, h_prime, m_dot0, m_prime, solve_m, solve_m_at_zero
from ..mp_law.table import MPLawTable, find_edges
from ..spectral.population import SpikedModel

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OutlierAsymptotics:
    """Limits for the supercritical spikes: locations 𝔞ᵢ, companions 𝔟ᵢ and overlaps 𝔟ᵢ/σ̃ᵢ"""

    indices: np.ndarray
    spiked_values: np.ndarray
    locations: np.ndarray
    companions: np.ndarray
    subcritical: Tuple[int, ...] = ()

    @property
    def overlaps(self) -> np.ndarray:
        """Limit of |⟨uᵢ, vᵢ⟩|²"""
        return self.companions / self.spiked_values

    def __len__(self) -> int:
        return int(self.indices.size)


def outlier_asymptotics(model: SpikedModel, table: Optional[MPLawTable] = None) -> OutlierAsymptotics:
    """𝔞ᵢ = h(−1/σ̃ᵢ) and 𝔟ᵢ = h′(−1/σ̃ᵢ)/h(−1/σ̃ᵢ) for every supercritical spike"""
    spec = model.base
    if model.r == 0:
        empty = np.zeros(0)
        return OutlierAsymptotics(np.zeros(0, dtype=int), empty, empty, empty)

    table = find_edges(spec) if table is None else table
    mask = model.supercritical(table.b1)
    subcritical = tuple(int(s.index) for s, ok in zip(model.spikes, mask) if not ok)
    if subcritical:
        logger.warning(f"Spikes {list(subcritical)} are subcritical (σ̃ ≤ {-1.0 / table.b1:.4f}) and excluded")

    values = model.spike_values[mask]
    x = -1.0 / values
    a = np.asarray(h(x, spec), dtype=np.float64)
    b = np.asarray(h_prime(x, spec), dtype=np.float64) / a
    indices = np.arange(1, model.r + 1)[mask]
    return OutlierAsymptotics(indices=indices, spiked_values=values, locations=a,
                              companions=b, subcritical=subcritical)


def _m_at(x: float, model: SpikedModel) -> complex:
    if x == 0.0:
        return complex(solve_m_at_zero(model.base))
    return solve_m(x, model.base).m


def phi(w1: np.ndarray, w2: np.ndarray, x: float, model: SpikedModel,
        mp: Optional[MPLawTable] = None, m: Optional[complex] = None) -> float:
    """Eigenvector variance kernel φ(w₁, w₂, x)"""
    w1 = np.asarray(w1, dtype=np.float64)
    w2 = np.asarray(w2, dtype=np.float64)
    if w1.shape != (model.p,) or w2.shape != (model.p,):
        raise DomainError(f"vectors must have length p={model.p}")
    c = model.base.c
    sig = model.spiked_sigmas
    V = model.basis
    a, b = V.T @ w1, V.T @ w2

    if x == 0.0:
        if c <= 1.0:
            raise DomainError(f"φ at x = 0 needs p/n > 1, got {c:.4f}")
        m0 = solve_m_at_zero(model.base) if m is None else float(np.real(m))
        return float(np.sum(a * b / (1.0 + m0 * sig)) / (1.0 - 1.0 / c))
    if x < 0:
        raise DomainError(f"φ is defined for x >= 0, got {x}")

    mx = _m_at(x, model) if m is None else complex(m)
    weights = c * sig / (x * np.abs(1.0 + mx * sig) ** 2)
    return float(np.sum(a * b * weights))


def phi_weights(xs: np.ndarray, model: SpikedModel) -> np.ndarray:
    """c σ̃ⱼ/(x|1 + m(x)σ̃ⱼ|²) for x in xs (rows) and every j (columns)"""
    xs = np.atleast_1d(np.asarray(xs, dtype=np.float64))
    if np.any(xs <= 0):
        raise DomainError("φ weights need x > 0")
    sig = model.spiked_sigmas
    m = np.atleast_1d(boundary_values(xs, model.base))
    return model.base.c * sig / (xs[:, None] * np.abs(1.0 + np.multiply.outer(m, sig)) ** 2)


def phi_curve(w1: np.ndarray, w2: np.ndarray, xs: np.ndarray, model: SpikedModel) -> np.ndarray:
    """φ(w₁, w₂, x) along xs"""
    V = model.basis
    return phi_weights(xs, model) @ ((V.T @ w1) * (V.T @ w2))


def vartheta(ell: EllLike, x: float, model: SpikedModel, m: Optional[complex] = None) -> float:
    """ϑ(ℓ, x) = (1/p) Σ_{j>r} ℓ(σ̃ⱼ) φ(vⱼ, vⱼ, x)"""
    c = model.base.c
    sig = model.spiked_sigmas[model.r:]
    weights = np.asarray(ell(sig), dtype=np.float64)

    if x == 0.0:
        if c <= 1.0:
            raise DomainError(f"ϑ(ℓ, 0) needs p/n > 1, got {c:.4f}")
        m0 = solve_m_at_zero(model.base) if m is None else float(np.real(m))
        return float(np.sum(weights / (1.0 + m0 * sig)) / (1.0 - 1.0 / c) / model.p)

    mx = _m_at(x, model) if m is None else complex(m)
    return float(np.sum(weights * c * sig / (x * np.abs(1.0 + mx * sig) ** 2)) / model.p)


def psi(ell: EllLike, model: SpikedModel, outliers: OutlierAsymptotics, k: int) -> float:
    """ψᵢ(ℓ) = 𝔟ᵢ (ℓ(σ̃ᵢ)/σ̃ᵢ + 𝔞ᵢ ṁ₀(𝔞ᵢ)) for the k-th retained spike"""
    a = float(outliers.locations[k])
    b = float(outliers.companions[k])
    sigma = float(outliers.spiked_values[k])
    # m(𝔞ᵢ) = −1/σ̃ᵢ by construction
    dot = m_dot0(a, a, model.base, ell, m=-1.0 / sigma)
    return float(b * (float(np.asarray(ell(np.array([sigma])))[0]) / sigma + a * np.real(dot)))


def theta_limit(model: SpikedModel, mp: MPLawTable, ell: EllLike, i: int,
                outliers: Optional[OutlierAsymptotics] = None) -> float:
    """θᵢ(ℓ): ψᵢ for spikes, ϑ(ℓ, γ_{i−r}) for the bulk and ϑ(ℓ, 0) for i > K"""
    p, K, r = model.p, model.base.K, model.r
    if not 1 <= i <= p:
        raise DomainError(f"index must lie in 1..{p}, got {i}")
    if i <= r:
        outliers = outlier_asymptotics(model, mp) if outliers is None else outliers
        hits = np.flatnonzero(outliers.indices == i)
        if hits.size == 0:
            raise DomainError(f"spike {i} is subcritical; no outlier limit exists")
        return psi(ell, model, outliers, int(hits[0]))
    if i <= K:
        return vartheta(ell, mp.gamma(i - r), model)
    return vartheta(ell, 0.0, model)


def theta_vector(model: SpikedModel, mp: MPLawTable, ell: EllLike,
                 outliers: Optional[OutlierAsymptotics] = None) -> np.ndarray:
    """θ₁(ℓ), …, θ_p(ℓ) with the bulk Stieltjes values solved on one grid"""
    p, K, r = model.p, model.base.K, model.r
    out = np.empty(p)
    outliers = outlier_asymptotics(model, mp) if outliers is None and r else outliers

    for i in range(1, r + 1):
        hits = np.flatnonzero(outliers.indices == i)
        # a subcritical spike sticks to the bulk edge
        out[i - 1] = (psi(ell, model, outliers, int(hits[0])) if hits.size
                      else vartheta(ell, mp.lambda_plus, model))

    gammas = mp.quantiles[: K - r]
    m_bulk = boundary_values(gammas, model.base)
    c = model.base.c
    sig = model.spiked_sigmas[r:]
    weights = np.asarray(ell(sig), dtype=np.float64) * c * sig
    denom = gammas[:, None] * np.abs(1.0 + np.multiply.outer(m_bulk, sig)) ** 2
    out[r:K] = (weights / denom).sum(axis=1) / p

    if K < p:
        out[K:] = vartheta(ell, 0.0, model)
    return out


def xi_zeta(model: SpikedModel, mp: Optional[MPLawTable], x: float) -> Tuple[float, float]:
    """ξ(x) = 1/(x|m(x)|²) (ξ(0) = 1/((c−1)m(0))) and ζ(x) = m′(x)/|m(x)|²"""
    spec = model.base
    if x == 0.0:
        m0 = solve_m_at_zero(spec)
        xi = 1.0 / ((spec.c - 1.0) * m0)
        zeta = float(np.real(m_prime(0.0, spec, m=m0))) / m0 ** 2
        return float(xi), float(zeta)
    if x < 0:
        raise DomainError(f"ξ is defined for x >= 0, got {x}")
    mx = solve_m(x, spec).m
    xi = 1.0 / (x * abs(mx) ** 2)
    zeta = m_prime(x, spec, m=mx) / abs(mx) ** 2
    zeta = zeta.real if abs(zeta.imag) <= 1e-12 * max(abs(zeta), 1e-300) else zeta
    return float(xi), zeta


def xi_zeta_outlier(outliers: OutlierAsymptotics, model: SpikedModel, k: int) -> float:
    """𝔟ᵢ ζ(𝔞ᵢ), the ℓ(x) = x outlier limit"""
    sigma = float(outliers.spiked_values[k])
    m = -1.0 / sigma
    zeta = float(np.real(m_prime(outliers.locations[k], model.base, m=m))) / m ** 2
    return float(outliers.companions[k] * zeta)


def theta_for_loss(model: SpikedModel, mp: MPLawTable, loss: LossKind,
                   outliers: Optional[OutlierAsymptotics] = None) -> Dict[Ell, np.ndarray]:
    outliers = outlier_asymptotics(model, mp) if outliers is None and model.r else outliers
    return {ell: theta_vector(model, mp, ell, outliers) for ell in loss.ell_set}


def _clamped_sqrt(value: float, loss: LossKind) -> float:
    if value < 0:
        logger.warning(f"Negative radicand {value:.3e} in the {loss.value} risk clamped at 0")
        return 0.0
    return float(np.sqrt(value))


def _theta(theta: Mapping[Ell, np.ndarray], ell: Ell, loss: LossKind) -> np.ndarray:
    if ell not in theta:
        raise DomainError(f"{loss.value} risk needs θ for ℓ = {ell.value}")
    return np.asarray(theta[ell], dtype=np.float64)


def asymptotic_risk(loss: LossKind, theta: Mapping[Ell, np.ndarray], model: SpikedModel) -> float:
    """Plug-in asymptotic risk of the optimal invariant estimator (not multiplied by p)"""
    sig = model.spiked_sigmas
    p = model.p

    if loss is LossKind.FROBENIUS:
        t = _theta(theta, Ell.X, loss)
        return _clamped_sqrt(float(np.mean(sig ** 2 - t ** 2)), loss)
    if loss is LossKind.INVERSE_STEIN:
        t = _theta(theta, Ell.X, loss)
        return float(np.mean(np.log(t / sig)))
    if loss is LossKind.DISUTILITY:
        t = _theta(theta, Ell.X, loss)
        return float(1.0 - np.sum(1.0 / t) / np.sum(1.0 / sig))
    if loss is LossKind.MINIMUM_VARIANCE:
        t = _theta(theta, Ell.X, loss)
        return float(p * (1.0 / np.sum(1.0 / t) - 1.0 / np.sum(1.0 / sig)))
    if loss is LossKind.INVERSE_FROBENIUS:
        t = _theta(theta, Ell.XINV, loss)
        return _clamped_sqrt(float(np.mean(sig ** -2.0 - t ** 2)), loss)
    if loss is LossKind.STEIN:
        t = _theta(theta, Ell.XINV, loss)
        return float(np.mean(np.log(sig * t)))
    if loss is LossKind.WEIGHTED_FROBENIUS:
        t = _theta(theta, Ell.XINV, loss)
        return float(1.0 - np.sum(1.0 / t) / np.sum(sig))
    if loss is LossKind.FRECHET:
        t = _theta(theta, Ell.SQRT, loss)
        return _clamped_sqrt(float(np.mean(sig - t ** 2)), loss)
    if loss is LossKind.LOG_EUCLIDEAN:
        t = _theta(theta, Ell.LOG, loss)
        return _clamped_sqrt(float(np.mean(np.log(sig) ** 2 - t ** 2)), loss)
    if loss is LossKind.QUADRATIC:
        t1 = _theta(theta, Ell.XINV2, loss)
        t2 = _theta(theta, Ell.XINV, loss)
        return _clamped_sqrt(float(1.0 - np.mean(t2 ** 2 / t1)), loss)
    if loss is LossKind.INVERSE_QUADRATIC:
        t3 = _theta(theta, Ell.X, loss)
        t4 = _theta(theta, Ell.X2, loss)
        return _clamped_sqrt(float(1.0 - np.mean(t3 ** 2 / t4)), loss)
    t2 = _theta(theta, Ell.XINV, loss)
    t3 = _theta(theta, Ell.X, loss)
    return float(2.0 * (np.mean(np.sqrt(t2 * t3)) - 1.0))
