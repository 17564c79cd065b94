"""Sample-side estimates: rank, non-spiked population spectrum and Stieltjes sums."""

from dataclasses import dataclass, field
from functools import lru_cache
from math import factorial
from typing import Dict, Iterator, List, Optional, Tuple, Union
import logging

import numpy as np
from scipy.optimize import nnls

from ..config import settings
from ..errors import DomainError, EstimationError, ShrinkageError
from ..mp_law.stieltjes import boundary_values, solve_m_at_zero
from ..mp_law.table import UpperEdge, upper_edge
from ..spectral.population import PopulationSpectrum, SampleSpectrum

logger = logging.getLogger(__name__)

RANK_MIN_N = 50
MOMENT_MIN_N = 100
COLLISION_TOL = 1e-12


def _gap_rank(lam: np.ndarray, n: int, omega: float, eps0: float, top: int) -> int:
    """Largest j ≤ top with λ̃ⱼ > λ̃_{j+1} + ω n^{−2/3+ε₀} and a gap above n^{−1/2}"""
    gaps = lam[:top] - lam[1: top + 1]
    hits = np.flatnonzero((gaps > omega * n ** (-2.0 / 3.0 + eps0)) & (gaps > n ** -0.5))
    return int(hits[-1] + 1) if hits.size else 0


def bulk_edge(sample: SampleSpectrum, r: int) -> UpperEdge:
    """Upper edge and edge spacing of the law fitted to the eigenvalues past the first r"""
    est = estimate_population_spectrum(sample, r, method="moment")
    law, scale = est.fitted_law(sample.n)
    edge = upper_edge(law)
    return UpperEdge(lambda_plus=edge.lambda_plus * scale, b1=edge.b1 / scale,
                     curvature=edge.curvature * scale ** 3, spacing=edge.spacing * scale)


def estimate_rank(sample: SampleSpectrum, omega: Optional[float] = None,
                  eps0: Optional[float] = None, r_max: Optional[int] = None,
                  edge_omega: Optional[float] = None) -> int:
    """Number of outliers separated from the bulk

    The gap rule takes the largest j ≤ r_max with
    λ̃ⱼ − λ̃_{j+1} > ω n^{−2/3+ε₀} and λ̃ⱼ − λ̃_{j+1} > n^{−1/2}. For n ≥ 100
    each candidate must also clear the upper edge λ̂₊ of the law fitted to
    the remaining eigenvalues by edge_omega times the edge spacing; the
    count above that threshold is refitted until it stops changing.
    """
    omega = settings.RANK_OMEGA if omega is None else omega
    eps0 = settings.RANK_EPS0 if eps0 is None else eps0
    r_max = settings.RANK_MAX if r_max is None else r_max
    edge_omega = settings.RANK_EDGE_OMEGA if edge_omega is None else edge_omega
    n = sample.n
    if n < RANK_MIN_N:
        raise DomainError(f"rank estimation needs n >= {RANK_MIN_N}, got n={n}")

    lam = sample.eigenvalues[: sample.K]
    top = min(r_max, sample.K - 1)
    if top < 1:
        return 0
    r_gap = _gap_rank(lam, n, omega, eps0, top)
    if n < MOMENT_MIN_N or lam[top] <= 0:
        logger.debug(f"Estimated rank {r_gap} from the gap rule alone")
        return r_gap

    ratios = lam[:top] / lam[1: top + 1]
    r_hat = max(r_gap, int(np.argmax(ratios)) + 1)
    for _ in range(settings.RANK_ITERATIONS):
        try:
            edge = bulk_edge(sample, r_hat)
        except ShrinkageError as e:
            logger.warning(f"Bulk edge fit failed at r={r_hat} ({e}); keeping the gap rule")
            return r_gap
        threshold = edge.lambda_plus + edge_omega * edge.spacing
        r_next = int(np.count_nonzero(lam[:top] > threshold))
        if r_next == r_hat:
            break
        r_hat = r_next
    logger.debug(f"Estimated rank {r_hat} (gap rule {r_gap}) against edge {threshold:.4f}")
    return r_hat


@dataclass(frozen=True)
class SampleStieltjes:
    """Sample sums for the spikes and the bulk Stieltjes transform m̂"""

    r: int
    n: int
    p: int
    eta: float
    bulk: np.ndarray
    m_hat: np.ndarray
    m_hat_prime: np.ndarray
    a_hat: np.ndarray
    b_hat: np.ndarray
    sigma_tilde_hat: np.ndarray

    @property
    def c(self) -> float:
        return self.p / self.n

    def m_at(self, x, eta: Optional[float] = None) -> np.ndarray:
        """m̂(x) = (1/n) Σ_{j>r} 1/(λ̃ⱼ − x − iη)"""
        eta = self.eta if eta is None else eta
        x = np.asarray(x, dtype=np.float64)
        values = (1.0 / (self.bulk[None, :] - x.reshape(-1, 1) - 1j * eta)).sum(axis=1) / self.n
        return values.reshape(x.shape) if x.ndim else complex(values[0])

    @property
    def m0(self) -> float:
        """m̂₀ = Re (1/n) Σ_{j>r} 1/(λ̃ⱼ − iη)"""
        return float(np.real(np.sum(1.0 / (self.bulk - 1j * self.eta)) / self.n))


def sample_stieltjes(sample: SampleSpectrum, r: int, eta: Optional[float] = None) -> SampleStieltjes:
    """m̂ᵢ, m̂′ᵢ, 𝔞̂ᵢ, 𝔟̂ᵢ, σ̃̂ᵢ for i ≤ r and the bulk sums with η = n^{−1/2}"""
    if not 0 <= r < sample.K:
        raise DomainError(f"need 0 <= r < K={sample.K}, got r={r}")
    n = sample.n
    eta = n ** -0.5 if eta is None else eta

    padded = sample.padded
    bulk = padded[r:]
    a_hat = padded[:r].copy()
    diff = bulk[None, :] - a_hat[:, None]
    if diff.size and np.min(np.abs(diff)) < COLLISION_TOL:
        i, j = np.unravel_index(np.argmin(np.abs(diff)), diff.shape)
        raise EstimationError(
            f"outlier {i + 1} at {a_hat[i]:.6g} collides with bulk eigenvalue {j + r + 1}"
        )
    m_hat = (1.0 / diff).sum(axis=1) / n
    m_hat_prime = (1.0 / diff ** 2).sum(axis=1) / n
    b_hat = 1.0 / (a_hat * m_hat_prime)
    sigma_tilde_hat = -1.0 / m_hat

    return SampleStieltjes(r=r, n=n, p=sample.p, eta=eta, bulk=bulk, m_hat=m_hat,
                           m_hat_prime=m_hat_prime, a_hat=a_hat, b_hat=b_hat,
                           sigma_tilde_hat=sigma_tilde_hat)


@dataclass(frozen=True)
class EstimatedSpectrum:
    sigma_hat: np.ndarray
    method: str
    diagnostics: Dict[str, Union[float, List[float]]] = field(default_factory=dict)
    fallback: bool = False

    def __post_init__(self):
        sigma = np.asarray(self.sigma_hat, dtype=np.float64)
        if np.any(sigma <= 0) or np.any(np.diff(sigma) > 0):
            raise EstimationError("estimated spectrum must be positive and descending")
        object.__setattr__(self, "sigma_hat", sigma)

    @property
    def p(self) -> int:
        return int(self.sigma_hat.size)

    def fitted_law(self, n: int) -> Tuple[PopulationSpectrum, float]:
        """Unit-mean law σ̂/s and its scale s, outside the model validation bounds"""
        scale = float(np.mean(self.sigma_hat))
        unit = self.sigma_hat / scale
        tau = min(settings.TAU_SPECTRUM, 0.5 * float(unit[-1]), 0.5 / float(unit[0]))
        return PopulationSpectrum(unit, n, tau=tau, ratio_tau=0.0), scale

    def m_real(self, x, n: int) -> np.ndarray:
        """Boundary values m(x) of the fitted law on positive reals"""
        law, scale = self.fitted_law(n)
        x = np.asarray(x, dtype=np.float64)
        return boundary_values(x.reshape(-1) / scale, law).reshape(x.shape) / scale

    def m_zero(self, n: int) -> float:
        """m(0) of the fitted law, defined for p > n"""
        law, scale = self.fitted_law(n)
        return solve_m_at_zero(law) / scale


def _partitions(k: int, largest: Optional[int] = None) -> Iterator[Tuple[int, ...]]:
    """Integer partitions of k as non-increasing tuples"""
    largest = k if largest is None else largest
    if k == 0:
        yield ()
        return
    for part in range(min(k, largest), 0, -1):
        for rest in _partitions(k - part, part):
            yield (part,) + rest


@lru_cache(maxsize=None)
def _free_poisson_terms(k: int) -> Tuple[Tuple[Tuple[int, ...], int], ...]:
    """(multiplicities i₁..i_k, combinatorial weight) for the k-th sample moment"""
    terms = []
    for partition in _partitions(k):
        mult = tuple(partition.count(j) for j in range(1, k + 1))
        blocks = sum(mult)
        weight = factorial(k)
        for count in mult:
            weight //= factorial(count)
        weight //= factorial(k + 1 - blocks)
        terms.append((mult, weight))
    return tuple(terms)


def population_moments(sample_moments: np.ndarray, c: float) -> np.ndarray:
    """Invert βₖ = Σ c^{Σi−1} k!/(i₁!⋯iₖ!(k+1−Σi)!) Π αⱼ^{iⱼ} for α₁, α₂, …"""
    count = sample_moments.size
    alpha = np.zeros(count)
    for k in range(1, count + 1):
        rest = 0.0
        for mult, weight in _free_poisson_terms(k):
            if mult[k - 1] == 1:
                continue
            blocks = sum(mult)
            term = weight * c ** (blocks - 1)
            for j, power in enumerate(mult[: k - 1], start=1):
                if power:
                    term *= alpha[j - 1] ** power
            rest += term
        alpha[k - 1] = sample_moments[k - 1] - rest
    return alpha


def _identity_fallback(sample: SampleSpectrum, r: int, reason: str) -> EstimatedSpectrum:
    logger.warning(f"Moment fit infeasible ({reason}); using an identity-scaled spectrum")
    lam = sample.eigenvalues[r:]
    scale = float(np.sum(lam) / (sample.p - r)) if np.sum(lam) > 0 else 1.0
    return EstimatedSpectrum(np.full(sample.p, scale), "moment", {"reason": reason}, fallback=True)


def estimate_population_spectrum(sample: SampleSpectrum, r: int, method: str = "moment",
                                 truth: Optional[Union[PopulationSpectrum, np.ndarray]] = None,
                                 n_moments: Optional[int] = None,
                                 grid_size: Optional[int] = None) -> EstimatedSpectrum:
    """Estimate the non-spiked eigenvalues σ̂₁ ≥ … ≥ σ̂_p

    ``moment`` matches the first population moments recovered from the
    sample moments with a nonnegative mixture on a grid; ``oracle`` copies
    the truth.
    """
    if method == "oracle":
        if truth is None:
            raise DomainError("oracle spectrum estimation needs the true spectrum")
        sigmas = truth.sigmas if isinstance(truth, PopulationSpectrum) else np.asarray(truth)
        return EstimatedSpectrum(np.array(sigmas, dtype=np.float64), "oracle")
    if method != "moment":
        raise DomainError(f"Unknown spectrum estimation method '{method}'")

    n_moments = settings.MOMENT_COUNT if n_moments is None else n_moments
    grid_size = settings.MOMENT_GRID if grid_size is None else grid_size
    if sample.n < MOMENT_MIN_N:
        raise DomainError(f"moment estimation needs n >= {MOMENT_MIN_N}, got n={sample.n}")

    p, c = sample.p, sample.c
    if not 0 <= r < p:
        raise DomainError(f"need 0 <= r < p={p}, got r={r}")
    lam = sample.eigenvalues[r:]
    positive = lam[lam > 0]
    if positive.size == 0:
        return _identity_fallback(sample, r, "no positive eigenvalues")

    # the bulk ESD carries p − r eigenvalues
    scale = float(np.sum(lam) / (p - r))
    scaled = lam / scale
    beta = np.array([np.sum(scaled ** k) / (p - r) for k in range(1, n_moments + 1)])
    alpha = population_moments(beta, c)
    if np.any(alpha[1::2] <= 0) or alpha[0] <= 0:
        return _identity_fallback(sample, r, f"nonpositive moment estimates {np.round(alpha, 4).tolist()}")

    low, high = 0.5 * positive[-1] / scale, 1.2 * lam[0] / scale
    grid = np.linspace(low, high, grid_size)
    powers = np.vstack([grid ** k for k in range(0, n_moments + 1)])
    target = np.concatenate([[1.0], alpha])
    weights = 1.0 / np.maximum(np.abs(target), 1e-12)
    try:
        mixture, residual = nnls(powers * weights[:, None], target * weights)
    except RuntimeError as e:
        return _identity_fallback(sample, r, f"nnls failed: {e}")

    if mixture.sum() <= 0:
        return _identity_fallback(sample, r, "empty mixture")
    mixture = mixture / mixture.sum()
    fitted = powers @ mixture
    relative = np.abs(fitted[1:] - alpha) / np.abs(alpha)
    if relative[0] > 0.05 or relative[1] > 0.05:
        return _identity_fallback(sample, r, f"first moments missed by {relative[:2].round(4).tolist()}")

    # quantile function of the fitted measure at levels (j − ½)/p from the top
    order = np.argsort(grid)[::-1]
    atoms, masses = grid[order], mixture[order]
    cumulative = np.cumsum(masses)
    levels = (np.arange(1, p + 1) - 0.5) / p
    idx = np.minimum(np.searchsorted(cumulative, levels, side="left"), atoms.size - 1)
    sigma_hat = atoms[idx] * scale

    diagnostics = {
        "moment_residual": float(residual),
        "relative_errors": relative.tolist(),
        "population_moments": (alpha * scale ** np.arange(1, n_moments + 1)).tolist(),
    }
    logger.debug(f"Moment fit used {np.count_nonzero(mixture)} atoms, residual {residual:.3e}")
    return EstimatedSpectrum(sigma_hat, "moment", diagnostics)


def truncation_indices(eps: float, spectrum: Union[EstimatedSpectrum, np.ndarray],
                       m_hat_r: float) -> Tuple[int, int]:
    """(K⁺ε, K⁻ε) with K⁺ε = max{j: σ̂ⱼ ≥ ε} and K⁻ε = min{j: σ̂ⱼ ≤ −1/m̂_r − ε}, 1-based"""
    if eps <= 0:
        raise DomainError(f"truncation needs eps > 0, got {eps}")
    sigma = spectrum.sigma_hat if isinstance(spectrum, EstimatedSpectrum) else np.asarray(spectrum)
    p = sigma.size
    above = np.flatnonzero(sigma >= eps)
    k_plus = int(above[-1] + 1) if above.size else 0
    below = np.flatnonzero(sigma <= -1.0 / m_hat_r - eps)
    k_minus = int(below[0] + 1) if below.size else p + 1
    return k_plus, k_minus
