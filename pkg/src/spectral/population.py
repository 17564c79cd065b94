"""Population and sample spectra for the (spiked) covariance model.

The non-spiked population covariance is Σ₀ = V diag(σ) Vᵀ; the spiked one
replaces the first r eigenvalues by σ̃ᵢ = (1 + dᵢ)σᵢ on the same eigenbasis.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence, Tuple
import logging

import numpy as np

from ..config import settings
from ..errors import DomainError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PopulationSpectrum:
    """Non-spiked eigenvalues σ₁ ≥ … ≥ σ_p > 0 with sample size n"""

    sigmas: np.ndarray
    n: int
    tau: Optional[float] = None
    ratio_tau: Optional[float] = None

    def __post_init__(self):
        sigmas = np.array(self.sigmas, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "sigmas", sigmas)
        sigmas.setflags(write=False)

        if self.n < 1 or sigmas.size < 1:
            raise DomainError(f"need n >= 1 and p >= 1, got n={self.n}, p={sigmas.size}")
        if not np.all(np.isfinite(sigmas)):
            raise DomainError("population eigenvalues must be finite")
        if np.any(np.diff(sigmas) > 0):
            raise DomainError("population eigenvalues must be sorted in descending order")

        tau = settings.TAU_SPECTRUM if self.tau is None else self.tau
        if sigmas[-1] < tau or sigmas[0] > 1.0 / tau:
            raise DomainError(
                f"population eigenvalues must lie in [{tau:g}, {1.0 / tau:g}], "
                f"got [{sigmas[-1]:g}, {sigmas[0]:g}]"
            )

        ratio_tau = settings.TAU_RATIO if self.ratio_tau is None else self.ratio_tau
        if abs(self.c - 1.0) < ratio_tau:
            raise DomainError(
                f"aspect ratio p/n = {self.c:.4f} is within {ratio_tau} of 1 (hard edge)"
            )

    @classmethod
    def from_values(cls, values: Sequence[float], n: int, **kwargs) -> "PopulationSpectrum":
        """Build from unsorted values"""
        return cls(np.sort(np.asarray(values, dtype=np.float64))[::-1].copy(), n, **kwargs)

    @property
    def p(self) -> int:
        return int(self.sigmas.size)

    @property
    def c(self) -> float:
        return self.p / self.n

    @property
    def K(self) -> int:
        return min(self.p, self.n)

    @cached_property
    def atoms(self) -> Tuple[np.ndarray, np.ndarray]:
        """Distinct eigenvalues and their multiplicities, descending"""
        values, counts = np.unique(self.sigmas, return_counts=True)
        return values[::-1].copy(), counts[::-1].astype(np.float64)

    def scaled(self, factor: float) -> "PopulationSpectrum":
        return PopulationSpectrum(self.sigmas * factor, self.n, tau=self.tau, ratio_tau=self.ratio_tau)


@dataclass(frozen=True)
class Spike:
    index: int
    strength: float
    value: float


@dataclass(frozen=True)
class SpikedModel:
    """Σ = V diag(σ̃) Vᵀ with σ̃ᵢ = (1 + dᵢ)σᵢ for the first r indices"""

    base: PopulationSpectrum
    spikes: Tuple[Spike, ...] = ()
    eigenbasis: Optional[np.ndarray] = None
    separation: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "spikes", tuple(self.spikes))
        p = self.base.p
        sep = settings.SPIKE_SEPARATION if self.separation is None else self.separation

        for k, spike in enumerate(self.spikes):
            if spike.index != k + 1:
                raise DomainError(f"spikes must occupy indices 1..r in order, got index {spike.index}")
            if spike.strength < 0:
                raise DomainError(f"spike strength must be nonnegative, got {spike.strength}")
            expected = (1.0 + spike.strength) * self.base.sigmas[k]
            if not np.isclose(spike.value, expected, rtol=1e-12, atol=0.0):
                raise DomainError(f"spike {spike.index} value {spike.value} != (1+d)σ = {expected}")

        values = self.spike_values
        if values.size > 1 and np.min(np.abs(np.diff(values))) <= sep:
            raise DomainError("spiked eigenvalues must be separated")
        if np.any(np.diff(self.spiked_sigmas) > 0):
            raise DomainError("spiked eigenvalues must stay in descending order")

        if self.eigenbasis is not None:
            basis = np.asarray(self.eigenbasis, dtype=np.float64)
            if basis.shape != (p, p):
                raise DomainError(f"eigenbasis must be {p}x{p}, got {basis.shape}")
            if np.max(np.abs(basis.T @ basis - np.eye(p))) > 1e-10:
                raise DomainError("eigenbasis is not orthogonal to 1e-10")
            basis.setflags(write=False)
            object.__setattr__(self, "eigenbasis", basis)

    @classmethod
    def with_spikes(cls, base: PopulationSpectrum, values: Sequence[float],
                    eigenbasis: Optional[np.ndarray] = None) -> "SpikedModel":
        """Spike the top len(values) eigenvalues to the given σ̃ᵢ"""
        spikes = []
        for k, value in enumerate(values):
            sigma = base.sigmas[k]
            spikes.append(Spike(index=k + 1, strength=value / sigma - 1.0, value=float(value)))
        return cls(base=base, spikes=tuple(spikes), eigenbasis=eigenbasis)

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def p(self) -> int:
        return self.base.p

    @property
    def r(self) -> int:
        return len(self.spikes)

    @property
    def spike_values(self) -> np.ndarray:
        return np.array([s.value for s in self.spikes], dtype=np.float64)

    @cached_property
    def spiked_sigmas(self) -> np.ndarray:
        """Eigenvalues σ̃₁ ≥ … ≥ σ̃_p of Σ"""
        values = self.base.sigmas.copy()
        values[: self.r] = self.spike_values
        return values

    @property
    def basis(self) -> np.ndarray:
        return np.eye(self.p) if self.eigenbasis is None else self.eigenbasis

    def covariance(self) -> np.ndarray:
        V = self.basis
        return (V * self.spiked_sigmas) @ V.T

    def covariance_sqrt(self) -> np.ndarray:
        V = self.basis
        return (V * np.sqrt(self.spiked_sigmas)) @ V.T

    def supercritical(self, b1: float, margin: float = 0.0) -> np.ndarray:
        """Mask of spikes with σ̃ᵢ > −1/b₁ + margin"""
        return self.spike_values > -1.0 / b1 + margin

    def without_spikes(self) -> "SpikedModel":
        return SpikedModel(base=self.base, spikes=(), eigenbasis=self.eigenbasis)


@dataclass(frozen=True)
class SampleSpectrum:
    """Eigen-decomposition of the sample covariance, eigenvalues descending"""

    eigenvalues: np.ndarray
    eigenvectors: Optional[np.ndarray]
    n: int
    p: int = field(init=False)

    def __post_init__(self):
        values = np.asarray(self.eigenvalues, dtype=np.float64)
        object.__setattr__(self, "eigenvalues", values)
        object.__setattr__(self, "p", int(values.size))
        if self.eigenvectors is not None and self.eigenvectors.shape != (values.size, values.size):
            raise DomainError("eigenvector matrix must be p x p")
        if self.n < 1 or values.size == 0:
            raise DomainError("need at least one eigenvalue and n >= 1")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise DomainError("sample eigenvalues must be finite and nonnegative")
        if np.any(np.diff(values) > 0):
            raise DomainError("sample eigenvalues must be descending")

    @classmethod
    def from_eigenvalues(cls, eigenvalues, n: int) -> "SampleSpectrum":
        """Eigenvalues only; enough for every data-driven shrinker"""
        values = np.sort(np.asarray(eigenvalues, dtype=np.float64))[::-1]
        return cls(eigenvalues=values, eigenvectors=None, n=n)

    @property
    def c(self) -> float:
        return self.p / self.n

    @property
    def K(self) -> int:
        return min(self.p, self.n)

    @cached_property
    def padded(self) -> np.ndarray:
        """The n eigenvalues of the companion n x n matrix (zero padded when p < n)"""
        if self.p >= self.n:
            return self.eigenvalues[: self.n].copy()
        return np.concatenate([self.eigenvalues, np.zeros(self.n - self.p)])

    @property
    def basis(self) -> np.ndarray:
        if self.eigenvectors is None:
            raise DomainError("sample eigenvectors are not available")
        return self.eigenvectors

    @property
    def zero_block(self) -> np.ndarray:
        """Eigenvectors of the p − n structural zero eigenvalues"""
        return self.basis[:, self.K:]
