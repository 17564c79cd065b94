from typing import Callable, Dict
import logging

import numpy as np
from scipy import linalg

from .population import SampleSpectrum, SpikedModel
from ..errors import ConvergenceError, DomainError

logger = logging.getLogger(__name__)

SEED_MODULUS = 2 ** 64


def make_rng(seed: int) -> np.random.Generator:
    """Generator for any 64-bit seed, negative values included"""
    return np.random.default_rng(int(seed) % SEED_MODULUS)


def _gaussian(rng: np.random.Generator, p: int, n: int) -> np.ndarray:
    return rng.standard_normal((p, n))


def _rademacher(rng: np.random.Generator, p: int, n: int) -> np.ndarray:
    return rng.choice(np.array([-1.0, 1.0]), size=(p, n))


# Standardized entry laws with zero third moment
NOISE_LAWS: Dict[str, Callable[[np.random.Generator, int, int], np.ndarray]] = {
    "gaussian": _gaussian,
    "rademacher": _rademacher,
}


def generate_data(model: SpikedModel, seed: int, dist: str = "gaussian") -> np.ndarray:
    """Draw Y = Σ^{1/2} X with X having i.i.d. entries of variance 1/n"""
    if dist not in NOISE_LAWS:
        raise DomainError(f"Unknown noise law '{dist}', choose from {sorted(NOISE_LAWS)}")

    rng = make_rng(seed)
    X = NOISE_LAWS[dist](rng, model.p, model.n) / np.sqrt(model.n)

    root = np.sqrt(model.spiked_sigmas)
    if model.eigenbasis is None:
        return root[:, None] * X
    V = model.eigenbasis
    return V @ (root[:, None] * (V.T @ X))


def random_orthogonal(p: int, seed: int) -> np.ndarray:
    """Haar orthogonal matrix from the QR of a Gaussian matrix"""
    rng = make_rng(seed)
    Q, R = np.linalg.qr(rng.standard_normal((p, p)))
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


def fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so the largest-magnitude entry of each is positive"""
    rows = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[rows, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def sample_covariance(data: np.ndarray) -> SampleSpectrum:
    """Eigendecomposition of YYᵀ, eigenvalues descending"""
    Y = np.asarray(data, dtype=np.float64)
    if Y.ndim != 2:
        raise DomainError(f"data must be a p x n matrix, got shape {Y.shape}")
    if not np.all(np.isfinite(Y)):
        raise DomainError("data contains non-finite entries")

    p, n = Y.shape
    Q = Y @ Y.T
    try:
        values, vectors = linalg.eigh(Q)
    except linalg.LinAlgError as e:
        logger.error(f"Eigensolver failed on {p}x{p} sample covariance: {e}")
        raise ConvergenceError(f"eigendecomposition failed: {e}") from e

    values = values[::-1].copy()
    vectors = fix_signs(vectors[:, ::-1])

    # numerically zero eigenvalues of a rank-deficient YYᵀ
    np.maximum(values, 0.0, out=values)
    if p > n:
        values[n:] = 0.0

    logger.debug(f"Sample covariance p={p}, n={n}, top eigenvalue {values[0]:.6f}")
    return SampleSpectrum(eigenvalues=values, eigenvectors=vectors, n=n)
