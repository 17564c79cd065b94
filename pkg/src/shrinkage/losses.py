"""Loss functions, their ℓ-functions and the optimal shrinker rules.

Every loss of the table below is minimized over Σ̂ = Σ φᵢ uᵢuᵢᵀ by a shrinker
that only depends on the quadratic forms uᵢᵀℓ(Σ)uᵢ for one or two ℓ.
"""

from enum import Enum
from typing import Callable, Dict, Mapping, Optional, Tuple, Union
import logging

import numpy as np
from scipy import linalg

from ..errors import DomainError

logger = logging.getLogger(__name__)

MATRIX_FLOOR = 1e-12


class Ell(str, Enum):
    X = "x"
    XINV = "xinv"
    SQRT = "sqrt"
    LOG = "log"
    X2 = "x2"
    XINV2 = "xinv2"

    def __call__(self, values) -> np.ndarray:
        return _ELL_FUNCTIONS[self](np.asarray(values, dtype=np.float64))

    @property
    def needs_positive(self) -> bool:
        return self in (Ell.XINV, Ell.SQRT, Ell.LOG, Ell.XINV2)


_ELL_FUNCTIONS: Dict[Ell, Callable[[np.ndarray], np.ndarray]] = {
    Ell.X: lambda x: x,
    Ell.XINV: lambda x: 1.0 / x,
    Ell.SQRT: np.sqrt,
    Ell.LOG: np.log,
    Ell.X2: lambda x: x ** 2,
    Ell.XINV2: lambda x: x ** -2.0,
}

EllLike = Union[Ell, Callable[[np.ndarray], np.ndarray]]


def as_ell(ell: Union[EllLike, str]) -> EllLike:
    if isinstance(ell, str) and not isinstance(ell, Ell):
        try:
            return Ell(ell.strip().lower())
        except ValueError:
            raise DomainError(f"Unknown ell '{ell}', choose from {[e.value for e in Ell]}")
    return ell


class LossKind(str, Enum):
    FROBENIUS = "Frobenius"
    INVERSE_STEIN = "InverseStein"
    DISUTILITY = "Disutility"
    MINIMUM_VARIANCE = "MinimumVariance"
    STEIN = "Stein"
    WEIGHTED_FROBENIUS = "WeightedFrobenius"
    INVERSE_FROBENIUS = "InverseFrobenius"
    SYMMETRIZED_STEIN = "SymmetrizedStein"
    LOG_EUCLIDEAN = "LogEuclidean"
    FRECHET = "Frechet"
    QUADRATIC = "Quadratic"
    INVERSE_QUADRATIC = "InverseQuadratic"

    @property
    def ell_set(self) -> Tuple[Ell, ...]:
        return _LOSS_ELLS[self]

    @property
    def short_name(self) -> str:
        return _SHORT_NAMES[self]

    @classmethod
    def parse(cls, name: str) -> "LossKind":
        key = name.strip().lower().replace("_", "").replace("-", "").replace(" ", "")
        for kind in cls:
            if key in (kind.value.lower(), kind.short_name.lower()):
                return kind
        raise DomainError(f"Unknown loss '{name}', choose from {[k.value for k in cls]}")


_LOSS_ELLS: Dict[LossKind, Tuple[Ell, ...]] = {
    LossKind.FROBENIUS: (Ell.X,),
    LossKind.INVERSE_STEIN: (Ell.X,),
    LossKind.DISUTILITY: (Ell.X,),
    LossKind.MINIMUM_VARIANCE: (Ell.X,),
    LossKind.STEIN: (Ell.XINV,),
    LossKind.WEIGHTED_FROBENIUS: (Ell.XINV,),
    LossKind.INVERSE_FROBENIUS: (Ell.XINV,),
    LossKind.SYMMETRIZED_STEIN: (Ell.X, Ell.XINV),
    LossKind.LOG_EUCLIDEAN: (Ell.LOG,),
    LossKind.FRECHET: (Ell.SQRT,),
    LossKind.QUADRATIC: (Ell.XINV, Ell.XINV2),
    LossKind.INVERSE_QUADRATIC: (Ell.X, Ell.X2),
}

_SHORT_NAMES: Dict[LossKind, str] = {
    LossKind.FROBENIUS: "fro",
    LossKind.INVERSE_STEIN: "inStein",
    LossKind.DISUTILITY: "disu",
    LossKind.MINIMUM_VARIANCE: "MV",
    LossKind.STEIN: "stein",
    LossKind.WEIGHTED_FROBENIUS: "wFro",
    LossKind.INVERSE_FROBENIUS: "inFro",
    LossKind.SYMMETRIZED_STEIN: "symStein",
    LossKind.LOG_EUCLIDEAN: "LE",
    LossKind.FRECHET: "fre",
    LossKind.QUADRATIC: "Qu",
    LossKind.INVERSE_QUADRATIC: "inQu",
}


def _moment(moments: Mapping[Ell, np.ndarray], ell: Ell, loss: LossKind, positive: bool = False):
    if ell not in moments:
        raise DomainError(f"{loss.value} shrinker needs the moment of ℓ = {ell.value}")
    value = np.asarray(moments[ell], dtype=np.float64)
    if positive and np.any(value <= 0):
        raise DomainError(f"{loss.value} shrinker needs a positive moment of ℓ = {ell.value}")
    return value


def shrinker_from_moments(loss: LossKind, moments: Mapping[Ell, np.ndarray]):
    """Optimal shrinker of a loss from the moments uᵀℓ(Σ)u (scalars or vectors)"""
    if loss in (LossKind.FROBENIUS, LossKind.INVERSE_STEIN, LossKind.DISUTILITY,
                LossKind.MINIMUM_VARIANCE):
        out = _moment(moments, Ell.X, loss)
    elif loss in (LossKind.STEIN, LossKind.WEIGHTED_FROBENIUS, LossKind.INVERSE_FROBENIUS):
        out = 1.0 / _moment(moments, Ell.XINV, loss, positive=True)
    elif loss is LossKind.SYMMETRIZED_STEIN:
        out = np.sqrt(_moment(moments, Ell.X, loss, positive=True)
                      / _moment(moments, Ell.XINV, loss, positive=True))
    elif loss is LossKind.LOG_EUCLIDEAN:
        out = np.exp(_moment(moments, Ell.LOG, loss))
    elif loss is LossKind.FRECHET:
        out = _moment(moments, Ell.SQRT, loss) ** 2
    elif loss is LossKind.QUADRATIC:
        out = _moment(moments, Ell.XINV, loss) / _moment(moments, Ell.XINV2, loss, positive=True)
    else:
        out = _moment(moments, Ell.X2, loss) / _moment(moments, Ell.X, loss, positive=True)
    return float(out) if np.ndim(out) == 0 else out


def matrix_function(Sigma: np.ndarray, ell: EllLike) -> np.ndarray:
    """ℓ(Σ) through the eigendecomposition of a symmetric Σ"""
    values, vectors = linalg.eigh(Sigma)
    if isinstance(ell, Ell) and ell.needs_positive and values.min() <= MATRIX_FLOOR:
        raise DomainError(f"ℓ = {ell.value} needs Σ with eigenvalues above {MATRIX_FLOOR:g}")
    return (vectors * np.asarray(ell(values), dtype=np.float64)) @ vectors.T


def ell_moments(Sigma: np.ndarray, U: np.ndarray, ell: EllLike, K: Optional[int] = None
                ) -> np.ndarray:
    """uᵢᵀℓ(Σ)uᵢ for i ≤ K and the shared tr[U₀ᵀℓ(Σ)U₀]/(p − K) beyond"""
    p = U.shape[0]
    K = p if K is None else K
    M = matrix_function(Sigma, ell)
    diag = np.einsum("ij,ik,kj->j", U, M, U)
    out = diag.copy()
    if K < p:
        out[K:] = diag[K:].sum() / (p - K)
    return out


def optimal_shrinkers(loss: LossKind, Sigma: np.ndarray, U: np.ndarray,
                      K: Optional[int] = None) -> np.ndarray:
    """Shrinker vector minimizing the loss over invariant estimators with basis U"""
    moments = {ell: ell_moments(Sigma, U, ell, K) for ell in loss.ell_set}
    return np.asarray(shrinker_from_moments(loss, moments))


def _spd_inverse(M: np.ndarray) -> np.ndarray:
    return matrix_function(M, Ell.XINV)


def _logdet(M: np.ndarray) -> float:
    sign, value = np.linalg.slogdet(M)
    if sign <= 0:
        raise DomainError("log-determinant of a non-positive-definite matrix")
    return float(value)


def loss_value(loss: LossKind, Sigma: np.ndarray, Sigma_hat: np.ndarray) -> float:
    """Normalized loss L(Σ, Σ̂) of the loss table"""
    p = Sigma.shape[0]
    I = np.eye(p)
    fro = np.linalg.norm

    if loss is LossKind.FROBENIUS:
        return float(fro(Sigma - Sigma_hat) / np.sqrt(p))
    if loss is LossKind.INVERSE_FROBENIUS:
        return float(fro(_spd_inverse(Sigma) - _spd_inverse(Sigma_hat)) / np.sqrt(p))
    if loss is LossKind.WEIGHTED_FROBENIUS:
        D = Sigma_hat - Sigma
        return float(np.trace(D @ D @ _spd_inverse(Sigma)) / np.trace(Sigma))
    if loss is LossKind.DISUTILITY:
        Sigma_inv = _spd_inverse(Sigma)
        D = _spd_inverse(Sigma_hat) - Sigma_inv
        return float(np.trace(D @ D @ Sigma) / np.trace(Sigma_inv))
    if loss is LossKind.INVERSE_STEIN:
        A = _spd_inverse(Sigma_hat) @ Sigma
        return float((np.trace(A - I) - _logdet(Sigma) + _logdet(Sigma_hat)) / p)
    if loss is LossKind.STEIN:
        A = Sigma_hat @ _spd_inverse(Sigma)
        return float((np.trace(A - I) - _logdet(Sigma_hat) + _logdet(Sigma)) / p)
    if loss is LossKind.MINIMUM_VARIANCE:
        H = _spd_inverse(Sigma_hat)
        return float(p * np.trace(H @ Sigma @ H) / np.trace(H) ** 2
                     - p / np.trace(_spd_inverse(Sigma)))
    if loss is LossKind.FRECHET:
        return float(fro(matrix_function(Sigma_hat, Ell.SQRT) - matrix_function(Sigma, Ell.SQRT))
                     / np.sqrt(p))
    if loss is LossKind.LOG_EUCLIDEAN:
        return float(fro(matrix_function(Sigma_hat, Ell.LOG) - matrix_function(Sigma, Ell.LOG))
                     / np.sqrt(p))
    if loss is LossKind.QUADRATIC:
        return float(fro(_spd_inverse(Sigma) @ Sigma_hat - I) / np.sqrt(p))
    if loss is LossKind.INVERSE_QUADRATIC:
        return float(fro(_spd_inverse(Sigma_hat) @ Sigma - I) / np.sqrt(p))
    # symmetrized Stein
    return float(np.trace(Sigma_hat @ _spd_inverse(Sigma) + _spd_inverse(Sigma_hat) @ Sigma - 2 * I) / p)


def _block_ratio(Sigma, U, K, num: Ell, den: Ell) -> float:
    """Σᵢ≤K (uᵀℓ₁u)²/(uᵀℓ₂u) plus the zero-block trace term"""
    a = ell_moments(Sigma, U, num, K)
    b = ell_moments(Sigma, U, den, K)
    p = U.shape[0]
    total = float(np.sum(a[:K] ** 2 / b[:K]))
    if K < p:
        total += (p - K) * a[K] ** 2 / b[K]
    return total


def exact_risk_decomposition(loss: LossKind, Sigma: np.ndarray, U: np.ndarray, Phi: np.ndarray,
                             K: Optional[int] = None) -> Tuple[float, float]:
    """Both sides of the exact decomposition of the unnormalized loss at Σ̃ = U Φ Uᵀ"""
    p = Sigma.shape[0]
    K = p if K is None else K
    Phi = np.asarray(Phi, dtype=np.float64)
    I = np.eye(p)

    optimal = optimal_shrinkers(loss, Sigma, U, K)
    if not np.allclose(Phi, optimal, rtol=1e-8, atol=1e-12):
        logger.warning(f"Shrinkers are not optimal for {loss.value}; the identity is not expected to hold")

    S = (U * Phi) @ U.T
    fro2 = lambda M: float(np.sum(M * M))
    Sigma_inv = _spd_inverse(Sigma)

    if loss is LossKind.FROBENIUS:
        return fro2(Sigma - S), fro2(Sigma) - float(np.sum(Phi ** 2))
    if loss is LossKind.INVERSE_FROBENIUS:
        return fro2(Sigma_inv - _spd_inverse(S)), fro2(Sigma_inv) - float(np.sum(Phi ** -2.0))
    if loss is LossKind.WEIGHTED_FROBENIUS:
        D = S - Sigma
        return float(np.trace(D @ D @ Sigma_inv)), float(np.trace(Sigma) - Phi.sum())
    if loss is LossKind.DISUTILITY:
        D = _spd_inverse(S) - Sigma_inv
        return float(np.trace(D @ D @ Sigma)), float(np.trace(Sigma_inv) - np.sum(1.0 / Phi))
    if loss is LossKind.INVERSE_STEIN:
        A = _spd_inverse(S) @ Sigma
        lhs = float(np.trace(A - I) - (_logdet(Sigma) - _logdet(S)))
        return lhs, float(np.sum(np.log(Phi)) - _logdet(Sigma))
    if loss is LossKind.STEIN:
        A = S @ Sigma_inv
        lhs = float(np.trace(A - I) - (_logdet(S) - _logdet(Sigma)))
        return lhs, float(_logdet(Sigma) - np.sum(np.log(Phi)))
    if loss is LossKind.FRECHET:
        D = matrix_function(S, Ell.SQRT) - matrix_function(Sigma, Ell.SQRT)
        return fro2(D), float(np.trace(Sigma) - Phi.sum())
    if loss is LossKind.MINIMUM_VARIANCE:
        H = _spd_inverse(S)
        return float(p * np.trace(H @ Sigma @ H) / np.trace(H) ** 2), float(p / np.sum(1.0 / Phi))
    if loss is LossKind.QUADRATIC:
        lhs = fro2(Sigma_inv @ S - I)
        return lhs, p - _block_ratio(Sigma, U, K, Ell.XINV, Ell.XINV2)
    if loss is LossKind.INVERSE_QUADRATIC:
        lhs = fro2(_spd_inverse(S) @ Sigma - I)
        return lhs, p - _block_ratio(Sigma, U, K, Ell.X, Ell.X2)
    if loss is LossKind.LOG_EUCLIDEAN:
        L = matrix_function(Sigma, Ell.LOG)
        return fro2(matrix_function(S, Ell.LOG) - L), fro2(L) - float(np.sum(np.log(Phi) ** 2))

    lhs = 0.5 * float(np.trace(S @ Sigma_inv + _spd_inverse(S) @ Sigma - 2 * I))
    a = ell_moments(Sigma, U, Ell.X, K)
    c = ell_moments(Sigma, U, Ell.XINV, K)
    rhs = float(np.sum(np.sqrt(a[:K] * c[:K])))
    if K < p:
        rhs += (p - K) * np.sqrt(a[K] * c[K])
    return lhs, rhs - p
