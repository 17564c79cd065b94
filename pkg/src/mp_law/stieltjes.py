"""Self-consistent equation of the deformed Marchenko-Pastur law.

m(z) is the Stieltjes transform of the n-normalized limiting ESD and solves
z = h(m) with h(x) = −1/x + (1/n) Σ σᵢ / (1 + x σᵢ).
"""

from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union
import logging

import numpy as np
from scipy.optimize import brentq

from ..config import settings
from ..errors import ConvergenceError, DomainError
from ..spectral.population import PopulationSpectrum

logger = logging.getLogger(__name__)

Number = Union[float, complex]
ArrayLike = Union[Number, np.ndarray]

# tolerance used to flag an argument as sitting on a pole of h
POLE_TOL = 1e-14
# continuation in Im z shrinks the imaginary part by this factor per rung
LADDER_FACTOR = 0.25
NEWTON_STEPS_PER_RUNG = 60
MAX_HALVINGS = 40


@dataclass(frozen=True)
class StieltjesSolution:
    z: complex
    m: complex
    residual: float
    iterations: int
    eta: float = 0.0

    @property
    def real(self) -> bool:
        return self.m.imag == 0.0


def _sums(x: np.ndarray, spec: PopulationSpectrum) -> Tuple[np.ndarray, np.ndarray]:
    """(1/n)Σ σ/(1+xσ) and (1/n)Σ σ²/(1+xσ)² over the distinct atoms"""
    values, weights = spec.atoms
    t = 1.0 + np.multiply.outer(x, values)
    s = values / t
    first = (s * weights).sum(axis=-1) / spec.n
    second = (s * s * weights).sum(axis=-1) / spec.n
    return first, second


def _check_poles(x: np.ndarray, spec: PopulationSpectrum):
    values, _ = spec.atoms
    scale = np.maximum(1.0, np.abs(x))
    if np.any(np.abs(x) <= POLE_TOL):
        raise DomainError("h is singular at x = 0")
    gaps = np.abs(np.add.outer(x, 1.0 / values)).min(axis=-1)
    if np.any(gaps <= POLE_TOL * scale):
        raise DomainError("h evaluated on a pole −1/σᵢ")


def _scalar_out(value: np.ndarray, like) -> ArrayLike:
    if np.ndim(like) == 0:
        value = value.reshape(()).item()
        if isinstance(value, complex) and value.imag == 0.0 and not np.iscomplexobj(like):
            return value.real
    return value


def h(x: ArrayLike, spec: PopulationSpectrum) -> ArrayLike:
    """h(x) = −1/x + (1/n)Σ 1/(x + σᵢ⁻¹)"""
    arr = np.asarray(x)
    xs = arr.astype(np.complex128 if np.iscomplexobj(arr) else np.float64).reshape(-1)
    _check_poles(xs, spec)
    first, _ = _sums(xs, spec)
    return _scalar_out((-1.0 / xs + first).reshape(arr.shape), x)


def h_prime(x: ArrayLike, spec: PopulationSpectrum) -> ArrayLike:
    """h′(x) = 1/x² − (1/n)Σ 1/(x + σᵢ⁻¹)²"""
    arr = np.asarray(x)
    xs = arr.astype(np.complex128 if np.iscomplexobj(arr) else np.float64).reshape(-1)
    _check_poles(xs, spec)
    _, second = _sums(xs, spec)
    return _scalar_out((1.0 / xs ** 2 - second).reshape(arr.shape), x)


def h_second(x: ArrayLike, spec: PopulationSpectrum) -> ArrayLike:
    """h″(x) = −2/x³ + (2/n)Σ 1/(x + σᵢ⁻¹)³"""
    arr = np.asarray(x)
    xs = arr.astype(np.complex128 if np.iscomplexobj(arr) else np.float64).reshape(-1)
    _check_poles(xs, spec)
    values, weights = spec.atoms
    s = values / (1.0 + np.multiply.outer(xs, values))
    third = (s ** 3 * weights).sum(axis=-1) / spec.n
    return _scalar_out((-2.0 / xs ** 3 + 2.0 * third).reshape(arr.shape), x)


def _residual(m: np.ndarray, z: np.ndarray, spec: PopulationSpectrum) -> np.ndarray:
    first, _ = _sums(m, spec)
    return np.abs(z - (-1.0 / m + first))


def _fixed_point(z: np.ndarray, m: np.ndarray, spec: PopulationSpectrum,
                 damping: float, switch: float, max_iter: int) -> Tuple[np.ndarray, int]:
    """Damped iteration m ← −1/(z − (1/n)Σσ/(1+mσ)) until the residual drops below switch"""
    iterations = 0
    for iterations in range(1, max_iter + 1):
        first, _ = _sums(m, spec)
        update = -1.0 / (z - first)
        m = (1.0 - damping) * m + damping * update
        if np.all(_residual(m, z, spec) < switch * np.maximum(1.0, np.abs(z))):
            break
    return m, iterations


def _newton(z: np.ndarray, m: np.ndarray, spec: PopulationSpectrum, tol: float,
            max_iter: int, keep_upper: bool) -> Tuple[np.ndarray, int]:
    """Newton on h(m) − z with step halving that keeps Im m > 0 when asked"""
    scale = np.maximum(1.0, np.abs(z))
    iterations = 0
    for iterations in range(1, max_iter + 1):
        first, second = _sums(m, spec)
        f = -1.0 / m + first - z
        res = np.abs(f)
        active = res > tol * scale
        if not np.any(active):
            break
        step = f / (1.0 / m ** 2 - second)
        lam = np.ones(m.shape)
        candidate = m.copy()
        pending = active.copy()
        for _ in range(MAX_HALVINGS):
            trial = m - lam * step
            ok = np.isfinite(trial)
            if keep_upper:
                ok &= trial.imag > 0
            ok &= _residual(np.where(ok, trial, m), z, spec) < res
            accept = pending & ok
            candidate[accept] = trial[accept]
            pending &= ~accept
            if not np.any(pending):
                break
            lam = np.where(pending, lam * 0.5, lam)
        if np.all(pending[active]):
            # stalled at rounding level
            break
        m = candidate
    return m, iterations


def solve_m_array(z: ArrayLike, spec: PopulationSpectrum, m0: Optional[ArrayLike] = None,
                  max_iter: Optional[int] = None, tol: Optional[float] = None,
                  damping: Optional[float] = None, switch: Optional[float] = None
                  ) -> Tuple[np.ndarray, np.ndarray, int]:
    """Vectorized C₊ solution of z = h(m) for Im z > 0

    Starts from a damped fixed-point iteration at a large imaginary part and
    follows the solution down to the requested Im z with Newton steps.
    Returns (m, residual, iterations).
    """
    max_iter = settings.SOLVER_MAX_ITER if max_iter is None else max_iter
    tol = settings.SOLVER_TOL if tol is None else tol
    damping = settings.SOLVER_DAMPING if damping is None else damping
    switch = settings.NEWTON_SWITCH if switch is None else switch

    z = np.atleast_1d(np.asarray(z, dtype=np.complex128)).reshape(-1)
    if np.any(z.imag <= 0):
        raise DomainError("solve_m_array needs Im z > 0")

    top = max(1.0, float(spec.sigmas[0]))
    eta_start = np.maximum(z.imag, top)
    z_top = z.real + 1j * eta_start
    m = -1.0 / z_top if m0 is None else np.broadcast_to(np.asarray(m0, dtype=np.complex128), z.shape).copy()
    m, total = _fixed_point(z_top, m, spec, damping, switch, max_iter)

    eta = eta_start.copy()
    while True:
        eta = np.maximum(eta * LADDER_FACTOR, z.imag)
        m, steps = _newton(z.real + 1j * eta, m, spec, tol, NEWTON_STEPS_PER_RUNG, keep_upper=True)
        total += steps
        if np.all(eta <= z.imag):
            break

    m, steps = _newton(z, m, spec, tol, max_iter, keep_upper=True)
    total += steps
    residual = _residual(m, z, spec)

    bad = residual > 1e-12 * np.maximum(1.0, np.abs(z))
    if np.any(bad):
        k = int(np.argmax(residual))
        logger.error(f"Stieltjes solver stalled at z={z[k]:.6g}: residual {residual[k]:.3e}")
        raise ConvergenceError(
            f"solve_m did not converge at z={z[k]}",
            last_iterate=m[k], residual=float(residual[k]), iterations=total,
        )
    return m, residual, total


def _polish_real(E: np.ndarray, m: np.ndarray, spec: PopulationSpectrum, tol: float
                 ) -> np.ndarray:
    """Newton at η = 0 from the η_floor solution; keeps the lifted value where that fails"""
    polished, _ = _newton(E.astype(np.complex128), m.copy(), spec, tol,
                          NEWTON_STEPS_PER_RUNG, keep_upper=False)
    res = _residual(polished, E, spec)
    scale = np.maximum(1.0, np.abs(E))
    good = (res <= 1e-12 * scale) & (polished.imag > -1e-12 * np.abs(polished))
    good &= np.abs(polished - m) <= 1e-3 * np.maximum(1.0, np.abs(m))
    out = np.where(good, polished, m)
    out = np.where(out.imag < 0, out.real + 0j, out)
    # outside the support the boundary value is real
    out = np.where(np.abs(out.imag) <= 1e-14 * np.abs(out), out.real + 0j, out)
    return out


def boundary_values(E: ArrayLike, spec: PopulationSpectrum, eta_floor: Optional[float] = None
                    ) -> np.ndarray:
    """m(E) := lim η↓0 m(E + iη) on a real grid"""
    eta_floor = settings.ETA_FLOOR if eta_floor is None else eta_floor
    E = np.atleast_1d(np.asarray(E, dtype=np.float64)).reshape(-1)
    if np.any(E == 0.0):
        raise DomainError("m(0) is only defined through solve_m_at_zero")
    m, _, _ = solve_m_array(E + 1j * eta_floor, spec)
    return _polish_real(E, m, spec, settings.SOLVER_TOL)


def solve_m(z: Number, spec: PopulationSpectrum, m0: Optional[Number] = None,
            eta_floor: Optional[float] = None) -> StieltjesSolution:
    """Solve z = h(m) for the Stieltjes transform m(z)

    Real z is lifted to z + iη_floor and the result polished back onto the
    real axis.
    """
    z = complex(z)
    if z.imag < 0:
        raise DomainError(f"m(z) is defined on the upper half plane, got z={z}")
    if z.imag > 0:
        m, residual, iterations = solve_m_array(np.array([z]), spec, m0=m0)
        return StieltjesSolution(z=z, m=complex(m[0]), residual=float(residual[0]),
                                 iterations=iterations, eta=z.imag)

    eta_floor = settings.ETA_FLOOR if eta_floor is None else eta_floor
    if z.real == 0.0:
        raise DomainError("m(0) is only defined through solve_m_at_zero")
    lifted, _, iterations = solve_m_array(np.array([z.real + 1j * eta_floor]), spec, m0=m0)
    m = _polish_real(np.array([z.real]), lifted, spec, settings.SOLVER_TOL)[0]
    residual = float(_residual(np.array([m]), np.array([z]), spec)[0])
    eta = 0.0 if residual <= 1e-12 * max(1.0, abs(z)) else eta_floor
    return StieltjesSolution(z=z, m=complex(m), residual=residual, iterations=iterations, eta=eta)


def solve_m_at_zero(spec: PopulationSpectrum) -> float:
    """Real m(0) with h(m(0)) = 0 and 1 + m(0)σᵢ > 0, defined for c_n > 1"""
    if spec.c <= 1.0:
        raise DomainError(f"m(0) requires p/n > 1, got {spec.c:.4f}")

    values, weights = spec.atoms

    def g(m: float) -> float:
        # m·h(m), increasing from −1 to c − 1 on (0, ∞)
        return -1.0 + float(np.sum(weights * m * values / (1.0 + m * values))) / spec.n

    upper = 1.0 / values[-1]
    while g(upper) <= 0:
        upper *= 2.0
    root = brentq(g, 0.0, upper, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    logger.debug(f"m(0) = {root:.12g} for p/n = {spec.c:.4f}")
    return float(root)


def m_prime(z: Number, spec: PopulationSpectrum, m: Optional[Number] = None,
            floor: Optional[float] = None) -> complex:
    """m′(z) = 1/h′(m(z))"""
    floor = settings.H_PRIME_FLOOR if floor is None else floor
    if m is None:
        m = solve_m(z, spec).m
    hp = complex(h_prime(complex(m), spec))
    if abs(hp) < floor:
        logger.warning(f"|h'(m)| = {abs(hp):.3e} below {floor:g} at z={z}; m' is near-singular")
    value = 1.0 / hp
    return value


def m_dot0(z: Number, x: float, spec: PopulationSpectrum, ell: Callable[[np.ndarray], np.ndarray],
           m: Optional[Number] = None) -> Number:
    """ṁ₀(z, x) = (m′(z)/(n x)) Σ ℓ(σᵢ)σᵢ/(1 + m(z)σᵢ)²"""
    if x <= 0:
        raise DomainError(f"ṁ₀ needs x > 0, got {x}")
    if m is None:
        m = solve_m(z, spec).m
    mp = m_prime(z, spec, m=m)
    values, weights = spec.atoms
    total = np.sum(weights * np.asarray(ell(values), dtype=np.float64) * values
                   / (1.0 + complex(m) * values) ** 2)
    value = complex(mp * total / (spec.n * x))
    if abs(value.imag) <= 1e-12 * max(abs(value), 1e-300):
        return value.real
    return value
