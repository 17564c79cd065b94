"""Spectral edges, density and classical locations of the deformed MP law."""

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple
import logging

import numpy as np
from scipy.integrate import cumulative_simpson, romb
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .stieltjes import boundary_values, h, h_prime, h_second
from ..config import settings
from ..errors import DomainError, EdgeSearchError, QuadratureError
from ..spectral.population import PopulationSpectrum

logger = logging.getLogger(__name__)

Interval = Tuple[float, float]


@dataclass(frozen=True)
class RegularityReport:
    """Edge and bulk regularity of the limiting law, reported and never enforced"""

    min_edge_gap: float
    lower_edge: float
    min_pole_distance: float
    tau: float

    @property
    def regular(self) -> bool:
        return (self.min_edge_gap >= self.tau and self.lower_edge >= self.tau
                and self.min_pole_distance >= self.tau)

    def as_dict(self) -> Dict[str, float]:
        return {
            "min_edge_gap": self.min_edge_gap,
            "lower_edge": self.lower_edge,
            "min_pole_distance": self.min_pole_distance,
            "tau": self.tau,
            "regular": self.regular,
        }


@dataclass(frozen=True)
class MPLawTable:
    """Edges a₁ > … > a_{2q}, companions b_k, cumulative bulk counts n_k and quantiles γ_k"""

    spec: PopulationSpectrum
    edges: np.ndarray
    companions: np.ndarray
    bulk_masses: np.ndarray
    bulk_counts: np.ndarray
    quantiles: Optional[np.ndarray] = None
    density_grid: Optional[Tuple[np.ndarray, np.ndarray]] = None
    intervals: List[Interval] = field(default_factory=list)

    @property
    def q(self) -> int:
        return self.edges.size // 2

    @property
    def lambda_plus(self) -> float:
        return float(self.edges[0])

    @property
    def lambda_minus(self) -> float:
        return float(self.edges[-1])

    @property
    def b1(self) -> float:
        return float(self.companions[0])

    @property
    def support(self) -> List[Interval]:
        """Bulk intervals [a_{2k}, a_{2k−1}] from the top"""
        return [(float(self.edges[2 * k + 1]), float(self.edges[2 * k])) for k in range(self.q)]

    @property
    def zero_mass_n(self) -> float:
        """Atom at 0 of the n-normalized ESD of the n x n companion matrix"""
        return max(0.0, 1.0 - self.spec.c)

    @property
    def zero_mass_p(self) -> float:
        """Atom at 0 of the p-normalized ESD of the p x p sample covariance"""
        return max(0.0, 1.0 - 1.0 / self.spec.c)

    def in_support(self, E: np.ndarray) -> np.ndarray:
        E = np.asarray(E, dtype=np.float64)
        inside = np.zeros(E.shape, dtype=bool)
        for lower, upper in self.support:
            inside |= (E >= lower) & (E <= upper)
        return inside

    def bulk_of(self, k: int) -> int:
        """Zero-based bulk holding the k-th classical location"""
        return int(np.searchsorted(self.bulk_counts, k, side="left"))

    def gamma(self, k: int) -> float:
        """γ_k with the convention γ_k = 0 for k > K"""
        if self.quantiles is None:
            raise DomainError("quantiles have not been computed for this table")
        if k < 1:
            raise DomainError(f"quantile index starts at 1, got {k}")
        return float(self.quantiles[k - 1]) if k <= self.quantiles.size else 0.0

    def density(self, E) -> np.ndarray:
        return density(E, self.spec)

    def regularity(self, tau: Optional[float] = None) -> RegularityReport:
        tau = settings.TAU_RATIO if tau is None else tau
        gaps = -np.diff(self.edges)
        values, _ = self.spec.atoms
        pole_distance = np.abs(np.add.outer(1.0 / values, self.companions)).min()
        report = RegularityReport(
            min_edge_gap=float(gaps.min()) if gaps.size else float("inf"),
            lower_edge=self.lambda_minus,
            min_pole_distance=float(pole_distance),
            tau=tau,
        )
        if not report.regular:
            logger.warning(f"Limiting law is not regular at tau={tau}: {report.as_dict()}")
        return report

    @classmethod
    def build(cls, spec: PopulationSpectrum, nodes: Optional[int] = None) -> "MPLawTable":
        """Edges, bulk counts, quantiles and a density grid in one pass"""
        table = find_edges(spec, nodes=nodes)
        gammas, grid = _quantiles_and_grid(spec, table, nodes)
        return replace(table, quantiles=gammas, density_grid=grid)


def _merge_poles(values: np.ndarray, merge_tol: float) -> np.ndarray:
    poles = np.sort(-1.0 / values)
    merged = [poles[0]]
    for pole in poles[1:]:
        if pole - merged[-1] > merge_tol * max(1.0, abs(pole)):
            merged.append(pole)
    return np.asarray(merged)


def _scan_nodes(lower: float, upper: float, count: int) -> np.ndarray:
    """Interior nodes clustered towards both ends of (lower, upper), infinite ends allowed"""
    t = (1.0 - np.cos(np.pi * np.arange(1, count + 1) / (count + 1))) / 2.0
    if np.isfinite(lower) and np.isfinite(upper):
        return lower + (upper - lower) * t
    if np.isfinite(upper):
        scale = max(abs(upper), 1.0)
        return upper - scale * (1.0 - t) / t
    scale = max(abs(lower), 1.0)
    return lower + scale * t / (1.0 - t)


def find_edges(spec: PopulationSpectrum, scan_points: Optional[int] = None,
               merge_tol: Optional[float] = None, bisection_tol: Optional[float] = None,
               nodes: Optional[int] = None) -> MPLawTable:
    """Locate all real critical points of h and the spectral edges a_k = h(b_k)"""
    scan_points = settings.EDGE_SCAN_POINTS if scan_points is None else scan_points
    merge_tol = settings.POLE_MERGE_TOL if merge_tol is None else merge_tol
    bisection_tol = settings.BISECTION_TOL if bisection_tol is None else bisection_tol

    values, _ = spec.atoms
    poles = _merge_poles(values, merge_tol)
    bounds = [-np.inf] + list(poles) + [0.0, np.inf]
    intervals: List[Interval] = [(bounds[k], bounds[k + 1]) for k in range(len(bounds) - 1)]

    def hp(x: float) -> float:
        return float(h_prime(x, spec))

    critical: List[float] = []
    for lower, upper in intervals:
        x = _scan_nodes(lower, upper, scan_points)
        d = h_prime(x, spec)
        signs = np.sign(d)
        for k in np.flatnonzero(signs[:-1] * signs[1:] < 0):
            root = brentq(hp, x[k], x[k + 1], xtol=bisection_tol, rtol=4 * np.finfo(float).eps)
            critical.append(root)
        critical.extend(x[signs == 0].tolist())

    if not critical:
        raise EdgeSearchError("no critical points of h found", intervals)

    b = np.asarray(critical)
    a = np.asarray(h(b, spec), dtype=np.float64)
    keep = a > 0
    if not np.all(keep):
        logger.warning(f"Dropped {np.sum(~keep)} critical points with nonpositive h value")
    a, b = a[keep], b[keep]
    order = np.argsort(a)[::-1]
    a, b = a[order], b[order]

    if a.size == 0 or a.size % 2:
        logger.error(f"Edge search found {a.size} edges for p={spec.p}, n={spec.n}")
        raise EdgeSearchError(f"expected an even number of spectral edges, found {a.size}", intervals)

    worst = float(np.max(np.abs(h_prime(b, spec)) * np.minimum(1.0, b ** 2)))
    if worst > 1e-10:
        logger.warning(f"Edge refinement left |h'(b)| scaled residual {worst:.2e}")

    masses, counts = _bulk_masses(spec, a, nodes)
    logger.info(f"Found {a.size // 2} bulk component(s) with edges {np.round(a, 6).tolist()}")
    return MPLawTable(spec=spec, edges=a, companions=b, bulk_masses=masses,
                      bulk_counts=counts, intervals=intervals)


@dataclass(frozen=True)
class UpperEdge:
    """Rightmost edge λ₊ = h(b₁) with the local eigenvalue spacing there"""

    lambda_plus: float
    b1: float
    curvature: float
    spacing: float


def upper_edge(spec: PopulationSpectrum, bisection_tol: Optional[float] = None) -> UpperEdge:
    """λ₊ from the critical point of h in (−1/σ₁, 0)

    Near λ₊ the density behaves like C√(λ₊ − x) with C = √(2/h″(b₁))/π, so
    the top n-normalized eigenvalues sit (3/(4nC))^{2/3} apart.
    """
    bisection_tol = settings.BISECTION_TOL if bisection_tol is None else bisection_tol
    pole = -1.0 / float(spec.sigmas[0])
    lower, upper = pole * (1.0 - 1e-9), pole * 1e-9

    def hp(x: float) -> float:
        return float(h_prime(x, spec))

    if hp(lower) >= 0 or hp(upper) <= 0:
        raise EdgeSearchError("no sign change of h' next to the top pole", [(pole, 0.0)])
    b1 = brentq(hp, lower, upper, xtol=bisection_tol, rtol=4 * np.finfo(float).eps)
    curvature = abs(float(h_second(b1, spec)))
    slope = np.sqrt(2.0 / curvature) / np.pi
    spacing = (3.0 / (4.0 * spec.n * slope)) ** (2.0 / 3.0)
    return UpperEdge(lambda_plus=float(h(b1, spec)), b1=float(b1), curvature=curvature,
                     spacing=float(spacing))


def density(E, spec: PopulationSpectrum, eta_floor: Optional[float] = None,
            floor: Optional[float] = None) -> np.ndarray:
    """ϱ(E) = π⁻¹ Im m(E) for E > 0, exactly zero below the floor"""
    floor = settings.DENSITY_FLOOR if floor is None else floor
    arr = np.asarray(E, dtype=np.float64)
    flat = arr.reshape(-1)
    if np.any(flat <= 0):
        raise DomainError("density is defined for E > 0")
    rho = np.maximum(boundary_values(flat, spec, eta_floor=eta_floor).imag, 0.0) / np.pi
    rho[rho <= floor] = 0.0
    rho = rho.reshape(arr.shape)
    return float(rho) if arr.ndim == 0 else rho


def _bulk_grid(lower: float, upper: float, nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    """Cosine-substituted nodes on [lower, upper]; returns (θ, E)"""
    theta = np.linspace(0.0, np.pi, nodes + 1)
    mid, half = (upper + lower) / 2.0, (upper - lower) / 2.0
    return theta, mid - half * np.cos(theta)


def _bulk_integrand(spec: PopulationSpectrum, lower: float, upper: float, nodes: int):
    theta, E = _bulk_grid(lower, upper, nodes)
    rho = np.zeros_like(E)
    rho[1:-1] = density(E[1:-1], spec)
    integrand = rho * (upper - lower) / 2.0 * np.sin(theta)
    return theta, E, rho, integrand


def _bulk_masses(spec: PopulationSpectrum, edges: np.ndarray, nodes: Optional[int]
                 ) -> Tuple[np.ndarray, np.ndarray]:
    nodes = settings.QUANTILE_NODES if nodes is None else nodes
    q = edges.size // 2
    masses = np.empty(q)
    for k in range(q):
        upper, lower = edges[2 * k], edges[2 * k + 1]
        theta, _, _, f = _bulk_integrand(spec, lower, upper, nodes)
        masses[k] = romb(f, dx=theta[1] - theta[0]) if _is_pow2(nodes) else _simpson_total(theta, f)

    raw = masses * spec.n
    counts = np.rint(raw).astype(int)
    off = np.abs(raw - counts)
    if np.any(off > 1e-3):
        logger.warning(f"Bulk masses n*ϱ = {np.round(raw, 4).tolist()} are not integral")
    if counts.sum() != spec.K:
        raise QuadratureError(
            f"bulk counts {counts.tolist()} do not add up to K={spec.K}",
            achieved=float(abs(raw.sum() - spec.K)) / spec.n,
        )
    return masses, np.cumsum(counts)


def _is_pow2(nodes: int) -> bool:
    return nodes > 0 and (nodes & (nodes - 1)) == 0


def _simpson_total(theta: np.ndarray, f: np.ndarray) -> float:
    return float(cumulative_simpson(f, x=theta, initial=0.0)[-1])


def _quantiles_and_grid(spec: PopulationSpectrum, table: MPLawTable, nodes: Optional[int],
                        tol: Optional[float] = None):
    nodes = settings.QUANTILE_NODES if nodes is None else nodes
    tol = settings.QUADRATURE_TOL if tol is None else tol

    gammas: List[np.ndarray] = []
    grid_E: List[np.ndarray] = []
    grid_rho: List[np.ndarray] = []
    previous = 0
    for k, (lower, upper) in enumerate(table.support):
        theta, E, rho, f = _bulk_integrand(spec, lower, upper, nodes)
        cumulative = cumulative_simpson(f, x=theta, initial=0.0)
        total = cumulative[-1]
        reference = table.bulk_masses[k]
        achieved = abs(total - reference)
        if achieved > tol:
            logger.error(f"Quadrature mismatch {achieved:.2e} in bulk {k + 1}")
            raise QuadratureError(f"quantile quadrature missed tolerance {tol:g} in bulk {k + 1}",
                                  achieved=float(achieved))

        count = int(table.bulk_counts[k]) - previous
        # mass above E, normalized to the integer count of the bulk
        above = (total - cumulative)[::-1] * (count / spec.n) / total
        E_desc = E[::-1]
        keep = np.concatenate([[True], np.diff(above) > 0])
        inverse = PchipInterpolator(above[keep], E_desc[keep])
        levels = (np.arange(1, count + 1) - 0.5) / spec.n
        gammas.append(inverse(levels))

        grid_E.append(E)
        grid_rho.append(rho)
        previous = int(table.bulk_counts[k])

    gamma = np.concatenate(gammas)
    order = np.argsort(np.concatenate(grid_E))
    grid = (np.concatenate(grid_E)[order], np.concatenate(grid_rho)[order])
    logger.debug(f"Computed {gamma.size} classical locations")
    return gamma, grid


def quantiles(spec: PopulationSpectrum, table: MPLawTable, nodes: Optional[int] = None,
              tol: Optional[float] = None) -> np.ndarray:
    """Classical locations γ₁ ≥ … ≥ γ_K with ∫_{γ_k}^∞ ϱ = (k − ½)/n"""
    gamma, _ = _quantiles_and_grid(spec, table, nodes, tol)
    return gamma


def full_quantiles(table: MPLawTable, length: Optional[int] = None) -> np.ndarray:
    """γ padded with zeros up to max(n, p)"""
    spec = table.spec
    length = max(spec.n, spec.p) if length is None else length
    out = np.zeros(length)
    out[: table.quantiles.size] = table.quantiles
    return out
