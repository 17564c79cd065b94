"""Monte Carlo experiments for shrinkers, eigenvectors, QUE, risks, spikes and MP dumps."""

from functools import partial
from typing import Any, Dict, Optional
import logging
import time

import numpy as np
import pandas as pd

from ..errors import ConfigError
from ..estimation.shrinkers import (
    REPORT_COLUMNS,
    assemble_shrunken,
    empirical_shrinker,
    estimate_phi_hat_curve,
    estimate_shrinkers,
    estimated_theta,
    fit_estimators,
)
from ..estimation.spectrum import estimate_rank, sample_stieltjes
from ..mp_law.table import MPLawTable
from ..shrinkage.losses import exact_risk_decomposition, loss_value, optimal_shrinkers
from ..shrinkage.theory import asymptotic_risk, outlier_asymptotics, phi_curve, phi_weights, theta_vector
from ..spectral.population import SpikedModel
from ..spectral.sampling import generate_data, sample_covariance
from .config import ExperimentConfig, ExperimentResult
from .harness import ReplicationRunner, finalize, replication_seeds, write_outputs

logger = logging.getLogger(__name__)

QUE_EPS = 0.1
VARIANCE_TOL = 0.15
IDENTITY_TOL = 1e-8
SIGMA_TILDE_TOL = 0.5


def _bulk_gammas(model: SpikedModel, mp: MPLawTable) -> np.ndarray:
    return mp.quantiles[: model.base.K - model.r]


def _run(cfg: ExperimentConfig, task, label: str):
    seeds = replication_seeds(cfg.seed, cfg.replications)
    runner = ReplicationRunner(task, workers=cfg.workers, label=label)
    records, failures = runner.run(seeds)
    return seeds, records, failures


def _stack(records, key: str) -> np.ndarray:
    return np.array([rec[key] for rec in records], dtype=np.float64)


# Shrinker curves

def _shrinker_replication(rep: int, seed: int, model: SpikedModel, Sigma: np.ndarray,
                          cfg: ExperimentConfig) -> Dict[str, Any]:
    sample = sample_covariance(generate_data(model, seed, cfg.dist))
    r, est, st = fit_estimators(sample, r=cfg.rank, method=cfg.spectrum_method,
                                truth=model.base, eta=cfg.eta)
    estimated = estimated_theta(cfg.ell_fn, sample, est, st, cfg.eps, cfg.stieltjes)
    empirical = empirical_shrinker(sample, Sigma, cfg.ell_fn)
    return {"rep": rep, "seed": seed, "r_hat": r, "fallback": est.fallback,
            "index": list(range(1, sample.p + 1)),
            "estimated": estimated.tolist(), "empirical": empirical.tolist()}


def run_shrinker_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Averaged empirical, estimated and theoretical θᵢ(ℓ) curves"""
    started = time.perf_counter()
    model = cfg.resolve_model()
    mp = MPLawTable.build(model.base)
    theoretical = theta_vector(model, mp, cfg.ell_fn)
    logger.info(f"Shrinker experiment: setting {cfg.setting}, p={model.p}, n={model.n}, ℓ={cfg.ell}")

    task = partial(_shrinker_replication, model=model, Sigma=model.covariance(), cfg=cfg)
    seeds, records, failures = _run(cfg, task, "shrinkers")

    aggregates: Dict[str, Any] = {"theoretical": theoretical.tolist()}
    frames = {}
    if records:
        estimated = _stack(records, "estimated").mean(axis=0)
        empirical = _stack(records, "empirical").mean(axis=0)
        r_hats = np.array([rec["r_hat"] for rec in records])
        aggregates.update({
            "estimated": estimated.tolist(),
            "empirical": empirical.tolist(),
            "mean_abs_estimated_empirical": float(np.mean(np.abs(estimated - empirical))),
            "mean_abs_theoretical_empirical": float(np.mean(np.abs(theoretical - empirical))),
            "rank_recovery": float(np.mean(r_hats == model.r)),
            "fallbacks": int(sum(rec["fallback"] for rec in records)),
        })
        frames["shrinkers"] = pd.DataFrame({
            "index": np.arange(1, model.p + 1),
            "empirical": empirical,
            "estimated": estimated,
            "theoretical": theoretical,
            "loss": cfg.loss_kind.value,
            "ell": cfg.ell,
        })[REPORT_COLUMNS]

    result = finalize(cfg, records, failures, aggregates, seeds, started)
    if cfg.out is not None:
        write_outputs(result, cfg.out, frames)
    return result


# Eigenvector variances

def _eigvec_replication(rep: int, seed: int, model: SpikedModel, v: np.ndarray,
                        overlaps: np.ndarray, cfg: ExperimentConfig) -> Dict[str, Any]:
    sample = sample_covariance(generate_data(model, seed, cfg.dist))
    projections = np.sqrt(model.p) * (sample.basis.T @ v)
    r, est, st = fit_estimators(sample, r=model.r if cfg.rank is None else cfg.rank,
                                method=cfg.spectrum_method, truth=model.base, eta=cfg.eta)
    bulk = sample.eigenvalues[r: sample.K]
    estimated = estimate_phi_hat_curve(st, est, overlaps, bulk)
    return {"rep": rep, "seed": seed, "projection": projections[r: sample.K].tolist(),
            "estimated": estimated.tolist()}


def run_eigvec_variance_experiment(cfg: ExperimentConfig, v: Optional[np.ndarray] = None
                                   ) -> ExperimentResult:
    """Variance of √p⟨v, uᵢ⟩ over replications against φ(v, v, γᵢ) and φ̂"""
    started = time.perf_counter()
    model = cfg.resolve_model()
    v = cfg.direction_vector(model) if v is None else np.asarray(v, dtype=np.float64) / np.linalg.norm(v)
    mp = MPLawTable.build(model.base)
    gammas = _bulk_gammas(model, mp)
    theoretical = phi_curve(v, v, gammas, model)
    overlaps = (model.basis.T @ v) ** 2

    task = partial(_eigvec_replication, model=model, v=v, overlaps=overlaps, cfg=cfg)
    seeds, records, failures = _run(cfg, task, "eigvec-variance")

    aggregates: Dict[str, Any] = {"theoretical": theoretical.tolist()}
    frames = {}
    if records:
        proj = _stack(records, "projection")
        second = np.mean(proj ** 2, axis=0)
        fourth = np.mean(proj ** 4, axis=0)
        kurtosis = fourth / second ** 2
        estimated = _stack(records, "estimated").mean(axis=0)
        relative = np.abs(second - theoretical) / theoretical
        mid = gammas.size // 2
        aggregates.update({
            "empirical": second.tolist(),
            "estimated": estimated.tolist(),
            "within_tolerance": float(np.mean(relative <= VARIANCE_TOL)),
            "tolerance": VARIANCE_TOL,
            "mid_index": int(model.r + mid + 1),
            "mid_kurtosis": float(kurtosis[mid]),
        })
        frames["eigvec"] = pd.DataFrame({
            "index": np.arange(model.r + 1, model.r + gammas.size + 1),
            "gamma": gammas,
            "empirical": second,
            "estimated": estimated,
            "theoretical": theoretical,
            "kurtosis": kurtosis,
        })

    result = finalize(cfg, records, failures, aggregates, seeds, started)
    if cfg.out is not None:
        write_outputs(result, cfg.out, frames, include_records=False)
    return result


# Quantum unique ergodicity

def _que_replication(rep: int, seed: int, model: SpikedModel, w: np.ndarray,
                     profile: np.ndarray, cfg: ExperimentConfig) -> Dict[str, Any]:
    sample = sample_covariance(generate_data(model, seed, cfg.dist))
    r, K = model.r, sample.K
    overlaps = (model.basis.T @ sample.basis[:, r:K]) ** 2
    deviation = w @ overlaps - profile
    return {"rep": rep, "seed": seed, "max_abs_deviation": float(np.max(np.abs(deviation))),
            "deviation": deviation.tolist()}


def run_que_experiment(cfg: ExperimentConfig, weights: Optional[np.ndarray] = None) -> ExperimentResult:
    """Σⱼ wⱼ|⟨uᵢ, vⱼ⟩|² − p⁻¹Σⱼ wⱼ φ(vⱼ, vⱼ, γ_{i−r}) along the bulk"""
    started = time.perf_counter()
    model = cfg.resolve_model()
    w = cfg.weight_vector(model.p) if weights is None else np.asarray(weights, dtype=np.float64)
    if np.max(np.abs(w)) > 1.0:
        raise ConfigError("QUE weights must satisfy |w| <= 1")
    mp = MPLawTable.build(model.base)
    gammas = _bulk_gammas(model, mp)
    profile = phi_weights(gammas, model) @ w / model.p

    task = partial(_que_replication, model=model, w=w, profile=profile, cfg=cfg)
    seeds, records, failures = _run(cfg, task, "que")

    aggregates: Dict[str, Any] = {"eps": QUE_EPS}
    frames = {}
    if records:
        dev = _stack(records, "deviation")
        exceed = np.abs(dev) > QUE_EPS
        aggregates.update({
            "exceedance": float(np.mean(exceed)),
            "max_exceedance": float(np.mean([rec["max_abs_deviation"] > QUE_EPS for rec in records])),
            "mean_abs_deviation": float(np.mean(np.abs(dev))),
        })
        frames["que"] = pd.DataFrame({
            "index": np.arange(model.r + 1, model.r + gammas.size + 1),
            "gamma": gammas,
            "profile": profile,
            "mean_deviation": dev.mean(axis=0),
            "exceedance": exceed.mean(axis=0),
        })

    result = finalize(cfg, records, failures, aggregates, seeds, started)
    if cfg.out is not None:
        write_outputs(result, cfg.out, frames, include_records=False)
    return result


# Risks

def _risk_replication(rep: int, seed: int, model: SpikedModel, Sigma: np.ndarray,
                      cfg: ExperimentConfig) -> Dict[str, Any]:
    loss = cfg.loss_kind
    p = model.p
    sample = sample_covariance(generate_data(model, seed, cfg.dist))
    r, est, st = fit_estimators(sample, r=cfg.rank, method=cfg.spectrum_method,
                                truth=model.base, eta=cfg.eta)
    phi_hat = estimate_shrinkers(loss, sample, est, st, cfg.eps, cfg.stieltjes)
    estimated = assemble_shrunken(sample, loss, phi_hat).matrix

    oracle_phi = optimal_shrinkers(loss, Sigma, sample.basis, sample.K)
    oracle = assemble_shrunken(sample, loss, oracle_phi).matrix
    lhs, rhs = exact_risk_decomposition(loss, Sigma, sample.basis, oracle_phi, sample.K)
    return {
        "rep": rep,
        "seed": seed,
        "r_hat": r,
        "empirical": p * loss_value(loss, Sigma, estimated),
        "oracle": p * loss_value(loss, Sigma, oracle),
        "oracle_identity_gap": abs(lhs - rhs) / max(1.0, abs(lhs)),
    }


def run_risk_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Empirical loss of the estimated shrinkers against the predicted risk, both times p"""
    started = time.perf_counter()
    model = cfg.resolve_model()
    loss = cfg.loss_kind
    mp = MPLawTable.build(model.base)
    theta = {ell: theta_vector(model, mp, ell) for ell in loss.ell_set}
    predicted = model.p * asymptotic_risk(loss, theta, model)
    logger.info(f"Predicted {loss.value} risk (x p) {predicted:.6g}")

    task = partial(_risk_replication, model=model, Sigma=model.covariance(), cfg=cfg)
    seeds, records, failures = _run(cfg, task, "risk")

    aggregates: Dict[str, Any] = {"loss": loss.value, "predicted": predicted}
    frames = {}
    if records:
        empirical = _stack(records, "empirical")
        oracle = _stack(records, "oracle")
        identity_gap = _stack(records, "oracle_identity_gap")
        mean = float(empirical.mean())
        aggregates.update({
            "mean_empirical": mean,
            "var_empirical": float(empirical.var(ddof=1)) if empirical.size > 1 else 0.0,
            "mean_oracle": float(oracle.mean()),
            "relative_gap": abs(mean - predicted) / abs(predicted) if predicted else float("inf"),
            "max_oracle_identity_gap": float(identity_gap.max()),
            "mean_oracle_identity_gap": float(identity_gap.mean()),
        })
        if identity_gap.max() > IDENTITY_TOL:
            logger.warning(f"Exact risk decomposition off by {identity_gap.max():.3e} (relative)")
        frames["risk"] = pd.DataFrame(records)[
            ["rep", "seed", "r_hat", "empirical", "oracle", "oracle_identity_gap"]
        ].assign(predicted=predicted)

    result = finalize(cfg, records, failures, aggregates, seeds, started)
    if cfg.out is not None:
        write_outputs(result, cfg.out, frames, include_records=False)
    return result


# Spikes

def _spike_replication(rep: int, seed: int, model: SpikedModel, locations: np.ndarray,
                       cfg: ExperimentConfig) -> Dict[str, Any]:
    spiked = sample_covariance(generate_data(model, seed, cfg.dist))
    plain = sample_covariance(generate_data(model.without_spikes(), seed, cfg.dist))
    r, K = model.r, spiked.K
    sticking = np.max(np.abs(spiked.eigenvalues[r:K] - plain.eigenvalues[: K - r]))
    record = {"rep": rep, "seed": seed, "r_hat": estimate_rank(spiked),
              "sticking": float(sticking)}
    if locations.size:
        record["outlier_gap"] = float(abs(spiked.eigenvalues[0] - locations[0]))
        record["overlap"] = float((model.basis[:, 0] @ spiked.basis[:, 0]) ** 2)
        st = sample_stieltjes(spiked, r)
        record["sigma_tilde_gap"] = float(abs(st.sigma_tilde_hat[0] - model.spike_values[0]))
    return record


def run_spike_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Outlier locations, eigenvector overlaps and eigenvalue sticking"""
    started = time.perf_counter()
    model = cfg.resolve_model()
    mp = MPLawTable.build(model.base)
    outliers = outlier_asymptotics(model, mp)
    n = model.n

    task = partial(_spike_replication, model=model, locations=outliers.locations, cfg=cfg)
    seeds, records, failures = _run(cfg, task, "spikes")

    aggregates: Dict[str, Any] = {
        "locations": outliers.locations.tolist(),
        "overlap_limits": outliers.overlaps.tolist(),
        "sticking_bound": 20.0 / n,
    }
    if records:
        sticking = _stack(records, "sticking")
        aggregates["sticking_within_bound"] = float(np.mean(sticking <= 20.0 / n))
        aggregates["rank_recovery"] = float(np.mean([rec["r_hat"] == model.r for rec in records]))
        if len(outliers):
            gaps = _stack(records, "outlier_gap")
            aggregates["outlier_bound"] = 5.0 / np.sqrt(n)
            aggregates["outlier_within_bound"] = float(np.mean(gaps <= 5.0 / np.sqrt(n)))
            aggregates["mean_overlap"] = float(_stack(records, "overlap").mean())
            sigma_gaps = _stack(records, "sigma_tilde_gap")
            aggregates["sigma_tilde_bound"] = SIGMA_TILDE_TOL
            aggregates["sigma_tilde_within_bound"] = float(np.mean(sigma_gaps <= SIGMA_TILDE_TOL))

    result = finalize(cfg, records, failures, aggregates, seeds, started)
    if cfg.out is not None:
        write_outputs(result, cfg.out, {"spikes": pd.DataFrame(records)} if records else {},
                      include_records=False)
    return result


# MP law dump

def mp_frames(table: MPLawTable) -> Dict[str, pd.DataFrame]:
    edges = pd.DataFrame({
        "k": np.arange(1, table.edges.size + 1),
        "edge": table.edges,
        "companion": table.companions,
    })
    quantiles = pd.DataFrame({"k": np.arange(1, table.quantiles.size + 1), "gamma": table.quantiles})
    E, rho = table.density_grid
    density = pd.DataFrame({"E": E, "density": rho})
    return {"edges": edges, "quantiles": quantiles, "density": density}


def run_mp_dump(cfg: ExperimentConfig) -> ExperimentResult:
    """edges.csv, quantiles.csv and density.csv of the non-spiked law"""
    started = time.perf_counter()
    model = cfg.resolve_model()
    table = MPLawTable.build(model.base)
    report = table.regularity()
    aggregates = {
        "q": table.q,
        "lambda_plus": table.lambda_plus,
        "lambda_minus": table.lambda_minus,
        "bulk_counts": table.bulk_counts.tolist(),
        "regularity": report.as_dict(),
    }
    result = finalize(cfg, [], [], aggregates, [], started)
    if cfg.out is not None:
        write_outputs(result, cfg.out, mp_frames(table), include_records=False)
    return result


RUNNERS = {
    "shrinkers": run_shrinker_experiment,
    "eigvec-variance": run_eigvec_variance_experiment,
    "que": run_que_experiment,
    "risk": run_risk_experiment,
    "spikes": run_spike_experiment,
    "mp-dump": run_mp_dump,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    return RUNNERS[cfg.experiment](cfg)
