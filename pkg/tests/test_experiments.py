import json

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

from src.errors import ConfigError, EstimationError
from src.estimation import estimated_theta, estimated_xi_curve, fit_estimators
from src.experiments import (
    ExperimentConfig,
    ReplicationRunner,
    replication_seeds,
    run_experiment,
    run_que_experiment,
)
from src.shrinkage import Ell
from src.spectral import build_setting, generate_data, sample_covariance


def flaky_task(rep: int, seed: int):
    if rep == 1:
        raise EstimationError("empty bulk range")
    return {"rep": rep, "seed": seed, "value": float(rep)}


def test_config_defaults_and_normalization():
    cfg = ExperimentConfig(loss="fro", setting="IV")
    assert cfg.loss == "Frobenius"
    assert cfg.setting == "iv"
    assert cfg.replications == 50
    assert ExperimentConfig(experiment="eigvec-variance").replications == 1000
    assert ExperimentConfig(reps=7).replications == 7


@pytest.mark.parametrize("kwargs", [
    {"setting": "vii"},
    {"setting": "custom"},
    {"loss": "hinge"},
    {"ell": "cube"},
    {"p": 1},
    {"eps": 0.0},
    {"weights": "custom", "custom_weights": [0.5, 2.0]},
    {"direction": "custom"},
])
def test_config_rejects_bad_values(kwargs):
    with pytest.raises(ValidationError):
        ExperimentConfig(**kwargs)


def test_config_vectors():
    cfg = ExperimentConfig(setting="identity", p=4, n=8, weights="alternating")
    np.testing.assert_array_equal(cfg.weight_vector(4), [-1.0, 1.0, -1.0, 1.0])
    custom = ExperimentConfig(setting="identity", p=4, n=8, direction="custom",
                              custom_direction=[3.0, 4.0, 0.0, 0.0])
    model = custom.resolve_model()
    np.testing.assert_allclose(custom.direction_vector(model), [0.6, 0.8, 0.0, 0.0])
    short = ExperimentConfig(setting="identity", p=4, n=8, direction="custom", custom_direction=[1.0])
    with pytest.raises(ConfigError):
        short.direction_vector(model)


def test_replication_seeds_are_reproducible_and_distinct():
    seeds = replication_seeds(42, 20)
    assert seeds == replication_seeds(42, 20)
    assert len(set(seeds)) == 20
    assert seeds != replication_seeds(43, 20)
    assert replication_seeds(42, 5) == seeds[:5]


def test_runner_records_failures():
    records, failures = ReplicationRunner(flaky_task, label="flaky").run(replication_seeds(0, 3))
    assert [rec["rep"] for rec in records] == [0, 2]
    assert len(failures) == 1
    assert failures[0]["rep"] == 1
    assert failures[0]["error"] == "EstimationError"


def test_mp_dump_identity_edges(tmp_path):
    cfg = ExperimentConfig(experiment="mp-dump", setting="identity", p=100, n=200, out=tmp_path)
    result = run_experiment(cfg)
    assert result.aggregates["q"] == 1
    edges = pd.read_csv(tmp_path / "edges.csv")
    assert edges["edge"].round(5).tolist() == [2.91421, 0.08579]
    quantiles = pd.read_csv(tmp_path / "quantiles.csv")
    assert len(quantiles) == 100
    density = pd.read_csv(tmp_path / "density.csv")
    assert (density["density"] >= 0).all()
    payload = json.loads((tmp_path / "result.json").read_text())
    assert payload["experiment"] == "mp-dump"
    assert payload["provenance"]["config"]["setting"] == "identity"


def test_mp_dump_two_bulks():
    result = run_experiment(ExperimentConfig(experiment="mp-dump", setting="iv", p=300, n=600))
    assert result.aggregates["q"] == 2
    assert result.aggregates["bulk_counts"] == [150, 300]


def test_shrinker_experiment_is_reproducible(tmp_path):
    kwargs = dict(experiment="shrinkers", setting="identity", p=40, n=120, reps=3, rank=0,
                  spectrum_method="oracle", ell="x")
    first = run_experiment(ExperimentConfig(out=tmp_path / "a", **kwargs))
    second = run_experiment(ExperimentConfig(out=tmp_path / "b", **kwargs))
    assert first.succeeded == 3 and first.failure_count == 0
    frame = pd.read_csv(tmp_path / "a" / "shrinkers.csv")
    assert list(frame.columns) == ["index", "empirical", "estimated", "theoretical", "loss", "ell"]
    assert len(frame) == 40
    assert (tmp_path / "a" / "shrinkers.csv").read_bytes() == (tmp_path / "b" / "shrinkers.csv").read_bytes()
    assert first.provenance.seeds == second.provenance.seeds


def test_risk_experiment_oracle_identity(tmp_path):
    cfg = ExperimentConfig(experiment="risk", setting="ii", p=40, n=120, reps=2, rank=1,
                           spectrum_method="oracle", loss="Frobenius", out=tmp_path)
    result = run_experiment(cfg)
    frame = pd.read_csv(tmp_path / "risk.csv")
    assert (frame["oracle_identity_gap"] < 1e-8).all()
    payload = json.loads((tmp_path / "result.json").read_text())
    assert payload["aggregates"]["max_oracle_identity_gap"] < 1e-8
    assert result.succeeded == 2
    assert all(rec["oracle_identity_gap"] < 1e-8 for rec in result.records)
    assert result.aggregates["max_oracle_identity_gap"] < 1e-8
    assert result.aggregates["mean_oracle_identity_gap"] <= result.aggregates["max_oracle_identity_gap"]
    assert result.aggregates["predicted"] > 0
    assert all(rec["empirical"] >= rec["oracle"] - 1e-9 for rec in result.records)


def test_spike_experiment_reports_limits():
    cfg = ExperimentConfig(experiment="spikes", setting="i", p=100, n=200, reps=2)
    result = run_experiment(cfg)
    assert len(result.aggregates["locations"]) == 1
    assert result.aggregates["sticking_bound"] == pytest.approx(0.1)
    assert all("overlap" in rec and "sigma_tilde_gap" in rec for rec in result.records)
    assert 0.0 <= result.aggregates["sigma_tilde_within_bound"] <= 1.0


def test_que_experiment(tmp_path):
    cfg = ExperimentConfig(experiment="que", setting="identity", p=40, n=80, reps=2,
                           weights="alternating", out=tmp_path)
    result = run_experiment(cfg)
    assert 0.0 <= result.aggregates["exceedance"] <= 1.0
    assert (tmp_path / "que.csv").exists()
    with pytest.raises(ConfigError):
        run_que_experiment(cfg, weights=np.full(40, 1.5))


def test_eigvec_experiment_identity_profile():
    cfg = ExperimentConfig(experiment="eigvec-variance", setting="identity", p=40, n=80, reps=4,
                           spectrum_method="oracle")
    result = run_experiment(cfg)
    np.testing.assert_allclose(result.aggregates["theoretical"], 1.0, atol=1e-6)
    assert len(result.aggregates["empirical"]) == 40


@pytest.mark.slow
@pytest.mark.parametrize("setting", ["i", "ii", "iii", "iv"])
def test_outliers_and_sticking_at_scale(setting):
    cfg = ExperimentConfig(experiment="spikes", setting=setting, p=300, n=600, reps=200, workers=4)
    result = run_experiment(cfg)
    assert result.aggregates["rank_recovery"] >= 0.95
    if setting == "i":
        assert result.aggregates["outlier_within_bound"] >= 0.9
        assert result.aggregates["sticking_within_bound"] >= 0.9


@pytest.mark.slow
def test_identity_eigenvector_variances():
    cfg = ExperimentConfig(experiment="eigvec-variance", setting="identity", p=300, n=600, reps=1000,
                           spectrum_method="oracle", workers=4)
    result = run_experiment(cfg)
    empirical = np.array(result.aggregates["empirical"])
    assert np.mean(np.abs(empirical - 1.0) <= 0.1) >= 0.9


@pytest.mark.slow
@pytest.mark.parametrize("setting,ell", [
    ("i", "x"), ("ii", "x"), ("iii", "x"), ("iv", "x"),
    ("i", "xinv"), ("ii", "xinv"), ("iii", "xinv"), ("iv", "xinv"),
])
def test_estimated_shrinkers_track_the_empirical_curve(setting, ell):
    cfg = ExperimentConfig(experiment="shrinkers", setting=setting, ell=ell, p=300, n=600,
                           reps=50, workers=4)
    result = run_experiment(cfg)
    assert result.failure_count == 0
    assert result.aggregates["mean_abs_estimated_empirical"] <= 0.1
    assert result.aggregates["mean_abs_theoretical_empirical"] <= 0.1


@pytest.mark.slow
def test_xi_hat_on_the_identity():
    cfg = ExperimentConfig(experiment="shrinkers", setting="identity", ell="x", p=300, n=600,
                           reps=20, stieltjes="sample", workers=4)
    result = run_experiment(cfg)
    assert result.aggregates["mean_abs_estimated_empirical"] <= 0.1
    estimated = np.array(result.aggregates["estimated"])
    theoretical = np.array(result.aggregates["theoretical"])
    assert np.mean(np.abs(estimated - theoretical)) <= 0.1


@pytest.mark.slow
@pytest.mark.parametrize("setting", ["i", "ii"])
def test_fitted_vartheta_agrees_with_xi_hat(setting):
    model = build_setting(setting, 300, 600)
    gaps = []
    for seed in replication_seeds(11, 10):
        sample = sample_covariance(generate_data(model, seed))
        r, est, st = fit_estimators(sample)
        fitted = estimated_theta(Ell.X, sample, est, st, stieltjes="fitted")
        xi_hat = estimated_xi_curve(sample, st)
        gaps.append(np.mean(np.abs(fitted[r: sample.K] - xi_hat[r: sample.K])))
    assert np.mean(gaps) <= 0.05


@pytest.mark.slow
@pytest.mark.parametrize("setting", ["i", "iv"])
@pytest.mark.parametrize("loss", ["Frobenius", "Stein"])
def test_risk_matches_the_prediction(setting, loss):
    cfg = ExperimentConfig(experiment="risk", setting=setting, loss=loss, p=300, n=600,
                           reps=50, workers=4)
    result = run_experiment(cfg)
    assert result.failure_count == 0
    assert result.aggregates["relative_gap"] <= 0.1
    assert result.aggregates["max_oracle_identity_gap"] < 1e-8


@pytest.mark.slow
def test_que_with_alternating_weights():
    cfg = ExperimentConfig(experiment="que", setting="ii", p=300, n=600, reps=500,
                           weights="alternating", workers=4)
    result = run_experiment(cfg)
    assert result.aggregates["exceedance"] <= 0.1


@pytest.mark.slow
@pytest.mark.parametrize("setting", ["two-atom", "linear"])
def test_eigenvector_variances_on_non_identity_models(setting):
    cfg = ExperimentConfig(experiment="eigvec-variance", setting=setting, p=300, n=600, reps=1000,
                           spectrum_method="oracle", workers=4)
    result = run_experiment(cfg)
    assert result.aggregates["within_tolerance"] >= 0.9


@pytest.mark.slow
def test_spike_estimate_at_large_n():
    # σ̃̂ spread ~ n^{-1/2}
    cfg = ExperimentConfig(experiment="spikes", setting="i", p=200, n=4000, reps=200, workers=4)
    result = run_experiment(cfg)
    assert result.aggregates["sigma_tilde_within_bound"] >= 0.9
