"""Command-line entry point.

    python -m src.cli mp-law --setting iv --p 300 --n 600
    python -m src.cli simulate --setting i --ell xinv --reps 50 --seed 7
"""

from typing import Dict, List, Optional
import argparse
import json
import logging
import sys

import numpy as np
import pandas as pd
from pydantic import ValidationError

from .config import settings
from .errors import ConfigError, DomainError, ShrinkageError
from .estimation.shrinkers import build_shrinker_report, fit_estimators
from .experiments.config import ExperimentConfig
from .experiments.runners import RUNNERS
from .mp_law.table import MPLawTable
from .shrinkage.losses import Ell, LossKind
from .spectral.catalog import SETTING_IDS, parse_weights_file
from .spectral.sampling import generate_data, sample_covariance

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

WEIGHT_PATTERNS = ("ones", "alternating", "zeros")

COMMANDS: Dict[str, str] = {
    "mp-law": "mp-dump",
    "simulate": "shrinkers",
    "risk": "risk",
    "spikes": "spikes",
    "eigvec": "eigvec-variance",
    "que": "que",
}


def _common(parser: argparse.ArgumentParser):
    parser.add_argument("--setting", default="i", choices=list(SETTING_IDS) + ["custom"])
    parser.add_argument("--spectrum", default=None, help="spectrum file: one value per line, 'spike VALUE' lines")
    parser.add_argument("--p", type=int, default=300)
    parser.add_argument("--n", type=int, default=600)
    parser.add_argument("--reps", type=int, default=None)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--loss", default="Frobenius", help=", ".join(k.value for k in LossKind))
    parser.add_argument("--ell", default="x", choices=[e.value for e in Ell])
    parser.add_argument("--eps", type=float, default=None, help=f"truncation ε (default {settings.SHRINK_EPS})")
    parser.add_argument("--eta", type=float, default=None, help="η of the sample Stieltjes transform (default n^-1/2)")
    parser.add_argument("--method", default="moment", choices=["moment", "oracle"],
                        help="population spectrum estimator")
    parser.add_argument("--rank", type=int, default=None, help="number of spikes (estimated if omitted)")
    parser.add_argument("--dist", default="gaussian", choices=["gaussian", "rademacher"])
    parser.add_argument("--weights", default="ones",
                        help=f"QUE weights: {', '.join(WEIGHT_PATTERNS)} or a file with one weight per line")
    parser.add_argument("--stieltjes", default=None, choices=["fitted", "sample"],
                        help=f"bulk Stieltjes source for ϑ̂ (default {settings.BULK_STIELTJES})")
    parser.add_argument("--workers", type=int, default=settings.WORKERS)
    parser.add_argument("--out", default=None, help=f"output directory (default {settings.OUTPUT_DIR}/<experiment>)")
    parser.add_argument("--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shrinkage",
                                     description="Invariant nonlinear shrinkage of covariance matrices")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "mp-law": "edges, quantiles and density of the deformed Marchenko-Pastur law",
        "estimate": "data-driven shrinkers for one sample",
        "simulate": "Monte Carlo shrinker curves",
        "risk": "empirical versus predicted risk",
        "spikes": "outlier locations and eigenvalue sticking",
        "eigvec": "eigenvector variance profile",
        "que": "quantum unique ergodicity deviations",
    }
    for name, text in helps.items():
        command = sub.add_parser(name, help=text)
        _common(command)
        if name == "estimate":
            command.add_argument("--data", default=None,
                                 help="CSV with a p x n data matrix (no header); simulated if omitted")
    return parser


def config_from_args(args: argparse.Namespace, experiment: str) -> ExperimentConfig:
    out = args.out
    if out is None:
        out = f"{settings.OUTPUT_DIR}/{args.command}"
    weights, custom_weights = args.weights, None
    if weights not in WEIGHT_PATTERNS:
        weights, custom_weights = "custom", parse_weights_file(args.weights)
    return ExperimentConfig(
        experiment=experiment,
        setting="custom" if args.spectrum else args.setting,
        spectrum_file=args.spectrum,
        p=args.p,
        n=args.n,
        reps=args.reps,
        seed=args.seed,
        loss=args.loss,
        ell=args.ell,
        eps=args.eps,
        eta=args.eta,
        spectrum_method=args.method,
        rank=args.rank,
        dist=args.dist,
        weights=weights,
        custom_weights=custom_weights,
        stieltjes=args.stieltjes,
        workers=args.workers,
        out=out,
    )


def _load_data(path: str) -> np.ndarray:
    try:
        return pd.read_csv(path, header=None).to_numpy(dtype=np.float64)
    except (OSError, ValueError) as e:
        raise ConfigError(f"Cannot read data matrix {path}: {e}") from e


def run_estimate(args: argparse.Namespace, cfg: ExperimentConfig) -> Dict:
    """Shrinker report for one data matrix, with the truth when it is simulated"""
    loss = cfg.loss_kind
    model = mp = None
    if args.data:
        sample = sample_covariance(_load_data(args.data))
        if cfg.spectrum_method == "oracle":
            raise ConfigError("the oracle spectrum needs a simulated setting")
    else:
        model = cfg.resolve_model()
        mp = MPLawTable.build(model.base)
        sample = sample_covariance(generate_data(model, cfg.seed, cfg.dist))

    r, est, st = fit_estimators(sample, r=cfg.rank, method=cfg.spectrum_method,
                                truth=None if model is None else model.base, eta=cfg.eta)
    report = build_shrinker_report(sample, loss, est, st, cfg.eps, model=model, mp=mp,
                                   stieltjes=cfg.stieltjes)

    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    report.to_csv(out / "shrinkers.csv")
    summary = {
        "p": sample.p,
        "n": sample.n,
        "rank": r,
        "spectrum_fallback": est.fallback,
        "loss": loss.value,
        "risk_pred": report.risk_pred,
        "risk_emp": report.risk_emp,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    return summary


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO)

    experiment = COMMANDS.get(args.command, "shrinkers")
    try:
        cfg = config_from_args(args, experiment)
        cfg.resolve_model()
    except (ValidationError, ConfigError, DomainError) as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_CONFIG

    try:
        if args.command == "estimate":
            summary = run_estimate(args, cfg)
        else:
            result = RUNNERS[experiment](cfg)
            summary = {k: v for k, v in result.aggregates.items() if not isinstance(v, (list, dict))}
    except ConfigError as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_CONFIG
    except ShrinkageError as e:
        logger.error(f"Numerical failure: {e}")
        return EXIT_NUMERIC

    print(json.dumps(summary, indent=2, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
