"""Population models used in the simulations.

Settings (i)-(iv) carry one spike; identity, two-atom and linear are
non-spiked reference models. Custom models are read from a text file with
one non-spiked eigenvalue per line and optional ``spike VALUE`` lines.
"""

from pathlib import Path
from typing import List, Optional, Union
import logging

import numpy as np
from scipy import linalg

from .population import PopulationSpectrum, SpikedModel
from .sampling import random_orthogonal
from ..errors import ConfigError, DomainError

logger = logging.getLogger(__name__)

SETTING_IDS = ("i", "ii", "iii", "iv", "identity", "two-atom", "linear")
DEFAULT_BASIS_SEED = 20240101


def _require_even(setting_id: str, p: int):
    if p % 2:
        raise DomainError(f"setting ({setting_id}) needs an even dimension, got p={p}")


def _two_block(high: float, low: float, p: int) -> np.ndarray:
    half = p // 2
    return np.concatenate([np.full(p - half, high), np.full(half, low)])


def build_setting(setting_id: str, p: int, n: int,
                  basis_seed: Optional[int] = DEFAULT_BASIS_SEED) -> SpikedModel:
    """Exact population model of a named setting"""
    key = setting_id.strip().lower()
    if key not in SETTING_IDS:
        raise DomainError(f"Unknown setting '{setting_id}', choose from {', '.join(SETTING_IDS)}")
    if p < 2:
        raise DomainError(f"dimension must be at least 2, got p={p}")

    basis = None
    spikes: List[float] = []

    if key == "i":
        _require_even(key, p)
        sigmas = _two_block(3.0, 1.0, p)
        spikes = [9.0]
        basis = random_orthogonal(p, basis_seed)
    elif key == "ii":
        sigmas = np.linspace(2.0, 1.0, p)
        spikes = [9.0]
        basis = random_orthogonal(p, basis_seed)
    elif key == "iii":
        toeplitz = linalg.toeplitz(0.4 ** np.arange(p))
        values, vectors = linalg.eigh(toeplitz)
        sigmas = values[::-1].copy()
        basis = vectors[:, ::-1].copy()
        spikes = [9.0]
    elif key == "iv":
        _require_even(key, p)
        sigmas = _two_block(8.0, 1.0, p)
        spikes = [15.0]
        basis = random_orthogonal(p, basis_seed)
    elif key == "identity":
        sigmas = np.ones(p)
    elif key == "two-atom":
        _require_even(key, p)
        sigmas = _two_block(3.0, 1.0, p)
    else:
        sigmas = 1.0 + np.arange(p, 0, -1) / p

    base = PopulationSpectrum(sigmas, n)
    model = SpikedModel.with_spikes(base, spikes, eigenbasis=basis)
    logger.debug(f"Built setting ({key}) with p={p}, n={n}, r={model.r}")
    return model


def parse_spectrum_file(path: Union[str, Path]):
    """Read non-spiked values and spike values from a spectrum file"""
    values: List[float] = []
    spikes: List[float] = []
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as e:
        raise ConfigError(f"Cannot read spectrum file {path}: {e}") from e

    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0].lower() == "spike" and len(parts) == 2:
                spikes.append(float(parts[1]))
            elif len(parts) == 1:
                values.append(float(parts[0]))
            else:
                raise ValueError(line)
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: cannot parse '{raw.strip()}'")

    if not values:
        raise ConfigError(f"{path}: no population eigenvalues found")
    if any(v <= 0 for v in values + spikes):
        raise ConfigError(f"{path}: eigenvalues must be positive")
    return values, sorted(spikes, reverse=True)


def parse_weights_file(path: Union[str, Path]) -> List[float]:
    """One signed weight per line, '#' comments allowed"""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as e:
        raise ConfigError(f"Cannot read weights file {path}: {e}") from e

    weights: List[float] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            weights.append(float(line))
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: cannot parse '{raw.strip()}'")
    if not weights:
        raise ConfigError(f"{path}: no weights found")
    return weights


def load_custom_model(path: Union[str, Path], n: int) -> SpikedModel:
    """Spiked model from a spectrum file; spikes replace the top non-spiked values"""
    values, spikes = parse_spectrum_file(path)
    base = PopulationSpectrum.from_values(values, n)
    if len(spikes) >= base.p:
        raise ConfigError(f"{len(spikes)} spikes leave no bulk in a {base.p}-dimensional model")
    for value, sigma in zip(spikes, base.sigmas):
        if value < sigma:
            raise ConfigError(f"spike {value} is below the population value {sigma} it replaces")
    logger.info(f"Loaded custom spectrum with p={base.p} and {len(spikes)} spikes from {path}")
    return SpikedModel.with_spikes(base, spikes)
