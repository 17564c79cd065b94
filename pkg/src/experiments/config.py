from pydantic import BaseModel, Field, field_validator, model_validator
from typing import Any, Dict, List, Literal, Optional
from pathlib import Path
import logging

import numpy as np

from ..config import settings
from ..errors import ConfigError
from ..shrinkage.losses import Ell, LossKind, as_ell
from ..spectral.catalog import SETTING_IDS, build_setting, load_custom_model
from ..spectral.population import SpikedModel

logger = logging.getLogger(__name__)

ExperimentKind = Literal["shrinkers", "eigvec-variance", "que", "risk", "mp-dump", "spikes"]


class ExperimentConfig(BaseModel):
    experiment: ExperimentKind = "shrinkers"
    setting: str = "i"  # a named setting or "custom" with spectrum_file
    spectrum_file: Optional[Path] = None
    p: int = Field(300, ge=2)
    n: int = Field(600, ge=1)
    reps: Optional[int] = Field(None, ge=1)
    seed: int = 0
    loss: str = "Frobenius"
    ell: str = "x"
    eps: Optional[float] = Field(None, gt=0)
    eta: Optional[float] = Field(None, ge=0)
    spectrum_method: Literal["moment", "oracle"] = "moment"
    stieltjes: Optional[Literal["fitted", "sample"]] = None  # None follows settings.BULK_STIELTJES
    rank: Optional[int] = Field(None, ge=0)  # None estimates the rank per replication
    direction: Literal["leading", "custom"] = "leading"
    custom_direction: Optional[List[float]] = None
    weights: Literal["ones", "alternating", "zeros", "custom"] = "ones"
    custom_weights: Optional[List[float]] = None
    dist: Literal["gaussian", "rademacher"] = "gaussian"
    workers: int = Field(default_factory=lambda: settings.WORKERS, ge=1)
    out: Optional[Path] = None

    @field_validator("setting")
    @classmethod
    def _known_setting(cls, value: str) -> str:
        key = value.strip().lower()
        if key != "custom" and key not in SETTING_IDS:
            raise ValueError(f"unknown setting '{value}', choose from {', '.join(SETTING_IDS)} or custom")
        return key

    @field_validator("loss")
    @classmethod
    def _known_loss(cls, value: str) -> str:
        return LossKind.parse(value).value

    @field_validator("ell")
    @classmethod
    def _known_ell(cls, value: str) -> str:
        return as_ell(value).value

    @model_validator(mode="after")
    def _check(self) -> "ExperimentConfig":
        if self.setting == "custom" and self.spectrum_file is None:
            raise ValueError("setting 'custom' needs a spectrum file")
        if self.spectrum_file is not None and self.setting != "custom":
            self.setting = "custom"
        if abs(self.p / self.n - 1.0) < settings.TAU_RATIO:
            logger.warning(f"p/n = {self.p / self.n:.4f} is within {settings.TAU_RATIO} of 1")
        if self.direction == "custom" and not self.custom_direction:
            raise ValueError("direction 'custom' needs custom_direction")
        if self.weights == "custom":
            if not self.custom_weights:
                raise ValueError("weights 'custom' needs custom_weights")
            if max(abs(w) for w in self.custom_weights) > 1.0:
                raise ValueError("QUE weights must satisfy |w| <= 1")
        return self

    @property
    def loss_kind(self) -> LossKind:
        return LossKind.parse(self.loss)

    @property
    def ell_fn(self) -> Ell:
        return Ell(self.ell)

    @property
    def replications(self) -> int:
        if self.reps is not None:
            return self.reps
        if self.experiment == "eigvec-variance":
            return settings.DEFAULT_REPS_EIGVEC
        return settings.DEFAULT_REPS_CURVES

    @property
    def output_dir(self) -> Path:
        return Path(settings.OUTPUT_DIR) / self.experiment if self.out is None else Path(self.out)

    def resolve_model(self) -> SpikedModel:
        if self.setting == "custom":
            model = load_custom_model(self.spectrum_file, self.n)
            if model.p != self.p:
                logger.info(f"Spectrum file sets p={model.p} (overrides p={self.p})")
            return model
        return build_setting(self.setting, self.p, self.n)

    def direction_vector(self, model: SpikedModel) -> np.ndarray:
        if self.direction == "leading":
            return model.basis[:, 0].copy()
        v = np.asarray(self.custom_direction, dtype=np.float64)
        if v.shape != (model.p,):
            raise ConfigError(f"custom direction must have length p={model.p}, got {v.size}")
        norm = np.linalg.norm(v)
        if norm == 0:
            raise ConfigError("custom direction must be nonzero")
        return v / norm

    def weight_vector(self, p: int) -> np.ndarray:
        if self.weights == "ones":
            return np.ones(p)
        if self.weights == "zeros":
            return np.zeros(p)
        if self.weights == "alternating":
            return (-1.0) ** np.arange(1, p + 1)
        w = np.asarray(self.custom_weights, dtype=np.float64)
        if w.shape != (p,):
            raise ConfigError(f"custom weights must have length p={p}, got {w.size}")
        return w


class Provenance(BaseModel):
    config: Dict[str, Any]
    library_version: str
    wall_time: float
    seeds: List[int] = []


class ExperimentResult(BaseModel):
    experiment: str
    records: List[Dict[str, Any]]
    aggregates: Dict[str, Any] = {}
    failures: List[Dict[str, Any]] = []
    provenance: Optional[Provenance] = None

    @property
    def failure_count(self) -> int:
        return len(self.failures)

    @property
    def succeeded(self) -> int:
        return len(self.records)
