from .population import PopulationSpectrum, SampleSpectrum, Spike, SpikedModel
from .sampling import generate_data, make_rng, random_orthogonal, sample_covariance
from .catalog import SETTING_IDS, build_setting, load_custom_model, parse_spectrum_file, parse_weights_file

__all__ = [
    "PopulationSpectrum",
    "SampleSpectrum",
    "Spike",
    "SpikedModel",
    "generate_data",
    "make_rng",
    "random_orthogonal",
    "sample_covariance",
    "SETTING_IDS",
    "build_setting",
    "load_custom_model",
    "parse_spectrum_file",
    "parse_weights_file",
]
