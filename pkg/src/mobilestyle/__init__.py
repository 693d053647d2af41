"""Numpy inference engine for wavelet-domain style-based generators."""

__version__ = "0.1.0"

from .config import GeneratorConfig, load_config, save_config
from .synthesis import Generator, generate
from .weights import WeightContainer, init_random, load_weights, save_weights

__all__ = ["GeneratorConfig", "Generator", "WeightContainer", "generate", "init_random",
           "load_config", "load_weights", "save_config", "save_weights", "__version__"]
