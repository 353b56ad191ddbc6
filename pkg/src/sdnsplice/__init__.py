"""Blind splicing localisation from inconsistent signal-dependent noise."""

__version__ = "0.1.0"

from .config import Config
from .nlf import Nlf, NlfPrior
from .pipeline import DetectionResult, Metrics, detect, score
from .prior import default_prior, load_prior

__all__ = ["Config", "DetectionResult", "Metrics", "Nlf", "NlfPrior", "default_prior",
           "detect", "load_prior", "score", "__version__"]
