"""Randomized-smoothing certification (CERTIFY, T-CERTIFY) and ADRE-regularized training."""

__version__ = "0.1.0"

from .bounds import SignificanceSplit, bound_pair, cp_lower, runnerup_upper
from .models import LinearClassifier, MLP, TableClassifier, load_model, save_model
from .smoothing import (
    CertificationOutcome,
    CertificationParams,
    SmoothingConfig,
    certified_radius,
    certify_baseline,
    predict_smoothed,
    sample_under_noise,
    t_certify,
)
from .training import AdversarialConfig, TrainConfig, train

__all__ = [
    "SignificanceSplit",
    "bound_pair",
    "cp_lower",
    "runnerup_upper",
    "LinearClassifier",
    "MLP",
    "TableClassifier",
    "load_model",
    "save_model",
    "CertificationOutcome",
    "CertificationParams",
    "SmoothingConfig",
    "certified_radius",
    "certify_baseline",
    "predict_smoothed",
    "sample_under_noise",
    "t_certify",
    "AdversarialConfig",
    "TrainConfig",
    "train",
]
