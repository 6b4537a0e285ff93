"""Legendre activation approximation, LPS initialization, dying-ReLU
analysis, small-MLP training and homotopy continuation."""

from .errors import NumericalError, ValidationError
from .initializers import InitScheme, init_params
from .mlp import NetSpec, ParamSet, forward, train_run
from .poly_approx import PolyCoeffs, project_activation

__all__ = [
    "InitScheme",
    "NetSpec",
    "NumericalError",
    "ParamSet",
    "PolyCoeffs",
    "ValidationError",
    "forward",
    "init_params",
    "project_activation",
    "train_run",
]
__version__ = "0.1.0"
