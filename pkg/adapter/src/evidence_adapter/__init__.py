"""Serving adapter for the evidence predictor wire protocol."""

from .cli import main
from .linear import reference_linear_model
from .serve import PROB_SUM_TOL, serve

__all__ = ["main", "reference_linear_model", "serve", "PROB_SUM_TOL"]

__version__ = "0.1.0"
