"""Probability-pattern-guided forecasting on a small numpy autodiff core."""

from .model import PPGFConfig, build, forward, compute_losses, infer
from .train import TrainConfig, fit, grid_search

__all__ = ["PPGFConfig", "build", "forward", "compute_losses", "infer",
           "TrainConfig", "fit", "grid_search"]
__version__ = "0.1.0"
