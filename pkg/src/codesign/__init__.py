"""Task-aware compression of forecasts for model-predictive control.

Modules: ``timeseries`` (data), ``lqr`` and ``codec`` (closed-form input-driven
LQR and optimal linear codecs), ``mpc`` (box-constrained receding-horizon
control), ``autodiff`` and ``diffmpc`` (reverse-mode gradients through plans),
``forecaster`` and ``trainer`` (learned codecs), ``scenarios`` and ``harness``
(experiments), ``cli``.
"""
from .errors import (CodesignError, ConfigError, DimensionError, DivergenceError, IllConditionedError,
                     ParseError, SolverError)

__version__ = "0.1.0"

__all__ = ["CodesignError", "ConfigError", "DimensionError", "DivergenceError", "IllConditionedError",
           "ParseError", "SolverError", "__version__"]
