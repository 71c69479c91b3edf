"""Coordinate-ascent EM for nonlinear state-space models.

Configuration arguments accept either a path to a YAML file or YAML text.
"""

from __future__ import annotations

import os
from typing import Optional

import numpy as np

from . import _core
from ._core import ConfigError, NumericalError, lorenz_benchmark, rts_linear, smooth_linear

__all__ = [
    "ConfigError",
    "NumericalError",
    "evaluate",
    "fit",
    "lorenz_benchmark",
    "rts_linear",
    "simulate",
    "smooth_linear",
]


def _yaml(config: str | os.PathLike) -> str:
    if isinstance(config, os.PathLike) or (isinstance(config, str) and "\n" not in config
                                           and config.endswith((".yaml", ".yml"))):
        with open(config, encoding="utf-8") as f:
            return f.read()
    return str(config)


def simulate(config, seed: Optional[int] = None) -> dict:
    """Generate the dataset of an experiment configuration."""
    return _core.simulate(_yaml(config), seed)


def fit(config, algorithm: str = "ceem", seed: Optional[int] = None) -> dict:
    """Fit an experiment with CE-EM ("ceem") or particle EM ("pem")."""
    return _core.fit(_yaml(config), algorithm, seed)


def evaluate(config, theta, seed: Optional[int] = None) -> dict:
    """Dynamics error and EKF prediction RMSE of parameters ``theta``."""
    return _core.evaluate(_yaml(config), np.asarray(theta, dtype=float), seed)
