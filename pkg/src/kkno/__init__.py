"""Kantorovich-kernel smoothing operators: kernels, layers, asymptotics and PDE limits."""

__version__ = "0.1.0"

from .kernels import (CellUniform, Drifted, Gaussian, QuadOrders, check_admissible,  # noqa: E402
                      make_cell_uniform, make_drifted, make_gaussian, moments)
from .numerics import (Domain, GridFunction, eval_interp, sample_to_grid, sup_norm_diff,  # noqa: E402
                       test_function)
from .operator import OperatorConfig, apply_grid, apply_point, compose, schedule  # noqa: E402

__all__ = [
    "CellUniform", "Drifted", "Gaussian", "QuadOrders", "check_admissible", "make_cell_uniform",
    "make_drifted", "make_gaussian", "moments", "Domain", "GridFunction", "eval_interp",
    "sample_to_grid", "sup_norm_diff", "test_function", "OperatorConfig", "apply_grid",
    "apply_point", "compose", "schedule",
]
