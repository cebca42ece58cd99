"""JSON experiment configuration.

Every field is validated before any computation starts; unknown keys are
rejected. See ``docs/config.md`` for the schema with examples.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..kernels import Kernel, QuadOrders, make_cell_uniform, make_drifted, make_gaussian
from ..numerics import DEFAULT_HERMITE_ORDER, DEFAULT_LEGENDRE_ORDER, test_function

EXPERIMENTS = ("moments", "admissible", "converge", "voronovskaya", "korovkin", "rate",
               "compose", "pde-compare")


class ConfigError(ValueError):
    """Config file unreadable or invalid; maps to exit status 2."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class KernelBlock(_Strict):
    variant: Literal["cell_uniform", "gaussian", "drifted"]
    dimension: int = Field(1, ge=1, le=3)
    matrix: Optional[list[float]] = None  # Gaussian precision, row-major
    base: Optional[Literal["cell_uniform", "gaussian"]] = None
    drift: Optional[list[float]] = None
    decay: Optional[Literal[0, 1]] = None

    @model_validator(mode="after")
    def _consistent(self):
        d = self.dimension
        if self.matrix is not None and len(self.matrix) != d * d:
            raise ValueError(f"matrix needs {d * d} row-major entries for dimension {d}")
        gaussian = self.variant == "gaussian" or self.base == "gaussian"
        if self.matrix is not None and not gaussian:
            raise ValueError("matrix only applies to gaussian kernels")
        if self.variant == "drifted":
            if self.base is None or self.drift is None or self.decay is None:
                raise ValueError("drifted kernels need base, drift and decay")
            if len(self.drift) != d:
                raise ValueError(f"drift needs {d} entries")
        elif self.base is not None or self.drift is not None or self.decay is not None:
            raise ValueError("base, drift and decay only apply to the drifted variant")
        self.build()  # surfaces non-positive-definite matrices as validation errors
        return self

    def build(self) -> Kernel:
        d = self.dimension
        kind = self.base if self.variant == "drifted" else self.variant
        if kind == "gaussian":
            matrix = np.eye(d) if self.matrix is None else np.reshape(self.matrix, (d, d))
            kernel = make_gaussian(matrix)
        else:
            kernel = make_cell_uniform(d)
        if self.variant == "drifted":
            kernel = make_drifted(kernel, self.drift, self.decay)
        return kernel


class QuadBlock(_Strict):
    legendre: int = Field(DEFAULT_LEGENDRE_ORDER, ge=1, le=256)
    hermite: int = Field(DEFAULT_HERMITE_ORDER, ge=1, le=256)

    def orders(self) -> QuadOrders:
        return QuadOrders(self.legendre, self.hermite)


class Tolerances(_Strict):
    moments: float = Field(1e-8, gt=0)
    admissible: float = Field(1e-8, gt=0)
    exact: float = Field(1e-10, gt=0)  # reproduction of constants / linear functions
    monotone: float = Field(1e-10, ge=0)  # slack on nonincreasing checks
    rate: float = Field(0.1, gt=0)
    residual: Optional[float] = Field(None, gt=0)  # bound on the last Voronovskaya residual
    gap: Optional[float] = Field(None, gt=0)  # bound on every pde-compare gap


class ExperimentConfig(_Strict):
    experiment: Literal["moments", "admissible", "converge", "voronovskaya", "korovkin",
                        "rate", "compose", "pde-compare"]
    kernel: KernelBlock
    function: Optional[str] = None
    n_list: list[int] = Field(default_factory=lambda: [8, 16, 32, 64], min_length=1)
    t: float = Field(0.5, ge=0)
    gamma: Literal[1, 2] = 2
    resolution: Optional[int] = Field(None, ge=2, le=4096)
    interp: Optional[Literal["linear", "fourier"]] = None
    p: Optional[Literal[1, 2]] = None
    constant: Optional[float] = Field(None, ge=0)
    expected_rate: Optional[float] = None
    points: Optional[list[list[float]]] = None
    quadrature: QuadBlock = Field(default_factory=QuadBlock)
    tolerances: Tolerances = Field(default_factory=Tolerances)
    output_dir: str = "results"
    plot: bool = False

    @field_validator("n_list")
    @classmethod
    def _increasing(cls, v):
        if any(n < 1 for n in v):
            raise ValueError("every n must be >= 1")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("n_list must be strictly increasing")
        return v

    @model_validator(mode="after")
    def _per_experiment(self):
        d = self.kernel.dimension
        kind = self.experiment
        needs_function = kind in ("converge", "voronovskaya", "rate", "compose", "pde-compare")
        if needs_function and self.function is None:
            raise ValueError(f"function is required for experiment {kind!r}")
        if self.function is not None:
            test_function(self.function, d)
        if kind in ("converge", "rate") and len(self.n_list) < 3:
            raise ValueError("n_list needs at least 3 entries for convergence tables")
        if kind == "converge" and self.constant is None and self.kernel.variant == "drifted":
            raise ValueError("constant: drifted kernels have no explicit bound constant; supply one")
        if kind == "voronovskaya" and self.p is None:
            raise ValueError("p is required for experiment 'voronovskaya'")
        if self.points is not None and any(len(x) != d for x in self.points):
            raise ValueError(f"points must have {d} coordinates each")
        return self

    def content_hash(self) -> str:
        return hashlib.sha256(self.model_dump_json().encode()).hexdigest()


def load_config(path: str | Path) -> tuple[ExperimentConfig, str]:
    """Parse and validate a config file; returns the config and the hash of its bytes."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    try:
        cfg = ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(format_validation_error(exc)) from exc
    return cfg, hashlib.sha256(raw).hexdigest()


def format_validation_error(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        where = ".".join(str(p) for p in err["loc"]) or "<config>"
        lines.append(f"{where}: {err['msg']}")
    return "invalid config:\n  " + "\n  ".join(lines)
