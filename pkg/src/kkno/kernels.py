"""Kernel families, their moments, and admissibility checks.

A kernel is represented by what the operator needs from it: a quadrature
node set ``u`` with weights ``w`` such that ``sum(w * g(u))`` approximates
``int g(u) K(x, u) du``. Moments and the operator itself both read the same
node set, so their identities hold to rounding.

Moment convention: the base kernel carries O(1) moments (drift ``a(x)`` and
diffusion ``B``); all scaling with ``n`` comes from the operator's ``u/n``
shift, plus the explicit ``c(x)/n**s`` of a drifted wrapper.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .numerics import (DEFAULT_HERMITE_ORDER, DEFAULT_LEGENDRE_ORDER, hermite_rule,
                       legendre_rule, pairwise_sum, tensor_nodes)

DRIFT_ZERO = "zero"
DRIFT_O1 = "O(1)"
DRIFT_O1N = "O(1/n)"


@dataclass(frozen=True)
class QuadOrders:
    legendre: int = DEFAULT_LEGENDRE_ORDER
    hermite: int = DEFAULT_HERMITE_ORDER

    def doubled(self) -> "QuadOrders":
        return QuadOrders(2 * self.legendre, 2 * self.hermite)


class Kernel:
    """Base class; subclasses define ``dimension``, ``nodes`` and closed forms."""

    dimension: int
    drift_class: str = DRIFT_ZERO

    @property
    def kernel_id(self) -> str:
        raise NotImplementedError

    def nodes(self, x: np.ndarray, n: float, orders: QuadOrders = QuadOrders()):
        """Return ``(u, w)``: ``u`` of shape (P or 1, N, d), ``w`` of shape (N,)."""
        raise NotImplementedError

    def covariance(self) -> np.ndarray:
        """The n-independent diffusion matrix B (second central moment)."""
        raise NotImplementedError

    def drift(self, x: np.ndarray) -> np.ndarray:
        """Limiting drift ``a(x) = lim n**s * m1`` at points (P, d)."""
        return np.zeros(np.shape(x))

    def closed_form(self, x: np.ndarray, n: float):
        """Exact ``(mass, m1, m2)`` at a single point x for scale n."""
        d = self.dimension
        return 1.0, np.zeros(d), self.covariance()


@dataclass(frozen=True, eq=False)
class Gaussian(Kernel):
    """Density sqrt(det A)/(2 pi)^{d/2} exp(-u^T A u / 2), covariance A^{-1}."""

    precision: np.ndarray
    _chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        a = np.array(self.precision, dtype=float)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"precision matrix must be square, got shape {a.shape}")
        if not np.allclose(a, a.T, rtol=0.0, atol=1e-12):
            raise ValueError("precision matrix is not symmetric")
        a = 0.5 * (a + a.T)
        a.setflags(write=False)
        object.__setattr__(self, "precision", a)
        object.__setattr__(self, "_chol", cholesky(a))

    @property
    def dimension(self) -> int:
        return self.precision.shape[0]

    @property
    def kernel_id(self) -> str:
        entries = ",".join(f"{v:g}" for v in self.precision.ravel())
        return f"gaussian[{entries}]"

    def covariance(self) -> np.ndarray:
        return np.linalg.inv(self.precision)

    def nodes(self, x, n, orders=QuadOrders()):
        rule = hermite_rule(orders.hermite)
        per_axis = [(math.sqrt(2.0) * rule.nodes, rule.weights / math.sqrt(math.pi))] * self.dimension
        v, w = tensor_nodes(per_axis)
        # whitened coordinates: u = L^{-T} v has covariance (L L^T)^{-1} = A^{-1}
        u = np.linalg.solve(self._chol.T, v.T).T
        return u[None], w


@dataclass(frozen=True)
class CellUniform(Kernel):
    """Uniform density on the centered unit cube [-1/2, 1/2]^d."""

    dimension: int

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")

    @property
    def kernel_id(self) -> str:
        return f"cell_uniform[d={self.dimension}]"

    def covariance(self) -> np.ndarray:
        return np.eye(self.dimension) / 12.0

    def nodes(self, x, n, orders=QuadOrders()):
        rule = legendre_rule(orders.legendre)
        u, w = tensor_nodes([rule.scaled(-0.5, 0.5)] * self.dimension)
        return u[None], w


@dataclass(frozen=True, eq=False)
class Drifted(Kernel):
    """Base kernel shifted so its mean gains ``c(x) / n**decay``.

    ``drift_field`` maps points (P, d) to drift vectors (P, d) and must be pure.
    ``label`` names the field in ids and reports.
    """

    base: Kernel
    drift_field: Callable[[np.ndarray], np.ndarray]
    decay: int = 1
    label: str = "c"

    def __post_init__(self):
        if isinstance(self.base, Drifted):
            raise ValueError("nested drifted kernels are not supported; wrap the base kernel once")
        if self.decay not in (0, 1):
            raise ValueError(f"decay exponent must be 0 or 1, got {self.decay!r}")

    @property
    def dimension(self) -> int:
        return self.base.dimension

    @property
    def drift_class(self) -> str:
        return DRIFT_O1 if self.decay == 0 else DRIFT_O1N

    @property
    def kernel_id(self) -> str:
        return f"drifted[{self.base.kernel_id},c={self.label},s={self.decay}]"

    def covariance(self) -> np.ndarray:
        return self.base.covariance()

    def shift(self, x: np.ndarray, n: float) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        c = np.broadcast_to(np.asarray(self.drift_field(x), dtype=float), x.shape)
        return c / float(n) ** self.decay

    def drift(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.broadcast_to(np.asarray(self.drift_field(x), dtype=float), x.shape) + self.base.drift(x)

    def nodes(self, x, n, orders=QuadOrders()):
        u, w = self.base.nodes(x, n, orders)
        return u + self.shift(x, n)[:, None, :], w

    def closed_form(self, x, n):
        mass, m1, _ = self.base.closed_form(x, n)
        m1 = m1 + self.shift(x, n)[0]
        return mass, m1, self.covariance() + np.outer(m1, m1)


def constant_field(vector: Sequence[float]) -> Callable[[np.ndarray], np.ndarray]:
    v = np.asarray(vector, dtype=float)

    def field(x):
        return np.broadcast_to(v, np.shape(np.atleast_2d(x))).copy()

    return field


def cholesky(a: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor; raises naming the first non-positive pivot."""
    a = np.asarray(a, dtype=float)
    d = a.shape[0]
    low = np.zeros_like(a)
    for j in range(d):
        pivot = a[j, j] - low[j, :j] @ low[j, :j]
        if not pivot > 0.0:
            raise ValueError(f"matrix is not positive definite: pivot {j} is {pivot:.6g}")
        low[j, j] = math.sqrt(pivot)
        for i in range(j + 1, d):
            low[i, j] = (a[i, j] - low[i, :j] @ low[j, :j]) / low[j, j]
    return low


def make_gaussian(precision) -> Gaussian:
    return Gaussian(np.asarray(precision, dtype=float))


def make_cell_uniform(d: int) -> CellUniform:
    return CellUniform(int(d))


def make_drifted(base: Kernel, c, s: int = 1, label: Optional[str] = None) -> Drifted:
    """Wrap ``base`` with drift ``c``: a callable field or a constant vector."""
    if not callable(c):
        vec = np.atleast_1d(np.asarray(c, dtype=float))
        if vec.shape != (base.dimension,):
            raise ValueError(f"drift vector must have length {base.dimension}")
        label = label or "[" + ",".join(f"{v:g}" for v in vec) + "]"
        c = constant_field(vec)
    return Drifted(base, c, s, label or "c")


# ---------------------------------------------------------------------------
# moments


@dataclass(frozen=True, eq=False)
class MomentReport:
    x: np.ndarray
    n: float
    mass: float
    m1: np.ndarray
    m2: np.ndarray
    m3: float
    orders: QuadOrders

    @property
    def covariance(self) -> np.ndarray:
        return self.m2 - np.outer(self.m1, self.m1)


def moments(kernel: Kernel, x, n: float = 1, orders: QuadOrders = QuadOrders()) -> MomentReport:
    """Mass, first, second and third-absolute moments from one node set."""
    if n < 1:
        raise ValueError("scale n must be >= 1")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u, w = kernel.nodes(x[None, :], n, orders)
    u = u[0]
    if not np.all(np.isfinite(u)):
        raise ValueError("kernel quadrature produced non-finite nodes")
    mass = pairwise_sum(w)
    m1 = pairwise_sum(w[:, None] * u, axis=0)
    m2 = pairwise_sum(w[:, None, None] * u[:, :, None] * u[:, None, :], axis=0)
    m3 = pairwise_sum(w * np.linalg.norm(u, axis=-1) ** 3)
    return MomentReport(x, n, float(mass), m1, m2, float(m3), orders)


@dataclass(frozen=True, eq=False)
class AdmissibilityReport:
    tolerance: float
    sample_points: np.ndarray
    n_probe: tuple[int, int]
    mass_error: float
    k1_pass: bool
    drift: np.ndarray  # limiting drift per sample point, (P, d)
    drift_class: str
    k2_pass: bool
    diffusion: np.ndarray  # covariance at the first sample point
    diffusion_bound: float
    k3_pass: bool

    @property
    def passed(self) -> bool:
        return self.k1_pass and self.k2_pass and self.k3_pass


def check_admissible(kernel: Kernel, orders: QuadOrders = QuadOrders(), tol: float = 1e-8,
                     sample_points=None, n: int = 8) -> AdmissibilityReport:
    """Numerically test positivity/normalization, drift decay and bounded diffusion.

    Drift decay is classified from the first moment at ``n`` and ``2n``:
    a ratio near 1 means O(1), near 1/2 means O(1/n).
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    d = kernel.dimension
    pts = np.atleast_2d(np.asarray(sample_points if sample_points is not None
                                   else np.full((1, d), 0.5), dtype=float))
    if pts.shape[1] != d or len(pts) == 0:
        raise ValueError(f"need at least one sample point of dimension {d}")

    reps = [(moments(kernel, x, n, orders), moments(kernel, x, 2 * n, orders)) for x in pts]
    mass_error = max(abs(r.mass - 1.0) for pair in reps for r in pair)
    nonneg = all(np.all(kernel.nodes(x[None], n, orders)[1] >= 0) for x in pts)
    k1 = nonneg and mass_error <= tol

    m1_n = np.array([a.m1 for a, _ in reps])
    m1_2n = np.array([b.m1 for _, b in reps])
    size_n = np.max(np.linalg.norm(m1_n, axis=1))
    size_2n = np.max(np.linalg.norm(m1_2n, axis=1))
    if size_n <= tol and size_2n <= tol:
        drift_class, drift = DRIFT_ZERO, np.zeros_like(m1_n)
    else:
        ratio = size_2n / size_n if size_n > 0 else math.inf
        if abs(ratio - 1.0) <= 0.1:
            drift_class, drift = DRIFT_O1, m1_n
        elif abs(ratio - 0.5) <= 0.1:
            drift_class, drift = DRIFT_O1N, n * m1_n
        else:
            drift_class, drift = "unclassified", m1_n
    k2 = drift_class != "unclassified"

    cov_n = np.array([a.covariance for a, _ in reps])
    cov_2n = np.array([b.covariance for _, b in reps])
    finite = np.all(np.isfinite(cov_n)) and np.all(np.isfinite(cov_2n))
    k3 = bool(finite and np.max(np.abs(cov_n - cov_2n)) <= tol)
    return AdmissibilityReport(
        tolerance=tol, sample_points=pts, n_probe=(n, 2 * n),
        mass_error=float(mass_error), k1_pass=bool(k1),
        drift=drift, drift_class=drift_class, k2_pass=k2,
        diffusion=cov_n[0], diffusion_bound=float(np.max(np.abs(cov_n))), k3_pass=k3,
    )
