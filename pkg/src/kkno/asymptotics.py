"""Convergence tables, explicit-constant bounds, Voronovskaya residuals,
Korovkin suites and empirical rate fits."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .kernels import DRIFT_O1, DRIFT_ZERO, CellUniform, Gaussian, Kernel, QuadOrders
from .numerics import Domain, TestFunction, grid_nodes, test_function
from .operator import OperatorConfig, apply_points

log = logging.getLogger(__name__)

DEFAULT_RESOLUTION = {1: 64, 2: 32, 3: 12}


def _default_nodes(d: int, domain: Optional[Domain], resolution: Optional[int]) -> np.ndarray:
    domain = domain or Domain.unit(d)
    return grid_nodes(domain, resolution or DEFAULT_RESOLUTION.get(d, 8))


# ---------------------------------------------------------------------------
# modulus of continuity


SAMPLE_REACH = 4  # grid steps per delta the sampling grid is refined to
SAMPLE_BUDGET = 2_000_000  # max sampling points


def sampled_modulus(f, delta: float, domain: Domain, M: int = 64) -> float:
    """Max |f(x) - f(y)| over pairs of a closed grid with |x - y| <= delta.

    ``M`` is the minimum points per axis; the grid is refined so that delta
    spans at least ``SAMPLE_REACH`` steps, within ``SAMPLE_BUDGET`` points.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    evaluator = f.value if isinstance(f, TestFunction) else f
    d = domain.dimension
    wanted = int(math.ceil(SAMPLE_REACH * float(np.max(domain.widths)) / delta)) + 1
    M = max(M, min(wanted, int(SAMPLE_BUDGET ** (1.0 / d))))
    axes = [np.linspace(lo, hi, M) for lo, hi in zip(domain.lower, domain.upper)]
    h = domain.widths / (M - 1)
    vals = np.asarray(evaluator(np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)), float)
    reach = [int(math.floor(delta / hk + 1e-9)) for hk in h]
    best = 0.0
    # ordered pairs are symmetric, so offsets in one half-space suffice
    for off in itertools.product(*[range(-r, r + 1) for r in reach]):
        if off <= (0,) * d:
            continue
        if math.sqrt(sum((k * hk) ** 2 for k, hk in zip(off, h))) > delta * (1 + 1e-12):
            continue
        a = vals[tuple(slice(max(k, 0), M + min(k, 0)) for k in off)]
        b = vals[tuple(slice(max(-k, 0), M + min(-k, 0)) for k in off)]
        if a.size:
            best = max(best, float(np.max(np.abs(a - b))))
    return best


def modulus(f: TestFunction, delta: float, domain: Optional[Domain] = None, M: int = 64) -> float:
    """Modulus of continuity on ``domain`` (default: the unit box).

    Registry functions with a closed-form modulus use it; in one dimension
    that value is cross-checked against a dense sampled estimate (2%).
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if M < 64:
        raise ValueError("modulus sampling needs at least 64 points per axis")
    domain = domain or Domain.unit(f.dimension)
    unit = all(lo == 0.0 and hi == 1.0 for lo, hi in zip(domain.lower, domain.upper))
    if f.modulus is None or not unit:
        return sampled_modulus(f, delta, domain, M)
    exact = float(f.modulus(delta))
    if domain.dimension == 1:
        dense = max(M, int(math.ceil(100 / min(delta, 1.0))) + 1)
        sampled = sampled_modulus(f, delta, domain, dense)
        if abs(sampled - exact) > 0.02 * max(exact, 1e-300) and exact > 0:
            raise RuntimeError(f"modulus formula for {f.name} disagrees with sampling: "
                               f"{exact:.6g} vs {sampled:.6g} at delta={delta:g}")
    return exact


# ---------------------------------------------------------------------------
# convergence tables and bounds


@dataclass(frozen=True)
class ConvergenceTable:
    kernel_id: str
    function: str
    rows: tuple[tuple[int, float], ...]

    def __post_init__(self):
        ns = [n for n, _ in self.rows]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ValueError("n values must be strictly increasing")
        if any(not e >= 0 for _, e in self.rows):
            raise ValueError("sup errors must be non-negative")

    @property
    def ns(self) -> np.ndarray:
        return np.array([n for n, _ in self.rows])

    @property
    def errors(self) -> np.ndarray:
        return np.array([e for _, e in self.rows])


def sup_error(kernel: Kernel, f: TestFunction, n: int, nodes: np.ndarray,
              orders: QuadOrders = QuadOrders(), workers: int = 1) -> float:
    cfg = OperatorConfig(kernel, n, orders, workers=workers)
    return float(np.max(np.abs(apply_points(cfg, f.value, nodes) - f.value(nodes))))


def convergence_table(kernel: Kernel, f: TestFunction, n_list: Sequence[int],
                      domain: Optional[Domain] = None, resolution: Optional[int] = None,
                      orders: QuadOrders = QuadOrders(), workers: int = 1) -> ConvergenceTable:
    """Sup error of one layer against the closed-form ``f`` at grid nodes, per n."""
    n_list = [int(n) for n in n_list]
    if len(n_list) < 3:
        raise ValueError("a convergence table needs at least 3 values of n")
    nodes = _default_nodes(kernel.dimension, domain, resolution)
    rows = tuple((n, sup_error(kernel, f, n, nodes, orders, workers)) for n in n_list)
    return ConvergenceTable(kernel.kernel_id, f.name, rows)


def default_constant(kernel: Kernel, d: Optional[int] = None) -> float:
    """Explicit constant of the direct estimate for the two closed-form kernels."""
    d = kernel.dimension if d is None else d
    if isinstance(kernel, Gaussian):
        return 1.0 + float(np.sum(np.abs(np.linalg.inv(kernel.precision))))
    if isinstance(kernel, CellUniform):
        return 1.0 + d / 4.0
    raise ValueError(f"no explicit constant is known for {kernel.kernel_id}; pass C explicitly")


@dataclass(frozen=True)
class BoundReport:
    C: float
    rows: tuple[tuple[int, float, float, float], ...]  # n, error, bound, margin

    @property
    def passed(self) -> bool:
        return all(margin >= -1e-12 for *_, margin in self.rows)


def bound_check(table: ConvergenceTable, f: TestFunction, C: float,
                domain: Optional[Domain] = None, M: int = 64) -> BoundReport:
    """Compare each row's error with ``C * omega(f, 1/n)``."""
    if C < 0:
        raise ValueError("C must be non-negative")
    rows = []
    for n, err in table.rows:
        bound = C * modulus(f, 1.0 / n, domain, M)
        rows.append((n, err, bound, bound - err))
    return BoundReport(float(C), tuple(rows))


# ---------------------------------------------------------------------------
# Voronovskaya


@dataclass(frozen=True)
class VoronovskayaReport:
    kernel_id: str
    function: str
    p: int
    drift_term: str
    diffusion_term: str
    rows: tuple[tuple[int, float], ...]  # n, residual
    note: str = ("normalization n**p: p=1 isolates O(1) drift (limit -a.grad f), "
                 "p=2 isolates diffusion for zero-drift kernels (limit 1/2 B:D^2 f)")

    @property
    def residuals(self) -> np.ndarray:
        return np.array([r for _, r in self.rows])


def voronovskaya_limit(kernel: Kernel, f: TestFunction, p: int, x: np.ndarray) -> np.ndarray:
    if p == 1:
        if kernel.drift_class != DRIFT_O1:
            raise ValueError(f"p=1 needs an O(1) drift kernel; {kernel.kernel_id} has drift {kernel.drift_class}")
        if f.gradient is None:
            raise ValueError(f"{f.name} has no gradient")
        return -np.sum(kernel.drift(x) * f.gradient(x), axis=-1)
    if p == 2:
        if kernel.drift_class != DRIFT_ZERO:
            raise ValueError(f"p=2 needs a zero-drift kernel; {kernel.kernel_id} has drift {kernel.drift_class}")
        if f.hessian is None:
            raise ValueError(f"{f.name} has no Hessian")
        return 0.5 * np.einsum("ij,pij->p", kernel.covariance(), f.hessian(x))
    raise ValueError(f"normalization exponent must be 1 or 2, got {p!r}")


def voronovskaya(kernel: Kernel, f: TestFunction, n_list: Sequence[int], p: int,
                 domain: Optional[Domain] = None, resolution: Optional[int] = None,
                 orders: QuadOrders = QuadOrders(), workers: int = 1) -> VoronovskayaReport:
    """Sup residual of ``n**p (L_n f - f)`` against its predicted limit."""
    nodes = _default_nodes(kernel.dimension, domain, resolution)
    limit = voronovskaya_limit(kernel, f, p, nodes)
    fx = f.value(nodes)
    rows = []
    for n in n_list:
        cfg = OperatorConfig(kernel, int(n), orders, workers=workers)
        scaled = float(n) ** p * (apply_points(cfg, f.value, nodes) - fx)
        rows.append((int(n), float(np.max(np.abs(scaled - limit)))))
    drift = "-a.grad f" if p == 1 else "0"
    diffusion = "0" if p == 1 else "1/2 B:D^2 f"
    return VoronovskayaReport(kernel.kernel_id, f.name, p, drift, diffusion, tuple(rows))


# ---------------------------------------------------------------------------
# Korovkin


@dataclass(frozen=True)
class KorovkinReport:
    kernel_id: str
    rows: tuple[tuple[str, int, float], ...]  # monomial, n, sup error

    def errors(self, monomial: str) -> np.ndarray:
        return np.array([e for name, _, e in self.rows if name == monomial])

    @property
    def monomials(self) -> list[str]:
        return list(dict.fromkeys(name for name, _, _ in self.rows))

    def max_error(self, n: int) -> float:
        return max(e for _, k, e in self.rows if k == n)


def korovkin_monomials(d: int) -> list[tuple[str, TestFunction]]:
    """e0, e_i and e_ij (i <= j) with 1-based labels."""
    out = [("e0", test_function("const1", d))]
    out += [(f"e{i}", test_function(f"coord({i})", d)) for i in range(1, d + 1)]
    out += [(f"e{i}{j}", test_function(f"quad({i},{j})", d))
            for i in range(1, d + 1) for j in range(i, d + 1)]
    return out


def korovkin(kernel: Kernel, n_list: Sequence[int], domain: Optional[Domain] = None,
             resolution: Optional[int] = None, orders: QuadOrders = QuadOrders(),
             workers: int = 1) -> KorovkinReport:
    d = kernel.dimension
    if d > 3:
        raise ValueError("the Korovkin suite is limited to d <= 3")
    nodes = _default_nodes(d, domain, resolution)
    rows = []
    for label, mono in korovkin_monomials(d):
        for n in n_list:
            rows.append((label, int(n), sup_error(kernel, mono, int(n), nodes, orders, workers)))
    return KorovkinReport(kernel.kernel_id, tuple(rows))


# ---------------------------------------------------------------------------
# rates


@dataclass(frozen=True)
class RateFit:
    alpha: float
    intercept: float
    r2: float


def fit_rate(table: ConvergenceTable) -> RateFit:
    """Least-squares fit of log(error) = intercept - alpha * log(n) over all rows."""
    if len(table.rows) < 3:
        raise ValueError("need at least 3 rows to fit a rate")
    err = table.errors
    if np.any(err <= 1e-14):
        raise ValueError("rate undefined: some errors are zero (function reproduced exactly)")
    x, y = np.log(table.ns.astype(float)), np.log(err)
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    slope = float(np.sum((x - xm) * (y - ym))) / sxx
    intercept = ym - slope * xm
    resid = y - (intercept + slope * x)
    syy = float(np.sum((y - ym) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / syy if syy > 0 else 1.0
    return RateFit(-slope, float(intercept), r2)
