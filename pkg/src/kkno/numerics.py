"""Grids, interpolation, tensor-product quadrature and the test-function registry.

Everything here is deterministic: reductions go through :func:`pairwise_sum`,
whose association order depends only on the length of the reduced axis, so
splitting work across threads never changes a single bit of the result.
"""

from __future__ import annotations

import itertools
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial import hermite as _hermite
from numpy.polynomial import legendre as _legendre

DEFAULT_LEGENDRE_ORDER = 16
DEFAULT_HERMITE_ORDER = 24

Evaluator = Callable[[np.ndarray], np.ndarray]


# ---------------------------------------------------------------------------
# deterministic reductions and chunked parallel maps


def pairwise_sum(a: np.ndarray, axis: int = -1) -> np.ndarray:
    """Sum along ``axis`` by repeated halving (fixed association order).

    The axis is zero-padded to a power of two; adding 0.0 is exact, so the
    padding never changes a value.
    """
    # reduced axis first so every halving step adds two contiguous blocks
    a = np.moveaxis(np.asarray(a), axis, 0)
    size = a.shape[0]
    if size == 0:
        return np.zeros(a.shape[1:], dtype=a.dtype)
    width = 1 << (size - 1).bit_length()
    buf = np.zeros((width,) + a.shape[1:], dtype=a.dtype)
    buf[:size] = a
    while width > 1:
        width //= 2
        buf = buf[:width] + buf[width:2 * width]
    return buf[0]


def chunked_map(fn: Callable[[np.ndarray], np.ndarray], points: np.ndarray,
                workers: int = 1, chunk: int = 256) -> np.ndarray:
    """Apply ``fn`` to row-chunks of ``points`` and concatenate.

    ``fn`` must treat rows independently; the result is then identical for
    every ``workers`` value.
    """
    points = np.asarray(points)
    if len(points) <= chunk or workers <= 1:
        if len(points) <= chunk:
            return fn(points)
        return np.concatenate([fn(points[i:i + chunk]) for i in range(0, len(points), chunk)])
    pieces = [points[i:i + chunk] for i in range(0, len(points), chunk)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        out = list(pool.map(fn, pieces))
    return np.concatenate(out)


# ---------------------------------------------------------------------------
# domains and grid functions


@dataclass(frozen=True)
class Domain:
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    periodic: bool = True

    def __post_init__(self):
        if len(self.lower) != len(self.upper) or len(self.lower) < 1:
            raise ValueError("domain needs matching, non-empty lower/upper bounds")
        for i, (lo, hi) in enumerate(zip(self.lower, self.upper)):
            if not lo < hi:
                raise ValueError(f"axis {i}: lower {lo} must be < upper {hi}")

    @classmethod
    def unit(cls, d: int, periodic: bool = True) -> "Domain":
        if d < 1:
            raise ValueError("dimension must be >= 1")
        return cls((0.0,) * d, (1.0,) * d, periodic)

    @property
    def dimension(self) -> int:
        return len(self.lower)

    @property
    def widths(self) -> np.ndarray:
        return np.asarray(self.upper, float) - np.asarray(self.lower, float)


def grid_nodes(domain: Domain, resolution: int | Sequence[int]) -> np.ndarray:
    """Vertex nodes ``lower + i*(upper-lower)/R``, row-major, shape (prod R, d)."""
    res = _as_resolution(resolution, domain.dimension)
    axes = [lo + np.arange(r) * (hi - lo) / r
            for lo, hi, r in zip(domain.lower, domain.upper, res)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _as_resolution(resolution, d: int) -> tuple[int, ...]:
    if np.isscalar(resolution):
        res = (int(resolution),) * d
    else:
        res = tuple(int(r) for r in resolution)
    if len(res) != d or any(r < 1 for r in res):
        raise ValueError(f"bad resolution {resolution!r} for dimension {d}")
    return res


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples of a function at the vertex nodes of a periodic box.

    ``values`` is the flat row-major array; ``array`` gives the shaped view.
    """

    domain: Domain
    resolution: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        res = _as_resolution(self.resolution, self.domain.dimension)
        vals = np.array(self.values, dtype=float).ravel()
        if vals.size != math.prod(res):
            raise ValueError(f"{vals.size} values do not fit resolution {res}")
        if not np.all(np.isfinite(vals)):
            bad = int(np.flatnonzero(~np.isfinite(vals))[0])
            raise ValueError(f"non-finite grid value at flat index {bad}")
        vals.setflags(write=False)
        object.__setattr__(self, "resolution", res)
        object.__setattr__(self, "values", vals)

    @property
    def array(self) -> np.ndarray:
        return self.values.reshape(self.resolution)

    @property
    def spacing(self) -> np.ndarray:
        return self.domain.widths / np.asarray(self.resolution, float)

    def nodes(self) -> np.ndarray:
        return grid_nodes(self.domain, self.resolution)

    def with_values(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(self.domain, self.resolution, values)


def sample_to_grid(f, domain: Domain, resolution: int | Sequence[int]) -> GridFunction:
    """Sample ``f`` (a TestFunction or a vectorized evaluator) at grid nodes."""
    res = _as_resolution(resolution, domain.dimension)
    if any(r < 2 for r in res):
        raise ValueError("resolution must be >= 2 per axis")
    evaluator = f.value if isinstance(f, TestFunction) else f
    x = grid_nodes(domain, res)
    vals = np.broadcast_to(np.asarray(evaluator(x), dtype=float), (len(x),))
    if not np.all(np.isfinite(vals)):
        bad = int(np.flatnonzero(~np.isfinite(vals))[0])
        raise ValueError(f"non-finite sample at node {x[bad].tolist()}")
    return GridFunction(domain, res, vals)


def sup_norm_diff(g1: GridFunction, g2: GridFunction) -> float:
    if g1.domain != g2.domain or g1.resolution != g2.resolution:
        raise ValueError("grid functions live on different grids")
    return float(np.max(np.abs(g1.values - g2.values)))


# ---------------------------------------------------------------------------
# interpolation


def eval_interp(g: GridFunction, x) -> np.ndarray | float:
    """Periodic multilinear interpolation of ``g``.

    A single point (scalar for d=1, or shape (d,)) gives a float; an array
    of points of shape (P, d), or (P,) when d=1, gives an array.
    """
    d = g.domain.dimension
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or (x.ndim == 1 and x.shape[0] == d):
        return float(_multilinear(g, x.reshape(1, d))[0])
    if d == 1 and x.ndim == 1:
        return _multilinear(g, x[:, None])
    return _multilinear(g, x.reshape(-1, d)).reshape(x.shape[:-1])


def _multilinear(g: GridFunction, pts: np.ndarray) -> np.ndarray:
    d = g.domain.dimension
    res = np.asarray(g.resolution)
    t = (pts - np.asarray(g.domain.lower)) * (res / g.domain.widths)
    near = np.rint(t)
    t = np.where(np.abs(t - near) <= 1e-12 * np.maximum(1.0, np.abs(t)), near, t)
    base = np.floor(t)
    frac = t - base
    base = base.astype(np.int64) % res
    data = g.array
    out = np.zeros(len(pts))
    # corners in a fixed order so the sum is reproducible
    for corner in itertools.product((0, 1), repeat=d):
        w = np.ones(len(pts))
        idx = []
        for k, c in enumerate(corner):
            w = w * (frac[:, k] if c else 1.0 - frac[:, k])
            idx.append((base[:, k] + c) % res[k])
        out = out + w * data[tuple(idx)]
    return out


def fourier_coefficients(g: GridFunction) -> tuple[np.ndarray, list[np.ndarray]]:
    """Coefficients and per-axis integer frequencies of the trigonometric interpolant.

    For even resolution the Nyquist coefficient is split evenly between
    frequencies -R/2 and +R/2, which keeps the interpolant real-valued.
    """
    c = np.fft.fftn(g.array) / g.values.size
    freqs = []
    for axis, r in enumerate(g.resolution):
        k = np.fft.fftfreq(r, 1.0 / r)
        if r % 2 == 0:
            nyq = np.take(c, [r // 2], axis=axis) * 0.5
            c = np.concatenate([c[(slice(None),) * axis + (slice(0, r // 2),)], nyq,
                                c[(slice(None),) * axis + (slice(r // 2 + 1, None),)], nyq],
                               axis=axis)
            k = np.concatenate([k, [r // 2]])
        freqs.append(k)
    return c, freqs


def fourier_phases(g: GridFunction, pts: np.ndarray) -> list[np.ndarray]:
    """Per-axis phase tables for evaluating any trigonometric interpolant on
    ``g``'s grid at ``pts`` (P, d); reusable across grid functions."""
    pts = np.asarray(pts, dtype=float).reshape(-1, g.domain.dimension)
    theta = 2 * np.pi * (pts - np.asarray(g.domain.lower)) / g.domain.widths
    out = []
    for axis, r in enumerate(g.resolution):
        k = np.fft.fftfreq(r, 1.0 / r)
        if r % 2 == 0:
            k = np.concatenate([k, [r // 2]])
        out.append(_phases(theta[:, axis], k))
    return out


def eval_fourier(g: GridFunction, pts: np.ndarray, coeffs=None, phases=None) -> np.ndarray:
    """Evaluate the trigonometric interpolant of ``g`` at ``pts`` (shape (P, d)).

    Exact for every Fourier mode the grid resolves. Unlike the multilinear
    interpolant it adds no numerical smoothing, but it can overshoot.
    """
    d = g.domain.dimension
    c, _ = fourier_coefficients(g) if coeffs is None else coeffs
    if phases is None:
        phases = fourier_phases(g, pts)
    npts = len(phases[0])
    # contract the last axis first: (P, k1..kd) -> (P, k1..k_{d-1}) -> ... -> (P,)
    acc = np.broadcast_to(c, (npts,) + c.shape)
    for axis in reversed(range(d)):
        acc = pairwise_sum(acc * phases[axis].reshape((npts,) + (1,) * axis + (-1,)), axis=-1)
    return acc.real


def _phases(theta: np.ndarray, freqs: np.ndarray) -> np.ndarray:
    """``exp(1j * theta * k)`` for integer ``k`` via powers of ``exp(1j * theta)``."""
    kmax = int(np.max(np.abs(freqs)))
    z = np.exp(1j * theta)
    powers = np.cumprod(np.broadcast_to(z[:, None], (len(theta), max(kmax, 1))), axis=1)
    table = np.concatenate([np.ones((len(theta), 1), complex), powers], axis=1)
    k = freqs.astype(np.int64)
    out = table[:, np.abs(k)]
    return np.where(k < 0, out.conj(), out)


def interpolate(g: GridFunction, pts: np.ndarray, method: str = "linear", coeffs=None) -> np.ndarray:
    """Dispatch to the multilinear or trigonometric interpolant; ``pts`` is (P, d)."""
    pts = np.asarray(pts, dtype=float).reshape(-1, g.domain.dimension)
    if method == "linear":
        return _multilinear(g, pts)
    if method == "fourier":
        return eval_fourier(g, pts, coeffs)
    raise ValueError(f"unknown interpolation method {method!r}")


# ---------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    kind: str  # "legendre" on [-1, 1] or "hermite" with weight exp(-s^2)
    order: int
    nodes: np.ndarray
    weights: np.ndarray

    def scaled(self, lower: float, upper: float) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights mapped affinely onto [lower, upper] (Legendre only)."""
        if self.kind != "legendre":
            raise ValueError("only Legendre rules map onto finite intervals")
        half = 0.5 * (upper - lower)
        return lower + half * (self.nodes + 1.0), half * self.weights


def _check_order(order: int) -> int:
    if int(order) != order or order < 1:
        raise ValueError(f"quadrature order must be a positive integer, got {order!r}")
    return int(order)


def legendre_rule(order: int) -> QuadratureRule:
    order = _check_order(order)
    x, w = _legendre.leggauss(order)
    return QuadratureRule("legendre", order, x, w)


def hermite_rule(order: int) -> QuadratureRule:
    order = _check_order(order)
    x, w = _hermite.hermgauss(order)
    return QuadratureRule("hermite", order, x, w)


def tensor_nodes(per_axis: Sequence[tuple[np.ndarray, np.ndarray]]) -> tuple[np.ndarray, np.ndarray]:
    """Tensor-product (nodes (N, d), weights (N,)) from per-axis 1-D rules, row-major."""
    xs = np.meshgrid(*[x for x, _ in per_axis], indexing="ij")
    ws = np.meshgrid(*[w for _, w in per_axis], indexing="ij")
    nodes = np.stack([x.ravel() for x in xs], axis=-1)
    weights = ws[0].ravel().copy()
    for w in ws[1:]:
        weights = weights * w.ravel()
    return nodes, weights


def integrate_box(f: Evaluator, box: Sequence[tuple[float, float]],
                  rules: QuadratureRule | Sequence[QuadratureRule]) -> float:
    """Tensor-product Gauss-Legendre integral of ``f`` over ``box``.

    ``f`` takes an (N, d) array of points and returns N values.
    """
    box = [(float(a), float(b)) for a, b in box]
    if isinstance(rules, QuadratureRule):
        rules = [rules] * len(box)
    if len(rules) != len(box):
        raise ValueError("need one rule per axis")
    nodes, weights = tensor_nodes([r.scaled(a, b) for r, (a, b) in zip(rules, box)])
    vals = np.asarray(f(nodes), dtype=float).reshape(-1)
    vals = np.broadcast_to(vals, weights.shape)
    if not np.all(np.isfinite(vals)):
        bad = int(np.flatnonzero(~np.isfinite(vals))[0])
        raise ValueError(f"integrand is {vals[bad]} at quadrature node {nodes[bad].tolist()}")
    return float(pairwise_sum(weights * vals))


# ---------------------------------------------------------------------------
# test functions

SMOOTHNESS_CLASSES = ("constant", "linear", "quadratic", "analytic-periodic", "lipschitz-kink", "analytic")


@dataclass(frozen=True, eq=False)
class TestFunction:
    """A vectorized test function on R^d.

    Evaluators take points of shape (..., d). ``modulus`` is the exact
    modulus of continuity on the unit box, when a closed form is known.
    """

    __test__ = False  # not a pytest class

    name: str
    dimension: int
    value: Evaluator
    gradient: Optional[Evaluator] = None
    hessian: Optional[Evaluator] = None
    smoothness: str = "analytic"
    modulus: Optional[Callable[[float], float]] = field(default=None)

    def __call__(self, x):
        return self.value(np.asarray(x, dtype=float))


_NAME_RE = re.compile(r"^(?P<base>[a-z0-9]+)(?:\((?P<args>[0-9,\s]*)\))?$")


def test_function(name: str, d: int) -> TestFunction:
    """Look up a registry function by name; axis indices are 1-based.

    Names: ``const1``, ``coord(i)``, ``quad(i,j)``, ``sin2pi`` (product of
    sin(2 pi x_k) over all axes), ``sin2pi(k)`` (single axis), ``absdev``
    (|x_1 - 1/2|) and ``expsum`` (exp of the coordinate sum).
    """
    if d < 1:
        raise ValueError("dimension must be >= 1")
    m = _NAME_RE.match(name.replace(" ", ""))
    if not m:
        raise ValueError(f"unknown test function {name!r}")
    base = m.group("base")
    args = [int(a) for a in m.group("args").split(",") if a] if m.group("args") else []
    for a in args:
        if not 1 <= a <= d:
            raise ValueError(f"axis index {a} out of range for d={d} in {name!r}")

    if base == "const1" and not args:
        return TestFunction(
            name, d,
            value=lambda x: np.ones(np.shape(x)[:-1]),
            gradient=lambda x: np.zeros(np.shape(x)),
            hessian=lambda x: np.zeros(np.shape(x) + (d,)),
            smoothness="constant",
            modulus=lambda delta: 0.0,
        )
    if base == "coord" and len(args) == 1:
        i = args[0] - 1
        e = np.eye(d)[i]
        return TestFunction(
            name, d,
            value=lambda x: np.asarray(x)[..., i],
            gradient=lambda x: np.broadcast_to(e, np.shape(x)).copy(),
            hessian=lambda x: np.zeros(np.shape(x) + (d,)),
            smoothness="linear",
            modulus=lambda delta: min(delta, 1.0),
        )
    if base == "quad" and len(args) == 2:
        i, j = args[0] - 1, args[1] - 1
        hess = np.zeros((d, d))
        hess[i, j] += 1.0
        hess[j, i] += 1.0

        def grad(x):
            x = np.asarray(x)
            g = np.zeros(x.shape)
            g[..., i] += x[..., j]
            g[..., j] += x[..., i]
            return g

        return TestFunction(
            name, d,
            value=lambda x: np.asarray(x)[..., i] * np.asarray(x)[..., j],
            gradient=grad,
            hessian=lambda x: np.broadcast_to(hess, np.shape(x) + (d,)).copy(),
            smoothness="quadratic",
            modulus=(lambda delta: 2 * min(delta, 1.0) - min(delta, 1.0) ** 2) if i == j else None,
        )
    if base == "sin2pi" and len(args) <= 1:
        axes = [args[0] - 1] if args else list(range(d))
        return _sine_product(name, d, axes)
    if base == "absdev" and not args:
        def grad(x):
            x = np.asarray(x)
            g = np.zeros(x.shape)
            g[..., 0] = np.sign(x[..., 0] - 0.5)
            return g

        return TestFunction(
            name, d,
            value=lambda x: np.abs(np.asarray(x)[..., 0] - 0.5),
            gradient=grad,
            smoothness="lipschitz-kink",
            modulus=lambda delta: min(delta, 0.5),
        )
    if base == "expsum" and not args:
        def grad(x):
            v = np.exp(np.sum(np.asarray(x), axis=-1))
            return np.repeat(v[..., None], d, axis=-1)

        return TestFunction(
            name, d,
            value=lambda x: np.exp(np.sum(np.asarray(x), axis=-1)),
            gradient=grad,
            hessian=lambda x: np.exp(np.sum(np.asarray(x), axis=-1))[..., None, None] * np.ones((d, d)),
            smoothness="analytic",
            # steepest pair sits at the top corner, displaced along the diagonal
            modulus=lambda delta: math.exp(d) * (1.0 - math.exp(-math.sqrt(d) * min(delta, math.sqrt(d)))),
        )
    raise ValueError(f"unknown test function {name!r}")


def _sine_product(name: str, d: int, axes: list[int]) -> TestFunction:
    w = 2 * np.pi

    def factors(x):
        x = np.asarray(x)
        return np.sin(w * x[..., axes]), np.cos(w * x[..., axes])

    def value(x):
        s, _ = factors(x)
        return np.prod(s, axis=-1)

    def grad(x):
        s, c = factors(x)
        g = np.zeros(np.shape(x))
        for a, ax in enumerate(axes):
            others = np.prod(np.delete(s, a, axis=-1), axis=-1)
            g[..., ax] = w * c[..., a] * others
        return g

    def hess(x):
        s, c = factors(x)
        h = np.zeros(np.shape(x) + (d,))
        for a, ax in enumerate(axes):
            for b, bx in enumerate(axes):
                if a == b:
                    h[..., ax, ax] = -w * w * np.prod(s, axis=-1)
                else:
                    rest = np.prod(np.delete(s, [a, b], axis=-1), axis=-1)
                    h[..., ax, bx] = w * w * c[..., a] * c[..., b] * rest
        return h

    modulus = None
    if len(axes) == 1:
        modulus = lambda delta: 2.0 * math.sin(math.pi * min(delta, 0.5))  # noqa: E731
    return TestFunction(name, d, value, grad, hess, "analytic-periodic", modulus)
