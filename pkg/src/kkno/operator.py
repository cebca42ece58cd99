"""Single KKNO layers and their deep compositions on periodic grids."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .kernels import Kernel, QuadOrders
from .numerics import (Domain, GridFunction, chunked_map, eval_fourier, fourier_coefficients,
                       fourier_phases, interpolate, pairwise_sum)

INTERPOLATIONS = ("linear", "fourier")


@dataclass(frozen=True)
class OperatorConfig:
    """One layer ``L_n f(x) = int f(x - u/n) K(x, u) du``.

    ``interp`` picks how grid functions are read between nodes: ``linear``
    keeps positivity and the sup-norm contraction exact; ``fourier`` adds no
    numerical diffusion, which matters once hundreds of layers are stacked.
    ``workers`` only affects speed, never the result.
    """

    kernel: Kernel
    n: int
    orders: QuadOrders = field(default_factory=QuadOrders)
    interp: str = "linear"
    workers: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"scale n must be >= 1, got {self.n}")
        if self.interp not in INTERPOLATIONS:
            raise ValueError(f"interp must be one of {INTERPOLATIONS}, got {self.interp!r}")


def apply_points(cfg: OperatorConfig, f: Callable[[np.ndarray], np.ndarray], x: np.ndarray) -> np.ndarray:
    """Evaluate the layer at points ``x`` (P, d); ``f`` maps (..., d) to (...)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))

    def block(pts):
        u, w = cfg.kernel.nodes(pts, cfg.n, cfg.orders)
        args = pts[:, None, :] - u / cfg.n
        vals = np.asarray(f(args), dtype=float)
        vals = np.broadcast_to(vals, args.shape[:-1])
        if not np.all(np.isfinite(vals)):
            p, k = np.argwhere(~np.isfinite(vals))[0]
            raise ValueError(f"integrand is {vals[p, k]} at x={pts[p].tolist()}, "
                             f"u={np.broadcast_to(u, args.shape)[p, k].tolist()}")
        return pairwise_sum(w * vals, axis=-1)

    return chunked_map(block, x, cfg.workers)


def apply_point(cfg: OperatorConfig, f: Callable[[np.ndarray], np.ndarray], x) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1)
    return float(apply_points(cfg, f, x)[0])


class GridLayer:
    """A layer bound to one periodic grid, reusable across input functions.

    The points ``x - u/n`` a layer reads do not depend on the input, so they
    (and, for Fourier reads, their phase tables) are built once and reused
    by every layer of a composition. Work is split into fixed row chunks of
    output nodes, so the result never depends on ``cfg.workers``.
    """

    chunk = 256
    cache_limit = 64 * 2**20  # bytes of cached phase tables

    def __init__(self, cfg: OperatorConfig, domain: Domain, resolution):
        if not domain.periodic:
            raise ValueError("grid application needs a periodic domain")
        if domain.dimension != cfg.kernel.dimension:
            raise ValueError(f"kernel dimension {cfg.kernel.dimension} != grid dimension {domain.dimension}")
        self.cfg = cfg
        self.template = GridFunction(domain, resolution, np.zeros(np.prod(resolution)))
        nodes = self.template.nodes()
        self.blocks = []
        for start in range(0, len(nodes), self.chunk):
            pts = nodes[start:start + self.chunk]
            u, w = cfg.kernel.nodes(pts, cfg.n, cfg.orders)
            args = pts[:, None, :] - u / cfg.n
            self.blocks.append((np.broadcast_to(args, (len(pts),) + args.shape[1:]), w))
        npts = sum(a.shape[0] * a.shape[1] for a, _ in self.blocks)
        table_bytes = npts * sum(r + 1 for r in self.template.resolution) * 16
        self.phases = None
        if cfg.interp == "fourier" and table_bytes <= self.cache_limit:
            self.phases = [self._phases(args) for args, _ in self.blocks]

    def _phases(self, args):
        return fourier_phases(self.template, args.reshape(-1, args.shape[-1]))

    def __call__(self, g: GridFunction) -> GridFunction:
        if g.domain != self.template.domain or g.resolution != self.template.resolution:
            raise ValueError("grid function does not match the layer's grid")
        coeffs = fourier_coefficients(g) if self.cfg.interp == "fourier" else None

        def block(index):
            args, w = self.blocks[int(index[0, 0])]
            flat = args.reshape(-1, args.shape[-1])
            if coeffs is None:
                vals = interpolate(g, flat, "linear")
            else:
                phases = self.phases[int(index[0, 0])] if self.phases is not None else self._phases(args)
                vals = eval_fourier(g, flat, coeffs, phases)
            return pairwise_sum(w * vals.reshape(args.shape[:-1]), axis=-1)

        index = np.arange(len(self.blocks))[:, None]
        values = chunked_map(block, index, self.cfg.workers, chunk=1)
        return g.with_values(values)


def grid_reader(g: GridFunction, method: str) -> Callable[[np.ndarray], np.ndarray]:
    """Periodic interpolant of ``g`` as an evaluator on (..., d)."""
    coeffs = fourier_coefficients(g) if method == "fourier" else None

    def f(pts):
        pts = np.asarray(pts)
        return interpolate(g, pts.reshape(-1, pts.shape[-1]), method, coeffs).reshape(pts.shape[:-1])

    return f


def apply_grid(cfg: OperatorConfig, g: GridFunction) -> GridFunction:
    """One layer applied at every node of ``g``'s grid, reading ``g`` by interpolation."""
    return GridLayer(cfg, g.domain, g.resolution)(g)


def compose(cfg: OperatorConfig, g: GridFunction, m: int) -> GridFunction:
    """``m``-fold iterate of :func:`apply_grid`; ``m = 0`` returns ``g``."""
    if m < 0 or int(m) != m:
        raise ValueError(f"depth must be a non-negative integer, got {m!r}")
    if m == 0:
        return g
    layer = GridLayer(cfg, g.domain, g.resolution)
    for _ in range(int(m)):
        g = layer(g)
    return g


@dataclass(frozen=True)
class CompositionSchedule:
    n: int
    t: float
    gamma: int
    m: int


def schedule(n: int, t: float, gamma: int) -> CompositionSchedule:
    """Depth ``m = floor(n**gamma * t)``.

    ``t`` is read as the decimal it prints as, so ``t=0.29, n=10, gamma=2``
    gives 29 rather than the 28 that binary rounding would produce.
    """
    if t < 0 or not math.isfinite(t):
        raise ValueError(f"depth-time must be finite and >= 0, got {t!r}")
    if gamma not in (1, 2):
        raise ValueError(f"gamma must be 1 or 2, got {gamma!r}")
    if n < 1:
        raise ValueError(f"scale n must be >= 1, got {n}")
    exact = Fraction(repr(float(t))) * int(n) ** gamma
    return CompositionSchedule(int(n), float(t), int(gamma), math.floor(exact))
