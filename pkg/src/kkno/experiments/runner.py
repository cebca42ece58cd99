"""Executes one validated experiment and records verdicts, CSVs and a manifest."""

from __future__ import annotations

import logging
import os
import time
from pathlib import Path
from typing import Optional

import numpy as np

from .. import __version__
from ..asymptotics import (bound_check, convergence_table, default_constant, fit_rate, korovkin,
                           voronovskaya)
from ..kernels import DRIFT_ZERO, check_admissible, moments
from ..numerics import Domain, sample_to_grid, test_function
from ..operator import OperatorConfig, compose, schedule
from ..pde import compare, first_mode_amplitude
from .config import ConfigError, ExperimentConfig, load_config
from .output import SCHEMAS, emit_csv, emit_plot, format_cell, write_manifest

log = logging.getLogger(__name__)

OUTPUT_ENV = "KKNO_OUTPUT_DIR"
GRID_EXPERIMENTS = ("compose", "pde-compare")


class Run:
    """Collects artifacts and pass/fail verdicts while an experiment executes."""

    def __init__(self, cfg: ExperimentConfig, outdir: Path, workers: int, plot: bool):
        self.cfg = cfg
        self.outdir = outdir
        self.workers = workers
        self.plot = plot or cfg.plot
        self.kernel = cfg.kernel.build()
        self.d = self.kernel.dimension
        self.orders = cfg.quadrature.orders()
        self.verdicts: dict[str, str] = {}
        self.outputs: list[str] = []

    def check(self, name: str, ok: bool):
        self.verdicts[name] = "pass" if ok else "fail"
        log.info("check %-16s %s", name, self.verdicts[name])

    def csv(self, kind: str, rows, name: Optional[str] = None):
        fname = name or f"{kind.replace('-', '_')}.csv"
        emit_csv(SCHEMAS[kind], rows, self.outdir / fname)
        self.outputs.append(fname)

    def svg(self, series, **labels):
        if not self.plot:
            return
        try:
            emit_plot(series, self.outdir / "plot.svg", **labels)
        except ValueError as exc:
            log.error("plot rejected: %s", exc)
            self.check("plot", False)
            return
        self.outputs.append("plot.svg")

    @property
    def resolution(self) -> Optional[int]:
        if self.cfg.resolution is not None:
            return self.cfg.resolution
        return 64 if self.cfg.experiment in GRID_EXPERIMENTS else None

    @property
    def function(self):
        return test_function(self.cfg.function, self.d) if self.cfg.function else None

    def points(self) -> np.ndarray:
        if self.cfg.points is not None:
            return np.asarray(self.cfg.points, dtype=float)
        return np.random.default_rng(20240601).random((5, self.d))


def _nonincreasing(values, slack) -> bool:
    return all(b <= a + slack for a, b in zip(values, values[1:]))


def _moments(run: Run):
    tol = run.cfg.tolerances.moments
    rows, worst = [], 0.0
    for x in run.points():
        label = ";".join(format_cell(float(v)) for v in x)
        for n in run.cfg.n_list:
            rep = moments(run.kernel, x, n, run.orders)
            mass, m1, m2 = run.kernel.closed_form(x[None], n)
            worst = max(worst, abs(rep.mass - mass), np.max(np.abs(rep.m1 - m1)), np.max(np.abs(rep.m2 - m2)))
            rows.append((label, f"mass@n={n}", rep.mass))
            rows += [(label, f"m1_{i + 1}@n={n}", float(rep.m1[i])) for i in range(run.d)]
            rows += [(label, f"m2_{i + 1}{j + 1}@n={n}", float(rep.m2[i, j]))
                     for i in range(run.d) for j in range(run.d)]
            rows.append((label, f"m3@n={n}", rep.m3))
    run.csv("moments", rows)
    run.check("closed_form", worst <= tol)


def _admissible(run: Run):
    rep = check_admissible(run.kernel, run.orders, run.cfg.tolerances.admissible, run.points(),
                           run.cfg.n_list[0])
    rows = [("K1_mass_error", rep.mass_error, rep.k1_pass),
            ("K2_drift_class", rep.drift_class, rep.k2_pass)]
    rows += [(f"K2_drift_{i + 1}", float(rep.drift[0, i]), rep.k2_pass) for i in range(run.d)]
    rows += [(f"K3_diffusion_{i + 1}{j + 1}", float(rep.diffusion[i, j]), rep.k3_pass)
             for i in range(run.d) for j in range(run.d)]
    run.csv("admissible", rows)
    run.check("K1", rep.k1_pass)
    run.check("K2", rep.k2_pass)
    run.check("K3", rep.k3_pass)


def _table(run: Run):
    return convergence_table(run.kernel, run.function, run.cfg.n_list, Domain.unit(run.d),
                             run.resolution, run.orders, run.workers)


def _converge(run: Run):
    f = run.function
    table = _table(run)
    run.csv("converge", table.rows)
    run.check("monotone", _nonincreasing(table.errors.tolist(), run.cfg.tolerances.monotone))
    C = run.cfg.constant if run.cfg.constant is not None else default_constant(run.kernel)
    report = bound_check(table, f, C)
    run.csv("bound", report.rows)
    run.check("bound", report.passed)
    run.svg({"sup_error": [(n, e) for n, e, _, _ in report.rows],
             "bound": [(n, b) for n, _, b, _ in report.rows]},
            title=f"{run.kernel.kernel_id} {f.name}", ylabel="sup error")


def _rate(run: Run):
    table = _table(run)
    run.csv("converge", table.rows)
    try:
        fit = fit_rate(table)
    except ValueError as exc:
        log.error("%s", exc)
        run.check("rate", False)
        return
    run.csv("rate", [(fit.alpha, fit.intercept, fit.r2)])
    if run.cfg.expected_rate is not None:
        run.check("rate", abs(fit.alpha - run.cfg.expected_rate) <= run.cfg.tolerances.rate)
    run.svg({"sup_error": list(table.rows)}, title=f"rate alpha={fit.alpha:.4f}", ylabel="sup error")


def _voronovskaya(run: Run):
    rep = voronovskaya(run.kernel, run.function, run.cfg.n_list, run.cfg.p, Domain.unit(run.d),
                       run.resolution, run.orders, run.workers)
    run.csv("voronovskaya", rep.rows)
    run.check("nonincreasing", _nonincreasing(rep.residuals.tolist(), run.cfg.tolerances.monotone))
    if run.cfg.tolerances.residual is not None:
        run.check("residual", rep.rows[-1][1] <= run.cfg.tolerances.residual)
    run.svg({"residual": list(rep.rows)}, title=f"n^{rep.p}(L_n f - f) residual", ylabel="residual")


def _korovkin(run: Run):
    rep = korovkin(run.kernel, run.cfg.n_list, Domain.unit(run.d), run.resolution, run.orders,
                   run.workers)
    run.csv("korovkin", rep.rows)
    tol = run.cfg.tolerances.exact
    run.check("e0", bool(np.all(rep.errors("e0") <= tol)))
    if run.kernel.drift_class == DRIFT_ZERO:
        linear = [m for m in rep.monomials if len(m) == 2 and m != "e0"]
        run.check("linear", all(np.all(rep.errors(m) <= tol) for m in linear))
    run.check("converging", all(_nonincreasing(rep.errors(m).tolist(), run.cfg.tolerances.monotone)
                                for m in rep.monomials))
    series = {m: [(n, e) for name, n, e in rep.rows if name == m] for m in rep.monomials}
    series = {m: pts for m, pts in series.items() if all(e > 0 for _, e in pts)} or series
    run.svg(series, title="Korovkin test functions", ylabel="sup error")


def _compose(run: Run):
    f = run.function
    g0 = sample_to_grid(f, Domain.unit(run.d), run.resolution)
    sup_in = float(np.max(np.abs(g0.values)))
    rows = []
    for n in run.cfg.n_list:
        m = schedule(n, run.cfg.t, run.cfg.gamma).m
        cfg = OperatorConfig(run.kernel, n, run.orders, run.cfg.interp or "fourier", run.workers)
        out = compose(cfg, g0, m)
        rows.append((n, run.cfg.gamma, run.cfg.t, m, sup_in, float(np.max(np.abs(out.values))),
                     first_mode_amplitude(out)))
    run.csv("compose", rows)
    run.check("contraction", all(r[5] <= sup_in + 1e-12 for r in rows))


def _pde_compare(run: Run):
    f = run.function
    g0 = sample_to_grid(f, Domain.unit(run.d), run.resolution)
    rows = []
    for n in run.cfg.n_list:
        rep = compare(run.kernel, n, run.cfg.t, run.cfg.gamma, g0, run.orders,
                      run.cfg.interp or "fourier", run.workers)
        rows.append((n, rep.gamma, rep.t, rep.m, rep.gap, rep.amp_compose, rep.amp_pde))
    run.csv("pde-compare", rows)
    gaps = [r[4] for r in rows]
    run.check("gap_decreasing", all(b < a for a, b in zip(gaps, gaps[1:])))
    if run.cfg.tolerances.gap is not None:
        run.check("gap", all(g <= run.cfg.tolerances.gap for g in gaps))
    run.svg({"gap": [(r[0], r[4]) for r in rows]}, title=f"{run.kernel.kernel_id} vs PDE", ylabel="sup gap")


EXPERIMENT_FUNCS = {
    "moments": _moments,
    "admissible": _admissible,
    "converge": _converge,
    "rate": _rate,
    "voronovskaya": _voronovskaya,
    "korovkin": _korovkin,
    "compose": _compose,
    "pde-compare": _pde_compare,
}


def resolve_outdir(cfg: ExperimentConfig, out: Optional[str]) -> Path:
    return Path(out or os.environ.get(OUTPUT_ENV) or cfg.output_dir)


def run(config_path: str, out: Optional[str] = None, threads: int = 1, plot: bool = False) -> int:
    """Run one experiment. Exit status: 0 all checks pass, 1 a check failed, 2 config/IO error."""
    start = time.perf_counter()
    try:
        cfg, digest = load_config(config_path)
    except ConfigError as exc:
        log.error("%s", exc)
        return 2
    if threads < 1:
        log.error("--threads must be >= 1")
        return 2
    outdir = resolve_outdir(cfg, out)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        stale = outdir / "manifest.json"
        if stale.exists():
            stale.unlink()
        job = Run(cfg, outdir, threads, plot)
        EXPERIMENT_FUNCS[cfg.experiment](job)
        manifest = {
            "config_hash": digest,
            "tool_version": __version__,
            "experiment": cfg.experiment,
            "kernel": job.kernel.kernel_id,
            "duration_seconds": round(time.perf_counter() - start, 3),
            "verdicts": job.verdicts,
            "outputs": job.outputs,
        }
        write_manifest(outdir / "manifest.json", manifest)
    except OSError as exc:
        log.error("cannot write results to %s: %s", outdir, exc)
        return 2
    failed = [k for k, v in job.verdicts.items() if v != "pass"]
    if failed:
        log.error("failed checks: %s", ", ".join(failed))
        return 1
    return 0
