"""Experiment pipelines behind the command-line tool.

Each ``run_*`` function takes a :class:`RunConfig`, writes its artifacts to
``config.out_dir`` and returns an in-memory summary.  All numeric CSV output
is deterministic for a fixed configuration; wall times are only recorded
when ``record_timings`` is set.
"""
from __future__ import annotations

import dataclasses
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, _backend
from . import testfunctions as tf
from .analysis import (ConvergenceRow, ConvergenceTable, add_noise_so3, anomaly_scan, bench,
                       denoise_filter, estimate_constants, loglog_slope)
from .errors import ConfigError
from .io import load_pgm, loglog_svg, write_grid_csv, write_pgm
from .kernel import KERNELS
from .manifold_multiscale import (BaseFunction, ManifoldMultiscaleModel, ManifoldQuasiInterpolant,
                                  sample_field, write_manifold_csv)
from .manifolds import MANIFOLDS, KarcherConfig
from .multiscale import default_error_rect, error_field, multiscale_fit, single_scale
from .pointset import Domain, LevelSequence, build_level_sequence, grid_axes, grid_points
from .quasi_interp import QuasiInterpolant


@dataclass
class RunConfig:
    domain: str = "-0.95,0.95,-0.95,0.95"
    h1: float = 0.375
    mu: float = 0.8
    nu: float = 3.0
    levels: int = 5
    degree: int = 0
    kernel: str = "wendland31"
    function: str = "h"
    grid_step: float = 0.02
    error_inset: str = "finest"
    seed: int = 0
    karcher_eps: float = 1e-10
    karcher_max_iter: int = 100
    out_dir: str = "runs/default"
    min_neighbors: int = 6
    mu_values: list = field(default_factory=lambda: [0.5, 0.6, 0.7])
    sigma: float = 0.2
    threshold: float = 0.9
    anomaly_window: int = 3
    bench_repeats: int = 5
    image: str = ""
    image_resolution: int = 256
    record_timings: bool = False

    def validate(self) -> "RunConfig":
        self.domain_obj  # parses
        if not (self.h1 > 0):
            raise ConfigError(f"h1 must be positive, got {self.h1}")
        if not (0 < self.mu < 1):
            raise ConfigError(f"mu must lie in (0, 1), got {self.mu}")
        if not (self.nu > 1):
            raise ConfigError(f"nu must exceed 1, got {self.nu}")
        if int(self.levels) != self.levels or self.levels < 1:
            raise ConfigError(f"levels must be a positive integer, got {self.levels}")
        if int(self.degree) != self.degree or not (0 <= self.degree <= 4):
            raise ConfigError(f"degree must be an integer in 0..4, got {self.degree}")
        if self.kernel not in KERNELS:
            raise ConfigError(f"unknown kernel {self.kernel!r}; choose from {sorted(KERNELS)}")
        tf.get(self.function)
        if not (self.grid_step > 0):
            raise ConfigError(f"grid_step must be positive, got {self.grid_step}")
        if self.error_inset not in ("finest", "coarsest"):
            raise ConfigError("error_inset must be 'finest' or 'coarsest'")
        self.karcher  # validates tolerance and iteration cap
        if self.sigma < 0:
            raise ConfigError("sigma must be non-negative")
        if not (0 <= self.threshold <= 1):
            raise ConfigError("threshold must lie in [0, 1]")
        if any(not (0 < m < 1) for m in self.mu_values) or len(set(self.mu_values)) < 2:
            raise ConfigError("mu_values needs at least two distinct values in (0, 1)")
        if self.bench_repeats < 3:
            raise ConfigError("bench_repeats must be at least 3")
        return self

    @property
    def domain_obj(self) -> Domain:
        return Domain.parse(self.domain) if isinstance(self.domain, str) else Domain(*self.domain)

    @property
    def karcher(self) -> KarcherConfig:
        return KarcherConfig(self.karcher_eps, int(self.karcher_max_iter))

    @classmethod
    def load(cls, path=None, overrides: dict | None = None, preset: str | None = None):
        """Defaults, then preset, then JSON file, then explicit overrides."""
        data = {}
        if preset:
            if preset not in PRESETS:
                raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
            data.update(PRESETS[preset])
        if path:
            with open(path) as fh:
                try:
                    data.update(json.load(fh))
                except json.JSONDecodeError as exc:
                    raise ConfigError(f"config file {path}: {exc}") from exc
        data.update({k: v for k, v in (overrides or {}).items() if v is not None})
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data).validate()


PRESETS = {
    "fig1": {"domain": "-1,1,-1,1", "h1": 0.064, "mu": 0.5, "levels": 4, "degree": 0},
    "manifold": {"levels": 4},
    "constants": {"function": "f"},
}


# -- helpers ------------------------------------------------------------------------------

class Stage:
    """Context manager tagging errors with the pipeline stage that raised them."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, etype, exc, tb):
        if exc is not None and not hasattr(exc, "stage"):
            try:
                exc.stage = self.name
            except AttributeError:
                pass
        return False


def _out(cfg: RunConfig) -> Path:
    p = Path(cfg.out_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _levels(cfg: RunConfig, mu: float | None = None, n: int | None = None) -> LevelSequence:
    with Stage("site generation"):
        L = build_level_sequence(cfg.domain_obj, cfg.h1, cfg.mu if mu is None else mu, cfg.nu,
                                 cfg.levels if n is None else n)
    if cfg.min_neighbors > 0:
        with Stage("neighbourhood validation"):
            xs, ys = grid_axes(cfg.domain_obj, cfg.grid_step)
            probe = grid_points(xs, ys)
            for j, (X, d) in enumerate(zip(L.levels, L.support_radii), start=1):
                indptr, _ = X.neighbors(probe, d, workers=_backend.thread_count())
                least = int(np.diff(indptr).min())
                if least < cfg.min_neighbors:
                    raise ConfigError(
                        f"level {j}: only {least} sites within delta={d:g} of some domain point "
                        f"(need {cfg.min_neighbors}); increase nu")
    return L


def _meta(cfg: RunConfig, L: LevelSequence | None = None, R: Domain | None = None, **extra):
    meta = {"config": asdict(cfg), "backend": _backend.NAME, "version": __version__,
            "euler_convention": "R = Rx(a) Ry(b) Rz(c)"}
    if L is not None:
        meta["nominal_h"] = list(L.nominal_h)
        meta["support_radii"] = list(L.support_radii)
        meta["site_counts"] = [len(X) for X in L.levels]
    if R is not None:
        meta["error_rect"] = list(R.as_tuple())
    meta.update(extra)
    return meta


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _timer(cfg):
    start = time.perf_counter()
    return lambda: (time.perf_counter() - start) if cfg.record_timings else math.nan


@dataclass
class ScalarRun:
    table: ConvergenceTable
    single_scale: list
    levels: LevelSequence
    R: Domain
    error_fields: list
    model: object = None


# -- scalar pipelines ----------------------------------------------------------------------

def run_gen_points(cfg: RunConfig) -> LevelSequence:
    out = _out(cfg)
    L = _levels(cfg)
    stats = []
    for j, X in enumerate(L.levels, start=1):
        X.to_csv(out / f"level_{j}.csv")
        stats.append({"level": j, "n": len(X), "h_nominal": L.nominal_h[j - 1],
                      "h_measured": X.fill_distance, "q": X.separation_radius,
                      "delta": L.support_radii[j - 1]})
    _write_json(out / "meta.json", _meta(cfg, L, levels_summary=stats))
    return L


def run_multiscale(cfg: RunConfig, function: str | None = None, write: bool = True,
                   mu: float | None = None) -> ScalarRun:
    """Algorithm-1 run plus the single-scale comparison on every level."""
    fn = tf.get(function or cfg.function)
    if fn.kind != "scalar":
        raise ConfigError(f"test function {fn.id!r} is not scalar; use manifold-multiscale")
    L = _levels(cfg, mu=mu)
    R = default_error_rect(L, cfg.error_inset)
    xs, ys = grid_axes(R, cfg.grid_step)
    pts = grid_points(xs, ys)
    ref = fn(pts)
    kernel = KERNELS[cfg.kernel]
    with Stage("multiscale fit"):
        clock = _timer(cfg)
        model = multiscale_fit(fn, L, cfg.degree, kernel)
        fit_time = clock()
    with Stage("error evaluation"):
        cumulative = model.evaluate_levels(pts)
        fields = [error_field(cumulative[j], ref, xs, ys, R, cfg.grid_step) for j in range(len(L))]
    rows = [ConvergenceRow(j + 1, L.nominal_h[j], L.levels[j].fill_distance, fields[j].linf,
                           fit_time) for j in range(len(L))]
    table = ConvergenceTable(rows, {"mu": L.mu, "nu": L.nu, "degree": cfg.degree,
                                    "function": fn.id, "seed": cfg.seed})
    with Stage("single-scale comparison"):
        single = []
        for X, d in zip(L.levels, L.support_radii):
            op = QuasiInterpolant(X, fn(X.sites), d, cfg.degree, kernel)
            single.append(error_field(op.evaluate_many(pts), ref, xs, ys, R, cfg.grid_step).linf)
    run = ScalarRun(table, single, L, R, fields, model)
    if write:
        _write_scalar(cfg, run, fn.id)
    return run


def _write_scalar(cfg, run: ScalarRun, fid):
    out = _out(cfg)
    for j, ef in enumerate(run.error_fields, start=1):
        ef.to_csv(out / f"error_level{j}.csv")
    run.table.to_csv(out / "convergence.csv")
    with open(out / "single_scale.csv", "w") as fh:
        fh.write("level,h_nominal,linf\n")
        for j, (h, e) in enumerate(zip(run.levels.nominal_h, run.single_scale), start=1):
            fh.write(f"{j},{h:.17g},{e:.17g}\n")
    if len(run.table) >= 3:
        (out / "slope.json").write_text(loglog_slope(run.table).to_json() + "\n")
    hs = run.table.column("h_nominal")
    (out / "convergence.svg").write_text(loglog_svg(
        {"multiscale": (hs, run.table.column("linf")), "single scale": (hs, run.single_scale)},
        title=f"test function {fid}"))
    _write_json(out / "meta.json", _meta(cfg, run.levels, run.R))


def run_approx(cfg: RunConfig) -> float:
    """Single-scale quasi-interpolant on the finest level."""
    fn = tf.get(cfg.function)
    if fn.kind != "scalar":
        raise ConfigError(f"test function {fn.id!r} is not scalar")
    L = _levels(cfg)
    R = default_error_rect(L, cfg.error_inset)
    xs, ys = grid_axes(R, cfg.grid_step)
    pts = grid_points(xs, ys)
    with Stage("single-scale fit"):
        op = single_scale(fn, L.levels[-1], L.support_radii[-1], cfg.degree, KERNELS[cfg.kernel])
    with Stage("error evaluation"):
        ef = error_field(op.evaluate_many(pts), fn(pts), xs, ys, R, cfg.grid_step)
    out = _out(cfg)
    ef.to_csv(out / "error.csv")
    _write_json(out / "meta.json", _meta(cfg, L, R, linf=ef.linf))
    return ef.linf


def run_convergence(cfg: RunConfig):
    """mu sweep with per-run slopes and the constants regression."""
    out = _out(cfg)
    slopes, tables = [], {}
    for mu in cfg.mu_values:
        run = run_multiscale(cfg, mu=mu, write=False)
        fit = loglog_slope(run.table)
        slopes.append(fit)
        tables[mu] = run.table
        run.table.to_csv(out / f"convergence_mu{mu:g}.csv")
        (out / f"slope_mu{mu:g}.json").write_text(fit.to_json() + "\n")
    consts = estimate_constants(cfg.mu_values, slopes)
    (out / "constants.json").write_text(consts.to_json() + "\n")
    series = {f"mu={mu:g}": (t.column("h_nominal"), t.column("linf")) for mu, t in tables.items()}
    (out / "convergence.svg").write_text(loglog_svg(series, title="mu sweep"))
    _write_json(out / "meta.json", _meta(cfg))
    return consts, slopes, tables


def run_anomaly(cfg: RunConfig):
    """Error maps of the contaminated field: multiscale at the last level vs single scale."""
    run = run_multiscale(cfg, function="f_anomaly", write=False)
    L, R = run.levels, run.R
    xs, ys = grid_axes(R, cfg.grid_step)
    pts = grid_points(xs, ys)
    fn = tf.get("f_anomaly")
    with Stage("single-scale comparison"):
        op = QuasiInterpolant(L.levels[-1], fn(L.levels[-1].sites), L.support_radii[-1], cfg.degree,
                              KERNELS[cfg.kernel])
        ss = error_field(op.evaluate_many(pts), fn(pts), xs, ys, R, cfg.grid_step)
    ms = run.error_fields[-1]
    rep_ms = anomaly_scan(ms, cfg.anomaly_window)
    rep_ss = anomaly_scan(ss, cfg.anomaly_window)
    out = _out(cfg)
    ms.to_csv(out / "error_multiscale.csv")
    ss.to_csv(out / "error_single_scale.csv")
    (out / "anomaly_multiscale.json").write_text(rep_ms.to_json() + "\n")
    (out / "anomaly_single_scale.json").write_text(rep_ss.to_json() + "\n")
    _write_json(out / "meta.json", _meta(cfg, L, R, anomaly_rect=list(tf.ANOMALY_RECT)))
    return rep_ms, rep_ss, ms, ss


def run_bench(cfg: RunConfig):
    """Shepard vs quadratic MLS evaluation time on the finest level."""
    fn = tf.get(cfg.function)
    L = _levels(cfg)
    R = default_error_rect(L, cfg.error_inset)
    pts = grid_points(*grid_axes(R, cfg.grid_step))
    X, d = L.levels[-1], L.support_radii[-1]
    ops = {"shepard": QuasiInterpolant(X, fn(X.sites), d, 0),
           "mls2": QuasiInterpolant(X, fn(X.sites), d, 2)}
    res = {name: bench(op, pts, cfg.bench_repeats) for name, op in ops.items()}
    summary = {name: {"median_s": r.median, "times_s": list(r.times),
                      "per_point_s": r.median / max(r.nodes, 1), "nodes": r.nodes}
               for name, r in res.items()}
    _write_json(_out(cfg) / "bench.json", {"backend": _backend.NAME, "results": summary})
    _write_json(_out(cfg) / "meta.json", _meta(cfg, L, R))
    return res


# -- manifold pipelines ---------------------------------------------------------------------

@dataclass
class ManifoldRun:
    table: ConvergenceTable
    single_scale: list
    levels: LevelSequence
    R: Domain
    error_fields: list
    model: ManifoldMultiscaleModel


def _manifold_errors(cfg, manifold, model, fn, R):
    xs, ys = grid_axes(R, cfg.grid_step)
    pts = grid_points(xs, ys)
    ref = fn(pts)
    with Stage("error evaluation"):
        cumulative = model.evaluate_levels(pts)
        fields = [error_field(c, ref, xs, ys, R, cfg.grid_step,
                              metric=lambda a, b: manifold.dist(a, b)) for c in cumulative]
    return fields, pts, ref, cumulative


def run_manifold_multiscale(cfg: RunConfig, function: str | None = None,
                            write: bool = True) -> ManifoldRun:
    fn = tf.get(function or (cfg.function if cfg.function in ("so3", "spd3") else "so3"))
    if fn.kind not in MANIFOLDS:
        raise ConfigError(f"test function {fn.id!r} is not manifold-valued")
    M = MANIFOLDS[fn.kind]
    L = _levels(cfg)
    R = default_error_rect(L, cfg.error_inset)
    samples = [sample_field(M, fn, X) for X in L.levels]
    with Stage("manifold multiscale fit"):
        clock = _timer(cfg)
        model = ManifoldMultiscaleModel(M, BaseFunction.from_samples(samples[0]), cfg=cfg.karcher,
                                        level_sequence=L)
        for s, d in zip(samples, L.support_radii):
            model = model.add_level(s, d)
        fit_time = clock()
    fields, pts, ref, cumulative = _manifold_errors(cfg, M, model, fn, R)
    rows = [ConvergenceRow(j + 1, L.nominal_h[j], L.levels[j].fill_distance, fields[j].linf,
                           fit_time) for j in range(len(L))]
    table = ConvergenceTable(rows, {"mu": L.mu, "nu": L.nu, "function": fn.id, "seed": cfg.seed})
    with Stage("single-scale comparison"):
        single = []
        for s, d in zip(samples, L.support_radii):
            qi = ManifoldQuasiInterpolant(s, d, cfg.karcher)
            single.append(float(M.dist(qi(pts), ref).max()))
    run = ManifoldRun(table, single, L, R, fields, model)
    if write:
        out = _out(cfg)
        for j, ef in enumerate(fields, start=1):
            ef.to_csv(out / f"error_level{j}.csv", column="geodesic_error")
        write_manifold_csv(out / "approximation.csv", pts, cumulative[-1])
        table.to_csv(out / "convergence.csv")
        with open(out / "single_scale.csv", "w") as fh:
            fh.write("level,h_nominal,linf\n")
            for j, (h, e) in enumerate(zip(L.nominal_h, single), start=1):
                fh.write(f"{j},{h:.17g},{e:.17g}\n")
        hs = table.column("h_nominal")
        (out / "convergence.svg").write_text(loglog_svg(
            {"multiscale": (hs, table.column("linf")), "single scale": (hs, single)},
            ylabel="max geodesic error", title=f"{M.name} field"))
        _write_json(out / "meta.json", _meta(cfg, L, R))
    return run


@dataclass
class DenoiseRun:
    filtered_error: float
    unfiltered_error: float
    previous_error: float
    removed: int
    kept: int


def run_denoise(cfg: RunConfig, threshold: float | None = None, write: bool = True) -> DenoiseRun:
    """Noisy rotation field; filter the final level's sites against the previous approximation."""
    t = cfg.threshold if threshold is None else threshold
    M = MANIFOLDS["so3"]
    fn = tf.get("so3")
    L = _levels(cfg)
    R = default_error_rect(L, cfg.error_inset)
    with Stage("noise injection"):
        noisy = [add_noise_so3(sample_field(M, fn, X), cfg.sigma, cfg.seed + j)
                 for j, X in enumerate(L.levels)]
    with Stage("manifold multiscale fit"):
        model = ManifoldMultiscaleModel(M, BaseFunction.from_samples(noisy[0]), cfg=cfg.karcher,
                                        level_sequence=L)
        for s, d in zip(noisy[:-1], L.support_radii[:-1]):
            model = model.add_level(s, d)
    with Stage("denoising filter"):
        final = noisy[-1]
        kept = final if len(L) == 1 else denoise_filter(final.sites, final, model, t)
        filtered = model.add_level(kept, L.support_radii[-1])
        unfiltered = model.add_level(final, L.support_radii[-1])
    xs, ys = grid_axes(R, cfg.grid_step)
    pts = grid_points(xs, ys)
    ref = fn(pts)
    with Stage("error evaluation"):
        dist = lambda a, b: M.dist(a, b)  # noqa: E731
        ef_f = error_field(filtered(pts), ref, xs, ys, R, cfg.grid_step, metric=dist)
        ef_u = error_field(unfiltered(pts), ref, xs, ys, R, cfg.grid_step, metric=dist)
        prev = (error_field(model(pts), ref, xs, ys, R, cfg.grid_step, metric=dist).linf
                if len(model) else math.nan)
    res = DenoiseRun(ef_f.linf, ef_u.linf, prev, len(final) - len(kept), len(kept))
    if write:
        out = _out(cfg)
        ef_f.to_csv(out / "error_denoised.csv", column="geodesic_error")
        ef_u.to_csv(out / "error_unfiltered.csv", column="geodesic_error")
        noisy[-1].to_csv(out / "noisy_final_level.csv")
        _write_json(out / "denoise.json", asdict(res) | {"threshold": t})
        _write_json(out / "meta.json", _meta(cfg, L, R))
    return res


# -- image demo ------------------------------------------------------------------------------

def run_image_demo(cfg: RunConfig):
    """Multiscale approximation of a PGM image over [-1, 1]^2; one PGM per level."""
    if not cfg.image:
        raise ConfigError("image-demo needs an input PGM (--image)")
    with Stage("image load"):
        img = load_pgm(cfg.image)
    L = _levels(cfg)
    with Stage("multiscale fit"):
        model = multiscale_fit(img, L, cfg.degree, KERNELS[cfg.kernel])
    n = cfg.image_resolution
    axis = np.linspace(-1.0, 1.0, n)
    X, Y = np.meshgrid(axis, axis[::-1])
    pts = np.column_stack([X.ravel(), Y.ravel()])
    out = _out(cfg)
    ref = img(pts)
    errs = []
    with Stage("rendering"):
        cumulative = model.evaluate_levels(pts)
        for j, vals in enumerate(cumulative, start=1):
            write_pgm(out / f"level{j}.pgm", vals.reshape(n, n))
            errs.append(float(np.nanmax(np.abs(vals - ref))))
    _write_json(out / "meta.json", _meta(cfg, L, image_linf=errs))
    return errs
