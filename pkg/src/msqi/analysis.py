"""Convergence-rate fits, anomaly scanning, rotation noise and timing."""
from __future__ import annotations

import json
import math
import statistics
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage, stats

from . import _backend
from .errors import ConfigError, NumericalError
from .manifolds import SO3_MANIFOLD, rodrigues
from .manifold_multiscale import ManifoldField
from .multiscale import ErrorField

ANOMALY_MAD_FACTOR = 5.0


# -- convergence tables and fits ----------------------------------------------

@dataclass(frozen=True)
class ConvergenceRow:
    level: int
    h_nominal: float
    h_measured: float
    linf: float
    seconds: float = math.nan


@dataclass
class ConvergenceTable:
    rows: list
    meta: dict = field(default_factory=dict)

    COLUMNS = ("level", "h_nominal", "h_measured", "linf", "seconds")

    def __post_init__(self):
        self.rows = sorted(self.rows, key=lambda r: r.level)
        for r in self.rows:
            if not (r.linf > 0):
                raise ConfigError(f"level {r.level}: error must be positive, got {r.linf}")

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(",".join(self.COLUMNS) + "\n")
            for r in self.rows:
                fh.write(f"{r.level},{r.h_nominal:.17g},{r.h_measured:.17g},"
                         f"{r.linf:.17g},{r.seconds:.17g}\n")

    @classmethod
    def from_csv(cls, path, meta=None) -> "ConvergenceTable":
        rows = []
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            if tuple(header) != cls.COLUMNS:
                raise ConfigError(f"unexpected convergence header {header}")
            for line in fh:
                lv, hn, hm, e, s = line.strip().split(",")
                rows.append(ConvergenceRow(int(lv), float(hn), float(hm), float(e), float(s)))
        return cls(rows, dict(meta or {}))


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    slope_stderr: float
    intercept_stderr: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


@dataclass(frozen=True)
class ConstantsFit:
    """``slope(mu) = log C + k log mu``."""

    log_C: float
    k: float
    log_C_stderr: float
    k_stderr: float

    @property
    def C(self) -> float:
        return math.exp(self.log_C)

    def to_json(self) -> str:
        d = asdict(self)
        d["C"] = self.C
        return json.dumps(d, indent=2, sort_keys=True)


def _ols(x, y):
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if len(x) == 2:
        slope = (y[1] - y[0]) / (x[1] - x[0])
        return slope, y[0] - slope * x[0], 0.0, 0.0
    r = stats.linregress(x, y)
    return r.slope, r.intercept, r.stderr, r.intercept_stderr


def loglog_slope(table: ConvergenceTable, abscissa: str = "level") -> SlopeFit:
    """Least-squares line through ``log(linf)`` against the level or ``log h``."""
    if len(table) < 3:
        raise ConfigError(f"slope fit needs at least 3 rows, got {len(table)}")
    e = table.column("linf")
    if abscissa == "level":
        x = table.column("level")
    elif abscissa == "log_h":
        x = np.log(table.column("h_nominal"))
    else:
        raise ConfigError(f"abscissa must be 'level' or 'log_h', got {abscissa!r}")
    return SlopeFit(*(float(v) for v in _ols(x, np.log(e))))


def estimate_constants(mu_values, slopes) -> ConstantsFit:
    """Regress per-run slopes on ``log mu``; intercept is ``log C``, slope is ``k``."""
    mu = np.asarray(mu_values, dtype=float)
    s = np.array([getattr(v, "slope", v) for v in slopes], dtype=float)
    if len(mu) != len(s):
        raise ConfigError("one slope per mu value required")
    if len(np.unique(mu)) < 2:
        raise ConfigError("need at least two distinct mu values")
    if np.any((mu <= 0) | (mu >= 1)):
        raise ConfigError("mu values must lie in (0, 1)")
    k, logC, k_se, c_se = _ols(np.log(mu), s)
    return ConstantsFit(float(logC), float(k), float(c_se), float(k_se))


# -- anomaly detection --------------------------------------------------------

@dataclass(frozen=True)
class AnomalyBox:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    nodes: int
    peak: float
    contrast: float

    def intersects(self, rect) -> bool:
        x0, x1, y0, y1 = rect
        return self.x_min <= x1 and self.x_max >= x0 and self.y_min <= y1 and self.y_max >= y0


@dataclass(frozen=True)
class AnomalyReport:
    mask: np.ndarray
    boxes: tuple
    median: float
    mad: float
    threshold: float

    def boxes_in(self, rect) -> list:
        return [b for b in self.boxes if b.intersects(rect)]

    def contrast_in(self, rect) -> float:
        """Largest box contrast over ``rect``; 0 when nothing is reported there."""
        return max((b.contrast for b in self.boxes_in(rect)), default=0.0)

    def to_json(self) -> str:
        return json.dumps({"median": self.median, "mad": self.mad, "threshold": self.threshold,
                           "boxes": [asdict(b) for b in self.boxes]}, indent=2, sort_keys=True)


def anomaly_scan(ef: ErrorField, window: int = 3) -> AnomalyReport:
    """Flag nodes above ``median + 5 MAD``; 8-connected groups of ``>= window`` nodes become boxes.

    A box's contrast is its peak error over the field median.
    """
    v = np.asarray(ef.values, dtype=float)
    if v.size == 0:
        raise ConfigError("empty error field")
    med = float(np.median(v))
    mad = float(np.median(np.abs(v - med)))
    thr = med + ANOMALY_MAD_FACTOR * mad
    mask = v > thr
    labels, _ = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    boxes, kept = [], []
    for k, sl in enumerate(ndimage.find_objects(labels), start=1):
        comp = labels[sl] == k
        size = int(comp.sum())
        if size < window:
            continue
        kept.append(k)
        peak = float(v[sl][comp].max())
        sy, sx = sl
        boxes.append(AnomalyBox(float(ef.xs[sx.start]), float(ef.xs[sx.stop - 1]),
                                float(ef.ys[sy.start]), float(ef.ys[sy.stop - 1]), size, peak,
                                peak / med if med > 0 else math.inf))
    return AnomalyReport(np.isin(labels, kept), tuple(boxes), med, mad, thr)


# -- rotation noise and denoising ------------------------------------------------

def add_noise_so3(fld: ManifoldField, sigma: float, seed: int) -> ManifoldField:
    """Right-multiply each rotation by ``exp(hat(w))`` with ``w ~ N(0, sigma^2 I_3)``."""
    if sigma < 0:
        raise ConfigError(f"sigma must be non-negative, got {sigma}")
    if fld.manifold is not SO3_MANIFOLD:
        raise ConfigError("rotation noise needs an SO(3) field")
    if sigma == 0:
        return fld
    w = np.random.default_rng(seed).normal(0.0, sigma, size=(len(fld), 3))
    noisy = SO3_MANIFOLD.project(fld.values @ rodrigues(w))
    return ManifoldField(SO3_MANIFOLD, fld.sites, noisy)


def site_deviations(noisy: ManifoldField, previous) -> np.ndarray:
    return noisy.manifold.dist(previous(noisy.sites.sites), noisy.values)


def denoise_filter(sites, noisy: ManifoldField, previous, t: float) -> ManifoldField:
    """Drop sites whose deviation from ``previous`` exceeds ``t`` times the largest one.

    ``sites`` must be the site set of ``noisy``; it is accepted for symmetry
    with the other level-wise operations.
    """
    if not (0 <= t <= 1):
        raise ConfigError(f"threshold t must lie in [0, 1], got {t}")
    if sites is not None and sites is not noisy.sites and len(sites) != len(noisy):
        raise ConfigError("sites do not match the noisy field")
    dev = site_deviations(noisy, previous)
    if np.isnan(dev).any():
        raise NumericalError("previous approximation undefined at some sites")
    keep = ~(dev > t * dev.max())
    if not keep.any():
        raise NumericalError("denoising removed every site")
    return noisy if keep.all() else noisy.subset(keep)


# -- timing ---------------------------------------------------------------------

@dataclass(frozen=True)
class BenchResult:
    median: float
    times: tuple
    nodes: int


def bench(op, points, repeats: int = 3) -> BenchResult:
    """Median wall time of ``op.evaluate_many(points)`` (or ``op(points)``), single-threaded."""
    if repeats < 3:
        raise ConfigError("bench needs at least 3 repetitions")
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    fn = getattr(op, "evaluate_many", op)
    times = []
    with _backend.single_threaded():
        for _ in range(repeats):
            t0 = time.perf_counter()
            fn(points)
            times.append(time.perf_counter() - t0)
    return BenchResult(statistics.median(times), tuple(times), len(points))
