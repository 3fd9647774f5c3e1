"""Residual-correction multiscale approximation of scalar fields.

``f_0 = 0``; on level ``j`` the residual ``f - f_{j-1}`` is sampled on
``X_j``, approximated by a quasi-interpolant with radius ``delta_j`` and added
to the running approximation.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, EmptyNeighborhood, MissingValues
from .kernel import WENDLAND_31, Kernel
from .pointset import Domain, LevelSequence, PointSet, grid_axes, grid_points
from .quasi_interp import QuasiInterpolant

logger = logging.getLogger(__name__)

FieldOracle = Callable[[np.ndarray], np.ndarray]


@dataclass
class MultiscaleModel:
    """Per-level correction operators; evaluations sum across levels."""

    corrections: list
    levels: LevelSequence
    # site indices of X_j left out of level j (overhang outside coarser coverage)
    dropped: list = field(default_factory=list)

    def __len__(self):
        return len(self.corrections)

    def evaluate_levels(self, query, upto: int | None = None) -> np.ndarray:
        """Cumulative approximations ``f_1 .. f_upto`` at ``query``.

        Returns an array of shape ``(upto, M)`` (or ``(upto, M, c)``).  A NaN
        at any level poisons that point for all finer levels.
        """
        query = np.asarray(query, dtype=float).reshape(-1, 2)
        n = len(self.corrections) if upto is None else upto
        out = []
        acc = None
        for s in self.corrections[:n]:
            v = s.evaluate_many(query)
            acc = v.copy() if acc is None else acc + v
            out.append(acc.copy())
        return np.stack(out) if out else np.empty((0, len(query)))

    def evaluate_many(self, query, upto: int | None = None) -> np.ndarray:
        n = len(self.corrections) if upto is None else upto
        query = np.asarray(query, dtype=float).reshape(-1, 2)
        acc = self.corrections[0].evaluate_many(query)
        for s in self.corrections[1:n]:
            acc = acc + s.evaluate_many(query)
        return acc

    def evaluate(self, x, upto: int | None = None):
        v = self.evaluate_many(np.asarray(x, dtype=float).reshape(1, 2), upto)[0]
        return float(v) if np.ndim(v) == 0 else v

    __call__ = evaluate_many


def evaluate_model(model: MultiscaleModel, x):
    return model.evaluate(x)


def multiscale_fit(f: FieldOracle, levels: LevelSequence, degree: int = 0,
                   kernel: Kernel = WENDLAND_31, backend=None,
                   samples: list | None = None) -> MultiscaleModel:
    """Fit the multiscale model to ``f`` sampled on ``levels``.

    Parameters
    ----------
    f : callable
        Maps an ``(M, 2)`` array of points to ``(M,)`` or ``(M, c)`` values.
        Ignored for levels whose samples are given explicitly.
    samples : list of arrays, optional
        Pre-computed samples per level (e.g. noisy data); entries may be None.

    Raises
    ------
    EmptyNeighborhood
        If a site of ``X_j`` inside the domain is not covered by a coarser level.
    """
    if len(levels) == 0:
        raise ConfigError("empty level sequence")
    domain = levels.domain
    corrections, dropped = [], []
    for j, (X, delta) in enumerate(zip(levels.levels, levels.support_radii)):
        pts = X.sites
        given = samples[j] if samples is not None and j < len(samples) else None
        fx = np.asarray(f(pts) if given is None else given, dtype=float)
        resid = fx.copy()
        for l, s in enumerate(corrections):
            resid = resid - s.evaluate_many(pts)
        bad = np.isnan(resid) if resid.ndim == 1 else np.isnan(resid).any(axis=1)
        keep_sites = X
        drop = np.flatnonzero(bad)
        if len(drop):
            inside = domain.contains(pts[drop])
            if inside.any():
                site = pts[drop[inside][0]]
                coarse = _first_uncovered(corrections, site)
                raise EmptyNeighborhood(site, levels.support_radii[coarse], level=coarse + 1)
            logger.debug("level %d: dropping %d overhang sites outside coarser coverage",
                         j + 1, len(drop))
            keep = ~bad
            keep_sites = PointSet(pts[keep], domain, nominal_h=X.nominal_h)
            resid = resid[keep]
        dropped.append(drop)
        corrections.append(QuasiInterpolant(keep_sites, resid, delta, degree, kernel,
                                            backend=backend))
    return MultiscaleModel(corrections, levels, dropped)


def _first_uncovered(corrections, site):
    for l, s in enumerate(corrections):
        if np.isnan(np.atleast_1d(s.evaluate_many(site[None, :])[0])).any():
            return l
    return 0


def single_scale(f: FieldOracle, X: PointSet, delta: float, degree: int = 0,
                 kernel: Kernel = WENDLAND_31, backend=None) -> QuasiInterpolant:
    """Plain quasi-interpolant of ``f`` on one site set."""
    return QuasiInterpolant(X, f(X.sites), delta, degree, kernel, backend=backend)


@dataclass
class ErrorField:
    """Pointwise errors on the grid ``G(R, h_grid)``; ``values[iy, ix]``."""

    R: Domain
    h_grid: float
    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray
    linf: float = field(init=False)

    def __post_init__(self):
        self.linf = float(self.values.max()) if self.values.size else 0.0

    @property
    def points(self) -> np.ndarray:
        return grid_points(self.xs, self.ys)

    def to_csv(self, path, column: str = "abs_error") -> None:
        pts = self.points
        with open(path, "w") as fh:
            fh.write(f"x,y,{column}\n")
            for (x, y), e in zip(pts, self.values.ravel()):
                fh.write(f"{x:.17g},{y:.17g},{e:.17g}\n")


def error_field(approx_values, reference_values, xs, ys, R: Domain, h_grid: float,
                metric=None) -> ErrorField:
    """Error field from pre-computed values on the grid nodes (row-major)."""
    approx_values = np.asarray(approx_values, dtype=float)
    missing = np.isnan(approx_values)
    if missing.ndim > 1:
        missing = missing.reshape(len(missing), -1).any(axis=1)
    if missing.any():
        k = int(np.flatnonzero(missing)[0])
        node = grid_points(xs, ys)[k]
        raise MissingValues(f"approximation undefined at grid node ({node[0]:.6g}, {node[1]:.6g}) "
                            f"of the evaluation rectangle; shrink R or enlarge the support")
    if metric is None:
        err = np.abs(approx_values - np.asarray(reference_values, dtype=float))
        if err.ndim > 1:
            err = err.reshape(len(err), -1).max(axis=1)
    else:
        err = metric(approx_values, reference_values)
    return ErrorField(R, h_grid, xs, ys, err.reshape(len(ys), len(xs)))


def linf_error(approx: FieldOracle, reference: FieldOracle, R: Domain,
               h_grid: float = 0.02) -> ErrorField:
    """Discrete max error of ``approx`` against ``reference`` on ``G(R, h_grid)``."""
    xs, ys = grid_axes(R, h_grid)
    pts = grid_points(xs, ys)
    return error_field(approx(pts), reference(pts), xs, ys, R, h_grid)


def default_error_rect(levels: LevelSequence, inset: str = "finest") -> Domain:
    """The domain inset by the finest (default) or coarsest support radius."""
    if inset not in ("finest", "coarsest"):
        raise ConfigError(f"inset must be 'finest' or 'coarsest', got {inset!r}")
    margin = levels.support_radii[-1 if inset == "finest" else 0]
    try:
        return levels.domain.inset(margin)
    except ConfigError as exc:
        raise ConfigError(
            f"evaluation rectangle empty: inset {margin:g} exceeds the domain "
            f"half-width; lower nu or h1") from exc
