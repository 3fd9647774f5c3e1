"""Manifold-valued quasi-interpolation and multiscale residual correction.

Shepard weights combine samples through a weighted Karcher mean.  The
multiscale scheme anchors its tangent bookkeeping at a base function ``B``:

* ``F_0 = B`` and the first level averages the samples ``F(x_i)`` themselves.
* From the second level on, the residual ``e(x_i) = F(x_i) - F_{j-1}(x_i)``
  (a log at ``F_{j-1}(x_i)``) is stored transported to ``B(x_i)``.  At a
  query ``x`` each stored residual is moved on to ``B(x)``, pushed through
  ``B(x)`` with exp, averaged, pulled back with log at ``B(x)``, transported
  to ``F_{j-1}(x)`` and applied with exp.

Relocating every residual to the query's own base point keeps the average
free of jumps in the piecewise-constant nearest-sample base function.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, CutLocus, EmptyNeighborhood, MissingValues
from .manifolds import CUT_LOCUS_MARGIN, SPD, SO3, Euclidean, KarcherConfig, Manifold
from .multiscale import ErrorField, error_field
from .pointset import Domain, LevelSequence, PointSet, grid_axes, grid_points
from .quasi_interp import shepard_weights_csr

logger = logging.getLogger(__name__)

CHUNK = 2048


def _batch_check(manifold: Manifold, values):
    for start in range(0, len(values), 4096):
        manifold.check_point(values[start:start + 4096])


@dataclass(frozen=True)
class ManifoldField:
    """Samples of a manifold-valued field: one point per site."""

    manifold: Manifold
    sites: PointSet
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (len(self.sites),) + tuple(self.manifold.point_shape):
            raise ConfigError(f"expected {len(self.sites)} values of shape "
                              f"{self.manifold.point_shape}, got {vals.shape}")
        _batch_check(self.manifold, vals)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.sites)

    def subset(self, keep) -> "ManifoldField":
        keep = np.asarray(keep)
        pts = PointSet(self.sites.sites[keep], self.sites.domain, nominal_h=self.sites.nominal_h)
        return ManifoldField(self.manifold, pts, self.values[keep])

    def to_csv(self, path) -> None:
        write_manifold_csv(path, self.sites.sites, self.values)


def write_manifold_csv(path, points, values) -> None:
    """Rows ``x,y`` followed by the flattened value (row-major), 9 decimals."""
    values = np.asarray(values, dtype=float)
    flat = values.reshape(len(values), -1)
    if values.ndim == 3:
        n = values.shape[1]
        cols = [f"m{i}{j}" for i in range(n) for j in range(values.shape[2])]
    else:
        cols = [f"v{i}" for i in range(flat.shape[1])]
    with open(path, "w") as fh:
        fh.write(",".join(["x", "y"] + cols) + "\n")
        for (x, y), row in zip(np.asarray(points), flat):
            fh.write(f"{x:.9f},{y:.9f}," + ",".join(f"{v:.9f}" for v in row) + "\n")


class BaseFunction:
    """Reference field ``B``: nearest anchor sample (lowest index on ties) or a constant."""

    def __init__(self, manifold: Manifold, anchors: ManifoldField | None = None, constant=None):
        if (anchors is None) == (constant is None):
            raise ConfigError("give exactly one of anchors or constant")
        if anchors is not None and len(anchors) == 0:
            raise ConfigError("base function needs at least one anchor sample")
        self.manifold = manifold
        self.anchors = anchors
        self.constant = None if constant is None else np.asarray(constant, dtype=float)

    @classmethod
    def from_samples(cls, anchors: ManifoldField) -> "BaseFunction":
        return cls(anchors.manifold, anchors=anchors)

    @classmethod
    def constant_at(cls, manifold: Manifold, point) -> "BaseFunction":
        return cls(manifold, constant=point)

    def __call__(self, query) -> np.ndarray:
        query = np.asarray(query, dtype=float).reshape(-1, 2)
        if self.constant is not None:
            return np.broadcast_to(self.constant, (len(query),) + self.constant.shape).copy()
        return self.anchors.values[self.anchors.sites.nearest(query)]


def base_function(samples: ManifoldField, x) -> np.ndarray:
    """Value of the nearest-sample base function at the single point ``x``."""
    return BaseFunction.from_samples(samples)(np.asarray(x, dtype=float).reshape(1, 2))[0]


# -- neighbourhood averaging ----------------------------------------------------

def _padded(indptr, indices, a, rows):
    """Dense ``(len(rows), K)`` neighbour index/weight arrays; padding has weight 0."""
    counts = np.diff(indptr)[rows]
    K = int(counts.max())
    cols = np.arange(K)
    valid = cols[None, :] < counts[:, None]
    pos = indptr[rows][:, None] + np.where(valid, cols[None, :], 0)
    return np.where(valid, indices[pos], -1), np.where(valid, a[pos], 0.0), valid


def _karcher(manifold: Manifold, points, w, valid, cfg: KarcherConfig):
    """Weighted means of padded neighbour stacks ``points[m, k]``."""
    M = len(points)
    if isinstance(manifold, SPD):
        init = manifold.linear_mean(points, w) / w.sum(axis=1)[:, None, None]
        # padding must stay SPD for the eigen-solves; any valid entry works (weight 0)
        return manifold.iannazzo_batch(points, w, init, cfg)
    nearest = np.argmax(w, axis=1)
    init = points[np.arange(M), nearest].copy()
    return manifold.karcher_batch(points, w, init, cfg)


def _fill_padding(points, valid, rows_ref):
    """Replace padded entries with the row's first valid point."""
    first = points[:, 0]
    extra = (None,) * (points.ndim - 2)
    return np.where(valid[(...,) + extra], points, first[:, None])


class ManifoldQuasiInterpolant:
    """Shepard-weighted Karcher means of the samples of one field."""

    def __init__(self, samples: ManifoldField, delta: float, cfg: KarcherConfig = KarcherConfig()):
        if not (delta > 0):
            raise ConfigError(f"support radius must be positive, got {delta}")
        self.samples = samples
        self.manifold = samples.manifold
        self.delta = float(delta)
        self.cfg = cfg

    def evaluate_many(self, query, on_empty: str = "nan") -> np.ndarray:
        query = np.asarray(query, dtype=float).reshape(-1, 2)
        out = np.full((len(query),) + tuple(self.manifold.point_shape), np.nan)
        for s in range(0, len(query), CHUNK):
            q = query[s:s + CHUNK]
            indptr, indices, a = shepard_weights_csr(self.samples.sites, q, self.delta)
            rows = np.flatnonzero(np.diff(indptr) > 0)
            if on_empty == "raise" and len(rows) < len(q):
                miss = np.setdiff1d(np.arange(len(q)), rows)[0]
                raise EmptyNeighborhood(q[miss], self.delta)
            if len(rows) == 0:
                continue
            idx, w, valid = _padded(indptr, indices, a, rows)
            pts = _fill_padding(self.samples.values[np.maximum(idx, 0)], valid, rows)
            out[s + rows] = _karcher(self.manifold, pts, w, valid, self.cfg)
        return out

    def evaluate(self, x):
        return self.evaluate_many(np.asarray(x, dtype=float).reshape(1, 2), on_empty="raise")[0]

    __call__ = evaluate_many


def manifold_quasi_interp(field: ManifoldField, x, delta: float,
                          cfg: KarcherConfig = KarcherConfig()) -> np.ndarray:
    """Quasi-interpolated value at one point; raises on an empty neighbourhood."""
    return ManifoldQuasiInterpolant(field, delta, cfg).evaluate(x)


# -- multiscale model -----------------------------------------------------------

@dataclass(frozen=True)
class _Level:
    sites: PointSet
    delta: float
    # level 1: samples of F; later levels: residual tangents stored at B(x_i)
    data: np.ndarray
    base_at_sites: np.ndarray
    is_first: bool


@dataclass(frozen=True)
class ManifoldMultiscaleModel:
    """Base function plus per-level correction data; evaluation chains the levels."""

    manifold: Manifold
    base: BaseFunction
    levels: tuple = ()
    cfg: KarcherConfig = KarcherConfig()
    dropped: tuple = ()
    level_sequence: LevelSequence | None = field(default=None, compare=False)

    def __len__(self):
        return len(self.levels)

    def _correction(self, lvl: _Level, query, Bq):
        """Tangent ``S_j(x) - B(x)`` at ``B(x)`` for each query; NaN if uncovered."""
        M = self.manifold
        out = np.full((len(query),) + tuple(M.point_shape), np.nan)
        for s in range(0, len(query), CHUNK):
            q, B = query[s:s + CHUNK], Bq[s:s + CHUNK]
            indptr, indices, a = shepard_weights_csr(lvl.sites, q, lvl.delta)
            rows = np.flatnonzero(np.diff(indptr) > 0)
            if len(rows) == 0:
                continue
            idx, w, valid = _padded(indptr, indices, a, rows)
            safe = np.maximum(idx, 0)
            Br = B[rows]
            extra = (None,) * len(M.point_shape)
            if lvl.is_first:
                pts = lvl.data[safe]
            else:
                Bk = np.broadcast_to(Br[:, None], (len(rows), idx.shape[1]) + Br.shape[1:])
                v = M.transport(lvl.base_at_sites[safe], Bk, lvl.data[safe])
                v = np.where(valid[(...,) + extra], v, 0.0)
                pts = M.exp(Bk, v)
            pts = _fill_padding(pts, valid, rows)
            S = _karcher(M, pts, w, valid, self.cfg)
            out[s + rows] = M.log(Br, S)
        return out

    def evaluate_levels(self, query, upto: int | None = None) -> np.ndarray:
        """Cumulative approximations ``F_1..F_upto``; shape ``(upto, M) + point_shape``."""
        query = np.asarray(query, dtype=float).reshape(-1, 2)
        n = len(self.levels) if upto is None else upto
        M = self.manifold
        Bq = self.base(query)
        Y = Bq.copy()
        ok = np.ones(len(query), dtype=bool)
        extra = tuple(range(1, 1 + len(M.point_shape)))
        out = []
        for lvl in self.levels[:n]:
            c = self._correction(lvl, query, Bq)
            ok &= ~np.isnan(c).any(axis=extra)
            rows = np.flatnonzero(ok)
            if len(rows):
                step = M.transport(Bq[rows], Y[rows], c[rows])
                Y[rows] = M.exp(Y[rows], step)
                if isinstance(M, SO3):
                    Y[rows] = M.project(Y[rows])
            Y[~ok] = np.nan
            out.append(Y.copy())
        return np.stack(out) if out else np.empty((0, len(query)) + tuple(M.point_shape))

    def evaluate_many(self, query, upto: int | None = None) -> np.ndarray:
        levels = self.evaluate_levels(query, upto)
        return levels[-1]

    __call__ = evaluate_many

    def evaluate(self, x, upto: int | None = None):
        v = self.evaluate_many(np.asarray(x, dtype=float).reshape(1, 2), upto)[0]
        if np.isnan(v).any():
            raise MissingValues(f"point {tuple(np.ravel(x))} not covered by every level")
        return v

    def add_level(self, samples: ManifoldField, delta: float) -> "ManifoldMultiscaleModel":
        """New model with one more correction level fitted to ``samples``."""
        if samples.manifold is not self.manifold:
            raise ConfigError("samples live on a different manifold")
        j = len(self.levels) + 1
        X = samples.sites
        F = samples.values
        Bx = self.base(X.sites)
        if j == 1:
            lvl = _Level(X, float(delta), F, Bx, True)
            return replace(self, levels=self.levels + (lvl,), dropped=self.dropped + (np.empty(0, int),))
        prev = self.evaluate_many(X.sites)
        extra = tuple(range(1, 1 + len(self.manifold.point_shape)))
        bad = np.isnan(prev).any(axis=extra)
        drop = np.flatnonzero(bad)
        if len(drop):
            inside = X.domain.contains(X.sites[drop])
            if inside.any():
                site = X.sites[drop[inside][0]]
                raise EmptyNeighborhood(site, self.levels[0].delta, level=j - 1)
            logger.debug("level %d: dropping %d overhang sites outside coarser coverage",
                         j, len(drop))
            keep = ~bad
            X = PointSet(X.sites[keep], X.domain, nominal_h=X.nominal_h)
            F, Bx, prev = F[keep], Bx[keep], prev[keep]
        e = _log_checked(self.manifold, prev, F, X.sites, j)
        stored = self.manifold.transport(prev, Bx, e)
        lvl = _Level(X, float(delta), stored, Bx, False)
        return replace(self, levels=self.levels + (lvl,), dropped=self.dropped + (drop,))

    def residual_norms(self, samples: ManifoldField) -> np.ndarray:
        """Geodesic distances ``rho(F(x_i), F_n(x_i))`` at the given samples."""
        prev = self.evaluate_many(samples.sites.sites)
        return self.manifold.dist(prev, samples.values)


def _log_checked(manifold, base, target, sites, level):
    try:
        return manifold.log(base, target)
    except CutLocus:
        d = manifold.dist(base, target)
        k = int(np.argmax(d))
        x, y = sites[k]
        raise CutLocus(f"level {level}, site ({x:.6g}, {y:.6g}): residual angle {d[k]:.9f} "
                       f"within {CUT_LOCUS_MARGIN:g} of pi") from None


def sample_field(manifold: Manifold, F, X: PointSet) -> ManifoldField:
    return ManifoldField(manifold, X, F(X.sites))


def manifold_multiscale_fit(F, levels: LevelSequence, manifold: Manifold,
                            base: BaseFunction | None = None,
                            cfg: KarcherConfig = KarcherConfig(),
                            samples: list | None = None) -> ManifoldMultiscaleModel:
    """Fit the manifold multiscale model on every level of ``levels``.

    ``F`` maps ``(M, 2)`` points to ``(M,) + point_shape`` values.  ``samples``
    optionally supplies a :class:`ManifoldField` per level (e.g. noisy data);
    its sites then replace the level's sites.  The default base function is
    the nearest-sample rule on the first level's samples.
    """
    if len(levels) == 0:
        raise ConfigError("empty level sequence")
    fields = []
    for j, X in enumerate(levels.levels):
        given = samples[j] if samples is not None and j < len(samples) else None
        fields.append(given if given is not None else sample_field(manifold, F, X))
    if base is None:
        base = BaseFunction.from_samples(fields[0])
    model = ManifoldMultiscaleModel(manifold, base, cfg=cfg, level_sequence=levels)
    for fld, delta in zip(fields, levels.support_radii):
        model = model.add_level(fld, delta)
    return model


def evaluate_manifold_model(model: ManifoldMultiscaleModel, x):
    return model.evaluate(x)


def manifold_linf_error(approx, reference, R: Domain, manifold: Manifold,
                        h_grid: float = 0.02) -> ErrorField:
    """Max geodesic distance between two field oracles on ``G(R, h_grid)``."""
    xs, ys = grid_axes(R, h_grid)
    pts = grid_points(xs, ys)
    return error_field(approx(pts), reference(pts), xs, ys, R, h_grid,
                       metric=lambda a, b: manifold.dist(a, b))
