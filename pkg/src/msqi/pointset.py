"""Scattered site generation, measurement and fixed-radius search.

Sites are planar.  Level sequences are built by tiling a scaled Halton
base set over a rectangle; each level is a :class:`PointSet` carrying a
k-d tree for radius queries and cached fill distance / separation radius.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import _backend
from .errors import ConfigError

BASE_SET_SIZE = 400
HALTON_BASES = (2, 3)
DUPLICATE_TOL = 1e-12
# Probe step used for the base set; its fill distance sets every tile scale.
BASE_PROBE_H = 1.0 / 1024
_PROBE_CHUNK = 1 << 18


@dataclass(frozen=True)
class Domain:
    """Axis-aligned rectangle ``[x_min, x_max] x [y_min, y_max]``."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        vals = (self.x_min, self.x_max, self.y_min, self.y_max)
        if not all(math.isfinite(v) for v in vals):
            raise ConfigError(f"non-finite domain bounds {vals}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ConfigError(f"degenerate domain {vals}")

    @classmethod
    def parse(cls, text: str) -> "Domain":
        """Parse ``"xmin,xmax,ymin,ymax"``."""
        try:
            parts = [float(p) for p in text.split(",")]
        except ValueError as exc:
            raise ConfigError(f"bad domain spec {text!r}") from exc
        if len(parts) != 4:
            raise ConfigError(f"domain needs 4 numbers, got {text!r}")
        return cls(*parts)

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def diameter(self) -> float:
        return math.hypot(self.width, self.height)

    @property
    def area(self) -> float:
        return self.width * self.height

    def inset(self, margin: float) -> "Domain":
        return Domain(self.x_min + margin, self.x_max - margin,
                      self.y_min + margin, self.y_max - margin)

    def contains(self, pts) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return ((pts[:, 0] >= self.x_min) & (pts[:, 0] <= self.x_max)
                & (pts[:, 1] >= self.y_min) & (pts[:, 1] <= self.y_max))

    def as_tuple(self):
        return (self.x_min, self.x_max, self.y_min, self.y_max)


UNIT_SQUARE = Domain(0.0, 1.0, 0.0, 1.0)


def halton(index: int, base: int) -> float:
    """Radical inverse of ``index`` in ``base``."""
    if base < 2:
        raise ConfigError(f"halton base must be >= 2, got {base}")
    if index < 0:
        raise ConfigError(f"halton index must be >= 0, got {index}")
    result, f = 0.0, 1.0
    while index > 0:
        f /= base
        index, digit = divmod(index, base)
        result += f * digit
    return result


def halton_sequence(n: int, base: int, start: int = 1) -> np.ndarray:
    """Vectorised :func:`halton` for indices ``start .. start+n-1``."""
    if base < 2:
        raise ConfigError(f"halton base must be >= 2, got {base}")
    idx = np.arange(start, start + n, dtype=np.int64)
    out = np.zeros(n)
    f = 1.0
    while np.any(idx > 0):
        f /= base
        idx, digit = np.divmod(idx, base)
        out += f * digit
    return out


def probe_grid(domain: Domain, step: float) -> tuple[np.ndarray, np.ndarray]:
    """Node coordinates (x, y) of a grid with spacing at most ``step``
    covering the closed rectangle, edges included."""
    nx = max(1, math.ceil(domain.width / step - 1e-9)) + 1
    ny = max(1, math.ceil(domain.height / step - 1e-9)) + 1
    return (np.linspace(domain.x_min, domain.x_max, nx),
            np.linspace(domain.y_min, domain.y_max, ny))


def _fill_distance(tree: cKDTree, domain: Domain, probe_h: float) -> float:
    xs, ys = probe_grid(domain, probe_h)
    rows = max(1, _PROBE_CHUNK // len(xs))
    best = 0.0
    for k in range(0, len(ys), rows):
        yy = ys[k:k + rows]
        pts = np.column_stack([np.tile(xs, len(yy)), np.repeat(yy, len(xs))])
        d, _ = tree.query(pts)
        best = max(best, float(d.max()))
    return best


class PointSet:
    """Immutable set of planar sites with a k-d tree index.

    Parameters
    ----------
    sites : (N, 2) array_like
    domain : Domain
        Region over which the fill distance is measured.  Sites produced by
        tiling may overhang it; containment is not enforced.
    nominal_h : float, optional
        Requested fill distance; sets the default probe step (``nominal_h/10``).
    """

    def __init__(self, sites, domain: Domain, nominal_h: float | None = None):
        sites = np.array(sites, dtype=float, copy=True).reshape(-1, 2)
        if len(sites) == 0:
            raise ConfigError("point set must contain at least one site")
        if not np.all(np.isfinite(sites)):
            raise ConfigError("non-finite site coordinates")
        sites.setflags(write=False)
        self._sites = sites
        self.domain = domain
        self.nominal_h = nominal_h
        self.tree = cKDTree(sites)

    @property
    def sites(self) -> np.ndarray:
        return self._sites

    def __len__(self) -> int:
        return len(self._sites)

    def __repr__(self):
        return f"PointSet(n={len(self)}, domain={self.domain.as_tuple()}, nominal_h={self.nominal_h})"

    @property
    def default_probe_h(self) -> float:
        if self.nominal_h is not None:
            return self.nominal_h / 10
        return math.sqrt(self.domain.area / len(self)) / 10

    @functools.cached_property
    def fill_distance(self) -> float:
        return _fill_distance(self.tree, self.domain, self.default_probe_h)

    @functools.cached_property
    def separation_radius(self) -> float:
        return separation_radius(self)

    def radius_query(self, center, radius: float) -> np.ndarray:
        return radius_query(self, center, radius)

    def neighbors(self, query, radius: float, workers: int = 1):
        """Strict fixed-radius neighbor lists in CSR form.

        Returns ``(indptr, indices)``; the neighbors of query ``k`` are
        ``indices[indptr[k]:indptr[k+1]]`` sorted ascending, each satisfying
        ``|q_k - x_i| < radius``.
        """
        query = np.ascontiguousarray(np.atleast_2d(query), dtype=float)
        if radius <= 0:
            raise ConfigError(f"radius must be positive, got {radius}")
        fast = getattr(_backend.kernels, "radius_csr", None)
        if fast is not None and self._cell_count(radius) <= 4 * len(self) + 4096:
            return fast(query, self._sites, float(radius), workers)
        lists = self.tree.query_ball_point(query, radius, return_sorted=True,
                                           workers=workers)
        counts = np.fromiter((len(l) for l in lists), dtype=np.intp, count=len(lists))
        indices = np.fromiter(itertools.chain.from_iterable(lists), dtype=np.intp,
                              count=int(counts.sum()))
        owner = np.repeat(np.arange(len(query)), counts)
        diff = self._sites[indices] - query[owner]
        keep = np.sqrt(diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1]) < radius
        if not keep.all():
            indices = indices[keep]
            counts = np.bincount(owner[keep], minlength=len(query))
        indptr = np.zeros(len(query) + 1, dtype=np.intp)
        np.cumsum(counts, out=indptr[1:])
        return indptr, indices

    def _cell_count(self, radius: float) -> float:
        extent = self._sites.max(axis=0) - self._sites.min(axis=0)
        return float(np.prod(np.floor(extent / radius) + 1))

    def nearest(self, query) -> np.ndarray:
        """Index of the nearest site per query; ties go to the lowest index."""
        query = np.atleast_2d(np.asarray(query, dtype=float))
        k = min(len(self), 8)
        d, idx = self.tree.query(query, k=k)
        if k == 1:
            return np.asarray(idx, dtype=np.intp).reshape(-1)
        d = d.reshape(len(query), k)
        idx = idx.reshape(len(query), k)
        tied = d == d[:, :1]
        return np.where(tied, idx, np.iinfo(np.intp).max).min(axis=1).astype(np.intp)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("x,y\n")
            for x, y in self._sites:
                fh.write(f"{x:.17g},{y:.17g}\n")


def fill_distance(points: PointSet, probe_h: float | None = None) -> float:
    """Fill distance estimated as the largest nearest-site distance over a
    probe grid of step ``probe_h`` covering ``points.domain``."""
    if probe_h is None:
        return points.fill_distance
    if probe_h <= 0:
        raise ConfigError(f"probe_h must be positive, got {probe_h}")
    return _fill_distance(points.tree, points.domain, probe_h)


def separation_radius(points: PointSet) -> float:
    """Half the minimum pairwise distance."""
    if len(points) < 2:
        raise ConfigError("separation radius needs at least two sites")
    d, _ = points.tree.query(points.sites, k=2)
    q = 0.5 * float(d[:, 1].min())
    if q <= 0.0:
        raise ConfigError("duplicate sites: separation radius is zero")
    return q


def radius_query(points: PointSet, center, radius: float) -> np.ndarray:
    """Indices ``i`` with ``|center - x_i| < radius`` (sorted)."""
    if radius <= 0:
        raise ConfigError(f"radius must be positive, got {radius}")
    indptr, indices = points.neighbors(np.asarray(center, dtype=float).reshape(1, 2), radius)
    return indices


@functools.lru_cache(maxsize=8)
def halton_base_set(n: int = BASE_SET_SIZE) -> PointSet:
    """``n`` Halton points with bases (2, 3), indices ``1..n``, on the unit square."""
    if n < 3:
        raise ConfigError(f"base set needs n >= 3, got {n}")
    sites = np.column_stack([halton_sequence(n, HALTON_BASES[0]),
                             halton_sequence(n, HALTON_BASES[1])])
    ps = PointSet(sites, UNIT_SQUARE)
    ps.__dict__["fill_distance"] = fill_distance(ps, BASE_PROBE_H)
    return ps


def _dedupe(sites: np.ndarray, tol: float = DUPLICATE_TOL) -> np.ndarray:
    pairs = cKDTree(sites).query_pairs(tol, output_type="ndarray")
    if len(pairs) == 0:
        return sites
    drop = np.zeros(len(sites), dtype=bool)
    drop[np.maximum(pairs[:, 0], pairs[:, 1])] = True
    return sites[~drop]


def _tile_count(extent: float, r: float) -> int:
    ratio = extent / r
    nearest = round(ratio)
    if abs(ratio - nearest) <= 1e-9 * max(1.0, ratio):
        return max(1, int(nearest))
    return max(1, math.ceil(ratio))


def halton_tile(domain: Domain, target_h: float, base: PointSet | None = None) -> PointSet:
    """Cover ``domain`` with translated copies of the base set scaled so that
    its fill distance becomes ``target_h``.

    Tiles are anchored at ``(x_min, y_min)`` and may overhang the upper and
    right edges; overhanging sites are kept.
    """
    if base is None:
        base = halton_base_set()
    if not (target_h > 0):
        raise ConfigError(f"target_h must be positive, got {target_h}")
    if target_h >= domain.diameter:
        raise ConfigError(f"target_h={target_h} not below domain diameter {domain.diameter:g}")
    r = target_h / base.fill_distance
    nx, ny = _tile_count(domain.width, r), _tile_count(domain.height, r)
    scaled = r * base.sites
    tiles = [scaled + (domain.x_min + r * i, domain.y_min + r * j)
             for i in range(nx) for j in range(ny)]
    sites = _dedupe(np.concatenate(tiles))
    return PointSet(sites, domain, nominal_h=target_h)


@dataclass(frozen=True)
class LevelSequence:
    """Nested-scale site sets with ``h_{j+1} = mu h_j`` and ``delta_j = nu h_j``."""

    levels: tuple[PointSet, ...]
    mu: float
    nu: float
    nominal_h: tuple[float, ...]
    support_radii: tuple[float, ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "support_radii", tuple(self.nu * h for h in self.nominal_h))

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, j):
        return self.levels[j]

    @property
    def domain(self) -> Domain:
        return self.levels[0].domain


def build_level_sequence(domain: Domain, h1: float, mu: float, nu: float, n: int,
                         base: PointSet | None = None) -> LevelSequence:
    """Level ``j`` (1-based) is ``halton_tile(domain, h1 * mu**(j-1))``."""
    if not (0 < mu < 1):
        raise ConfigError(f"mu must lie in (0, 1), got {mu}")
    if not (nu > 1):
        raise ConfigError(f"nu must exceed 1, got {nu}")
    if n < 1:
        raise ConfigError(f"need at least one level, got {n}")
    hs = tuple(h1 * mu ** j for j in range(n))
    levels = tuple(halton_tile(domain, h, base) for h in hs)
    return LevelSequence(levels, mu, nu, hs)


def levels_from_sites(site_lists: Sequence, domain: Domain, nominal_h: Sequence[float],
                      mu: float, nu: float) -> LevelSequence:
    """Wrap externally supplied site arrays as a level sequence."""
    levels = tuple(PointSet(s, domain, nominal_h=h) for s, h in zip(site_lists, nominal_h))
    return LevelSequence(levels, mu, nu, tuple(nominal_h))


def grid_axes(domain: Domain, step: float) -> tuple[np.ndarray, np.ndarray]:
    """Axes of the regular grid ``x_min + i*step <= x_max`` (likewise in y)."""
    if not (step > 0):
        raise ConfigError(f"grid step must be positive, got {step}")
    nx = int(math.floor(domain.width / step + 1e-9)) + 1
    ny = int(math.floor(domain.height / step + 1e-9)) + 1
    return (domain.x_min + step * np.arange(nx), domain.y_min + step * np.arange(ny))


def grid_points(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Row-major (y outer, x inner) node coordinates of a tensor grid."""
    X, Y = np.meshgrid(xs, ys)
    return np.column_stack([X.ravel(), Y.ravel()])
