"""Scalar quasi-interpolation: Shepard (degree 0) and moving least squares.

The MLS basis is the monomial basis shifted to the query point and scaled
by the support radius, ``p_beta(y) = ((y - x) / delta)^beta``, which keeps
the local Gram matrix well conditioned for reasonable site geometry.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend, _pykernels
from .errors import ConfigError, EmptyNeighborhood, NonUnisolvent
from .kernel import WENDLAND_31, Kernel
from .pointset import Domain, PointSet, grid_axes, grid_points

DEFAULT_CONDITION_CAP = 1e12


@dataclass(frozen=True)
class WeightVector:
    """Neighbor indices and their coefficients ``a_i(x)``."""

    indices: np.ndarray
    a: np.ndarray

    def __len__(self):
        return len(self.indices)


@dataclass(frozen=True)
class GridField:
    """Values on the tensor grid ``xs x ys``; ``values[iy, ix]``."""

    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)


class QuasiInterpolant:
    """Frozen local approximation operator over one site set.

    Parameters
    ----------
    sites : PointSet
    values : array_like, shape (N,) or (N, c)
        Samples at the sites; vector-valued data is approximated componentwise.
    delta : float
        Support radius of the weights.
    degree : int
        Polynomial reproduction degree; 0 selects Shepard's method.
    kernel : Kernel
    gram_condition_cap : float
        Local Gram systems with a larger 1-norm condition number are rejected.
    backend : {"python", "cython"}, optional
        Override the kernel backend chosen at import.
    """

    def __init__(self, sites: PointSet, values, delta: float, degree: int = 0,
                 kernel: Kernel = WENDLAND_31,
                 gram_condition_cap: float = DEFAULT_CONDITION_CAP, backend=None):
        vals = np.array(values, dtype=float)
        self._scalar = vals.ndim == 1
        vals = np.ascontiguousarray(vals.reshape(len(vals), -1))
        if len(vals) != len(sites):
            raise ConfigError(f"{len(vals)} values for {len(sites)} sites")
        if not (delta > 0):
            raise ConfigError(f"support radius must be positive, got {delta}")
        if degree < 0 or int(degree) != degree:
            raise ConfigError(f"degree must be a non-negative integer, got {degree}")
        vals.setflags(write=False)
        self.sites = sites
        self.values = vals
        self.delta = float(delta)
        self.degree = int(degree)
        self.kernel = kernel
        self.gram_condition_cap = float(gram_condition_cap)
        self._kernels = _backend.get(backend)
        if kernel is not WENDLAND_31 or (self.degree > 4 and self._kernels is not _pykernels):
            self._kernels = None

    def __repr__(self):
        return (f"QuasiInterpolant(n={len(self.sites)}, delta={self.delta:g}, "
                f"degree={self.degree})")

    @property
    def value_dim(self) -> int:
        return self.values.shape[1]

    # -- weights -----------------------------------------------------------
    def _offsets(self, x):
        x = np.asarray(x, dtype=float).reshape(2)
        _, idx = self.sites.neighbors(x[None, :], self.delta)
        d = (self.sites.sites[idx] - x) / self.delta
        return x, idx, d[:, 0], d[:, 1]

    def weights(self, x) -> WeightVector:
        """Coefficients ``a_i(x)`` over the open ``delta``-neighborhood of ``x``."""
        x, idx, dx, dy = self._offsets(x)
        if self.degree == 0:
            w = self.kernel(np.sqrt(dx * dx + dy * dy))
            wsum = w.sum()
            if len(idx) == 0 or not wsum > 0:
                raise EmptyNeighborhood(x, self.delta)
            return WeightVector(idx, w / wsum)
        if len(idx) == 0:
            raise EmptyNeighborhood(x, self.delta)
        a, status, cond = _pykernels.mls_point_weights(dx, dy, self.degree,
                                                       self.gram_condition_cap)
        if status == _pykernels.EMPTY:
            raise EmptyNeighborhood(x, self.delta)
        if status == _pykernels.NON_UNISOLVENT:
            raise NonUnisolvent(x, cond)
        return WeightVector(idx, a)

    # -- evaluation --------------------------------------------------------
    def evaluate_many(self, query, on_empty="nan"):
        """Evaluate at an ``(M, 2)`` array of points.

        Points with an empty neighborhood become NaN (``on_empty="nan"``) or
        raise :class:`EmptyNeighborhood` (``on_empty="raise"``).  A
        non-unisolvent neighborhood always raises.
        """
        query = np.ascontiguousarray(np.asarray(query, dtype=float).reshape(-1, 2))
        if len(query) == 0:
            return np.empty((0,) if self._scalar else (0, self.value_dim))
        threads = _backend.thread_count()
        indptr, indices = self.sites.neighbors(query, self.delta, workers=threads)
        if self._kernels is None:
            out, status, cond = self._generic_eval(query, indptr, indices)
        elif self.degree == 0:
            out, status = self._kernels.shepard_eval(query, self.sites.sites, self.values,
                                                     indptr, indices, self.delta, threads)
            cond = None
        else:
            out, status, cond = self._kernels.mls_eval(
                query, self.sites.sites, self.values, indptr, indices, self.delta,
                self.degree, self.gram_condition_cap, threads)
        bad = np.flatnonzero(status == _pykernels.NON_UNISOLVENT)
        if len(bad):
            raise NonUnisolvent(query[bad[0]], cond[bad[0]])
        if on_empty == "raise":
            empty = np.flatnonzero(status == _pykernels.EMPTY)
            if len(empty):
                raise EmptyNeighborhood(query[empty[0]], self.delta)
        return out[:, 0] if self._scalar else out

    def _generic_eval(self, query, indptr, indices):
        M = len(query)
        out = np.full((M, self.value_dim), np.nan)
        status = np.full(M, _pykernels.EMPTY, dtype=np.int8)
        cond = np.full(M, np.inf)
        for k in range(M):
            try:
                wv = self.weights(query[k])
            except EmptyNeighborhood:
                continue
            except NonUnisolvent as exc:
                status[k], cond[k] = _pykernels.NON_UNISOLVENT, exc.condition
                continue
            out[k] = wv.a @ self.values[wv.indices]
            status[k] = _pykernels.OK
        return out, status, cond

    def evaluate(self, x):
        """Value at a single point; raises on an empty neighborhood."""
        out = self.evaluate_many(np.asarray(x, dtype=float).reshape(1, 2), on_empty="raise")
        return float(out[0]) if self._scalar else out[0]

    def __call__(self, query):
        return self.evaluate_many(query)

    def evaluate_grid(self, R: Domain, step: float) -> GridField:
        """Evaluate on ``G(R, step)``; uncovered nodes are NaN."""
        xs, ys = grid_axes(R, step)
        vals = self.evaluate_many(grid_points(xs, ys))
        shape = (len(ys), len(xs)) if self._scalar else (len(ys), len(xs), self.value_dim)
        return GridField(xs, ys, vals.reshape(shape))


def shepard_weights(op: QuasiInterpolant, x) -> WeightVector:
    if op.degree != 0:
        raise ConfigError("shepard_weights needs a degree-0 operator")
    return op.weights(x)


def mls_weights(op: QuasiInterpolant, x) -> WeightVector:
    if op.degree < 1:
        raise ConfigError("mls_weights needs degree >= 1")
    return op.weights(x)


def evaluate(op: QuasiInterpolant, x):
    return op.evaluate(x)


def evaluate_grid(op: QuasiInterpolant, R: Domain, step: float) -> GridField:
    return op.evaluate_grid(R, step)


def shepard_weights_csr(sites: PointSet, query, delta: float):
    """Shepard coefficients for many queries: ``(indptr, indices, a)``.

    Empty neighborhoods give empty segments.
    """
    query = np.ascontiguousarray(np.asarray(query, dtype=float).reshape(-1, 2))
    indptr, indices = sites.neighbors(query, delta, workers=_backend.thread_count())
    counts = np.diff(indptr)
    owner = np.repeat(np.arange(len(query)), counts)
    d = (sites.sites[indices] - query[owner]) / delta
    w = WENDLAND_31(np.sqrt(d[:, 0] ** 2 + d[:, 1] ** 2))
    wsum = np.zeros(len(query))
    np.add.at(wsum, owner, w)
    with np.errstate(invalid="ignore", divide="ignore"):
        a = w / wsum[owner]
    return indptr, indices, a
