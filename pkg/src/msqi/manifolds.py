"""Riemannian toolbox for manifold-valued approximation.

Three instances share one contract: :class:`Euclidean`, :class:`SO3` (3x3
rotation matrices, bi-invariant metric, distance = rotation angle) and
:class:`SPD` (symmetric positive definite matrices, affine-invariant metric,
Frobenius norm).  Every method is vectorised over leading batch axes.

Tangent vectors are stored in ambient form: ``p @ Omega`` with skew
``Omega`` for SO(3), symmetric matrices for SPD, plain vectors for R^d.
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, CutLocus, NonConvergence, NumericalError

REPAIR_TOL = 1e-12
DRIFT_TOL = 1e-8
CUT_LOCUS_MARGIN = 1e-6


@dataclass(frozen=True)
class KarcherConfig:
    tol: float = 1e-10
    max_iter: int = 100

    def __post_init__(self):
        if not (self.tol > 0):
            raise ConfigError(f"Karcher tolerance must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ConfigError(f"max_iter must be >= 1, got {self.max_iter}")


# -- small matrix helpers ---------------------------------------------------

def hat(w):
    """Skew matrix of the 3-vector(s) ``w``."""
    w = np.asarray(w, dtype=float)
    K = np.zeros(w.shape[:-1] + (3, 3))
    K[..., 0, 1], K[..., 0, 2] = -w[..., 2], w[..., 1]
    K[..., 1, 0], K[..., 1, 2] = w[..., 2], -w[..., 0]
    K[..., 2, 0], K[..., 2, 1] = -w[..., 1], w[..., 0]
    return K


def vee(K):
    K = np.asarray(K, dtype=float)
    return np.stack([K[..., 2, 1], K[..., 0, 2], K[..., 1, 0]], axis=-1)


def _mT(A):
    return np.swapaxes(A, -1, -2)


def rodrigues(w):
    """``expm(hat(w))`` in closed form."""
    w = np.asarray(w, dtype=float)
    th2 = np.einsum("...i,...i->...", w, w)
    th = np.sqrt(th2)
    small = th < 1e-4
    ths = np.where(small, 1.0, th)
    A = np.where(small, 1.0 - th2 / 6.0 + th2 * th2 / 120.0, np.sin(ths) / ths)
    B = np.where(small, 0.5 - th2 / 24.0 + th2 * th2 / 720.0, (1.0 - np.cos(ths)) / (ths * ths))
    K = hat(w)
    return np.eye(3) + A[..., None, None] * K + B[..., None, None] * (K @ K)


def rotation_log_vec(M, margin: float = CUT_LOCUS_MARGIN):
    """Axis-angle vector of rotation(s) ``M``; raises :class:`CutLocus` near pi."""
    M = np.asarray(M, dtype=float)
    s = 0.5 * vee(M - _mT(M))
    c = 0.5 * (np.trace(M, axis1=-2, axis2=-1) - 1.0)
    sn = np.linalg.norm(s, axis=-1)
    th = np.arctan2(sn, c)
    if margin is not None and np.any(th > math.pi - margin):
        worst = float(np.max(th))
        raise CutLocus(f"rotation angle {worst:.9f} within {margin:g} of pi; log undefined")
    small = sn < 1e-8
    factor = np.where(small, 1.0 + th * th / 6.0, th / np.where(small, 1.0, sn))
    return factor[..., None] * s


def rotation_angle(M):
    M = np.asarray(M, dtype=float)
    sn = np.linalg.norm(0.5 * vee(M - _mT(M)), axis=-1)
    c = 0.5 * (np.trace(M, axis1=-2, axis2=-1) - 1.0)
    return np.arctan2(sn, c)


def _eigfun(X, fun):
    w, U = np.linalg.eigh(X)
    return (U * fun(w)[..., None, :]) @ _mT(U)


def sym(M):
    return 0.5 * (M + _mT(M))


# -- the contract -----------------------------------------------------------

class Manifold(ABC):
    """Operations every manifold instance provides (batched)."""

    name: str = "manifold"
    point_shape: tuple = ()
    is_flat = False

    @abstractmethod
    def exp(self, p, v): ...

    @abstractmethod
    def log(self, p, q): ...

    @abstractmethod
    def dist(self, p, q): ...

    @abstractmethod
    def transport(self, p, q, v): ...

    @abstractmethod
    def norm(self, p, v): ...

    @abstractmethod
    def check_point(self, p, tol: float = 1e-10) -> None: ...

    @abstractmethod
    def check_tangent(self, p, v, tol: float = 1e-10) -> None: ...

    def zero_tangent(self, p):
        return np.zeros_like(np.asarray(p, dtype=float))

    def linear_mean(self, points, weights):
        """Weighted arithmetic mean in the ambient space (batched)."""
        w = np.asarray(weights, dtype=float)
        extra = (None,) * len(self.point_shape)
        return (w[(...,) + extra] * points).sum(axis=-1 - len(self.point_shape))

    def karcher_batch(self, points, weights, init, cfg: KarcherConfig):
        """Fixed-point iteration ``Y <- exp(Y, sum a_i log(Y, p_i) / sum a_i)``.

        ``points`` has shape ``(M, K) + point_shape``, ``weights`` ``(M, K)``
        (zero weights mark padding), ``init`` ``(M,) + point_shape``.
        """
        Y = np.array(init, dtype=float)
        a = np.asarray(weights, dtype=float)
        asum = a.sum(axis=1)
        extra = (None,) * len(self.point_shape)
        active = np.ones(len(Y), dtype=bool)
        last = np.full(len(Y), np.inf)
        for _ in range(cfg.max_iter):
            idx = np.flatnonzero(active)
            if len(idx) == 0:
                return Y
            Ya = Y[idx]
            logs = self.log(Ya[:, None], points[idx])
            step = (a[idx][(...,) + extra] * logs).sum(axis=1) / asum[idx][(...,) + extra]
            Ynew = self.exp(Ya, step)
            d = self.dist(Ynew, Ya)
            Y[idx] = Ynew
            last[idx] = d
            active[idx[d < cfg.tol]] = False
        if active.any():
            raise NonConvergence(f"Karcher iteration on {self.name} did not converge in "
                                 f"{cfg.max_iter} steps", float(last[active].max()))
        return Y

    def karcher_residual(self, Y, points, weights):
        """Tangent norm of ``sum a_i log(Y, p_i)``."""
        logs = self.log(np.asarray(Y)[None], np.asarray(points))
        extra = (None,) * len(self.point_shape)
        g = (np.asarray(weights, dtype=float)[(...,) + extra] * logs).sum(axis=0)
        return float(self.norm(Y, g))


class Euclidean(Manifold):
    """R^d with the usual inner product."""

    is_flat = True

    def __init__(self, dim: int):
        self.dim = int(dim)
        self.point_shape = (self.dim,)
        self.name = f"R^{self.dim}"

    def exp(self, p, v):
        return np.asarray(p, dtype=float) + v

    def log(self, p, q):
        return np.asarray(q, dtype=float) - p

    def dist(self, p, q):
        return np.linalg.norm(np.asarray(q, dtype=float) - p, axis=-1)

    def transport(self, p, q, v):
        return np.array(v, dtype=float)

    def norm(self, p, v):
        return np.linalg.norm(v, axis=-1)

    def check_point(self, p, tol=1e-10):
        p = np.asarray(p)
        if p.shape[-1] != self.dim or not np.all(np.isfinite(p)):
            raise ConfigError(f"not a point of {self.name}")

    def check_tangent(self, p, v, tol=1e-10):
        self.check_point(v)

    def karcher_batch(self, points, weights, init, cfg):
        a = np.asarray(weights, dtype=float)
        return (a[..., None] * points).sum(axis=1) / a.sum(axis=1)[:, None]


class SO3(Manifold):
    """Rotations with the bi-invariant metric; ``dist`` is the rotation angle."""

    name = "SO(3)"
    point_shape = (3, 3)

    def exp(self, p, v):
        p = np.asarray(p, dtype=float)
        return p @ rodrigues(vee(_mT(p) @ v))

    def log(self, p, q):
        p = np.asarray(p, dtype=float)
        return p @ hat(rotation_log_vec(_mT(p) @ q))

    def dist(self, p, q):
        return rotation_angle(_mT(np.asarray(p, dtype=float)) @ q)

    def transport(self, p, q, v):
        # left translation: body-frame coordinate p^T v is kept
        return np.asarray(q, dtype=float) @ (_mT(np.asarray(p, dtype=float)) @ v)

    def norm(self, p, v):
        return np.linalg.norm(np.asarray(v, dtype=float), axis=(-2, -1)) / math.sqrt(2.0)

    def check_point(self, p, tol=1e-10):
        p = np.asarray(p, dtype=float)
        if p.shape[-2:] != (3, 3):
            raise ConfigError("rotation must be 3x3")
        orth = np.abs(_mT(p) @ p - np.eye(3)).max()
        det = np.abs(np.linalg.det(p) - 1.0).max()
        if not (orth <= tol and det <= tol):
            raise ConfigError(f"not a rotation (orthogonality drift {orth:.2e}, det drift {det:.2e})")

    def check_tangent(self, p, v, tol=1e-10):
        body = _mT(np.asarray(p, dtype=float)) @ v
        if np.abs(body + _mT(body)).max() > tol:
            raise ConfigError("tangent vector is not p @ skew")

    def project(self, R):
        """Re-orthonormalise small drift; larger drift is an error."""
        R = np.asarray(R, dtype=float)
        drift = np.abs(_mT(R) @ R - np.eye(3)).max(axis=(-2, -1))
        if np.any(drift > DRIFT_TOL):
            raise NumericalError(f"rotation drifted by {float(drift.max()):.2e}")
        fix = drift > REPAIR_TOL
        if np.any(fix):
            U, _, Vt = np.linalg.svd(R[fix])
            R = R.copy()
            R[fix] = U @ Vt
        return R

    def karcher_batch(self, points, weights, init, cfg):
        a = np.asarray(weights, dtype=float)
        a = a / a.sum(axis=1, keepdims=True)
        Y = np.array(init, dtype=float)
        active = np.ones(len(Y), dtype=bool)
        last = np.full(len(Y), np.inf)
        for _ in range(cfg.max_iter):
            idx = np.flatnonzero(active)
            if len(idx) == 0:
                break
            Ya = Y[idx]
            body = rotation_log_vec(_mT(Ya)[:, None] @ points[idx])
            step = np.einsum("mk,mki->mi", a[idx], body)
            Ynew = self.project(Ya @ rodrigues(step))
            d = rotation_angle(_mT(Ya) @ Ynew)
            Y[idx] = Ynew
            last[idx] = d
            active[idx[d < cfg.tol]] = False
        if active.any():
            raise NonConvergence(f"SO(3) Karcher iteration did not converge in {cfg.max_iter} steps",
                                 float(last[active].max()))
        return Y


class SPD(Manifold):
    """Symmetric positive definite matrices, affine-invariant metric."""

    name = "SPD(3)"

    def __init__(self, n: int = 3):
        self.n = n
        self.point_shape = (n, n)
        self.name = f"SPD({n})"

    @staticmethod
    def _halves(X):
        w, U = np.linalg.eigh(X)
        if np.any(w <= 0):
            raise ConfigError("matrix is not positive definite")
        s = np.sqrt(w)
        Xh = (U * s[..., None, :]) @ _mT(U)
        Xih = (U * (1.0 / s)[..., None, :]) @ _mT(U)
        return Xh, Xih

    def exp(self, p, v):
        Xh, Xih = self._halves(np.asarray(p, dtype=float))
        return sym(Xh @ _eigfun(sym(Xih @ v @ Xih), np.exp) @ Xh)

    def log(self, p, q):
        Xh, Xih = self._halves(np.asarray(p, dtype=float))
        inner = sym(Xih @ q @ Xih)
        w = np.linalg.eigvalsh(inner)
        if np.any(w <= 0):
            raise ConfigError("matrix is not positive definite")
        return sym(Xh @ _eigfun(inner, np.log) @ Xh)

    def dist(self, p, q):
        _, Xih = self._halves(np.asarray(p, dtype=float))
        w = np.linalg.eigvalsh(sym(Xih @ q @ Xih))
        if np.any(w <= 0):
            raise ConfigError("matrix is not positive definite")
        return np.sqrt((np.log(w) ** 2).sum(axis=-1))

    def transport(self, p, q, v):
        Xh, Xih = self._halves(np.asarray(p, dtype=float))
        E = Xh @ _eigfun(sym(Xih @ q @ Xih), np.sqrt) @ Xih
        return sym(E @ v @ _mT(E))

    def norm(self, p, v):
        _, Xih = self._halves(np.asarray(p, dtype=float))
        return np.linalg.norm(Xih @ v @ Xih, axis=(-2, -1))

    def check_point(self, p, tol=1e-10):
        p = np.asarray(p, dtype=float)
        scale = max(1.0, float(np.abs(p).max()))
        if np.abs(p - _mT(p)).max() > tol * scale:
            raise ConfigError("matrix is not symmetric")
        if np.any(np.linalg.eigvalsh(sym(p)) <= 0):
            raise ConfigError("matrix is not positive definite")

    def check_tangent(self, p, v, tol=1e-10):
        v = np.asarray(v, dtype=float)
        scale = max(1.0, float(np.abs(v).max()))
        if np.abs(v - _mT(v)).max() > tol * scale:
            raise ConfigError("SPD tangent vector must be symmetric")

    def iannazzo_batch(self, points, weights, init, cfg):
        """Karcher mean with the condition-number step size of Bini and Iannazzo.

        ``theta = 2 / sum a_i (c_i + 1)/(c_i - 1) log c_i`` where ``c_i`` is the
        condition number of ``Y^{-1/2} P_i Y^{-1/2}``; terms with ``c_i = 1``
        take their limit value 2.
        """
        a = np.asarray(weights, dtype=float)
        a = a / a.sum(axis=1, keepdims=True)
        Y = np.array(init, dtype=float)
        active = np.ones(len(Y), dtype=bool)
        last = np.full(len(Y), np.inf)
        for _ in range(cfg.max_iter):
            idx = np.flatnonzero(active)
            if len(idx) == 0:
                break
            Yh, Yih = self._halves(Y[idx])
            inner = sym(Yih[:, None] @ points[idx] @ Yih[:, None])
            w, U = np.linalg.eigh(inner)
            if np.any(w <= 0):
                raise ConfigError("matrix is not positive definite")
            L = (U * np.log(w)[..., None, :]) @ _mT(U)
            c = w[..., -1] / w[..., 0]
            cm1 = c - 1.0
            near = cm1 < 1e-12
            g = np.where(near, 2.0, (c + 1.0) * np.log(c) / np.where(near, 1.0, cm1))
            theta = 2.0 / np.einsum("mk,mk->m", a[idx], g)
            W = theta[:, None, None] * np.einsum("mk,mkij->mij", a[idx], L)
            Ynew = sym(Yh @ _eigfun(sym(W), np.exp) @ Yh)
            d = np.linalg.norm(W, axis=(-2, -1))
            Y[idx] = Ynew
            last[idx] = d
            active[idx[d < cfg.tol]] = False
        if active.any():
            raise NonConvergence(f"SPD Karcher iteration did not converge in {cfg.max_iter} steps",
                                 float(last[active].max()))
        return Y


SO3_MANIFOLD = SO3()
SPD3_MANIFOLD = SPD(3)

MANIFOLDS = {"so3": SO3_MANIFOLD, "spd3": SPD3_MANIFOLD}


# -- module-level operations --------------------------------------------------

def so3_exp(p, v):
    SO3_MANIFOLD.check_point(p)
    SO3_MANIFOLD.check_tangent(p, v)
    return SO3_MANIFOLD.project(SO3_MANIFOLD.exp(p, v))


def so3_log(p, q):
    SO3_MANIFOLD.check_point(p)
    SO3_MANIFOLD.check_point(q)
    return SO3_MANIFOLD.log(p, q)


def so3_dist(p, q):
    return SO3_MANIFOLD.dist(p, q)


def so3_transport(p, q, v):
    return SO3_MANIFOLD.transport(p, q, v)


def spd_exp(X, v):
    SPD3_MANIFOLD.check_point(X)
    SPD3_MANIFOLD.check_tangent(X, v)
    return SPD3_MANIFOLD.exp(X, v)


def spd_log(X, Y):
    SPD3_MANIFOLD.check_point(X)
    SPD3_MANIFOLD.check_point(Y)
    return SPD3_MANIFOLD.log(X, Y)


def spd_dist(X, Y):
    SPD3_MANIFOLD.check_point(X)
    SPD3_MANIFOLD.check_point(Y)
    return SPD3_MANIFOLD.dist(X, Y)


def spd_transport(X, Y, v):
    SPD3_MANIFOLD.check_point(X)
    SPD3_MANIFOLD.check_point(Y)
    SPD3_MANIFOLD.check_tangent(X, v)
    return SPD3_MANIFOLD.transport(X, Y, v)


def euler_xyz(a, b, c):
    """``R_x(a) @ R_y(b) @ R_z(c)``; broadcasts over array arguments."""
    a, b, c = np.broadcast_arrays(*(np.asarray(t, dtype=float) for t in (a, b, c)))
    ca, sa, cb, sb, cc, sc = np.cos(a), np.sin(a), np.cos(b), np.sin(b), np.cos(c), np.sin(c)
    one, zero = np.ones_like(a), np.zeros_like(a)
    Rx = np.stack([one, zero, zero, zero, ca, -sa, zero, sa, ca], -1).reshape(a.shape + (3, 3))
    Ry = np.stack([cb, zero, sb, zero, one, zero, -sb, zero, cb], -1).reshape(a.shape + (3, 3))
    Rz = np.stack([cc, -sc, zero, sc, cc, zero, zero, zero, one], -1).reshape(a.shape + (3, 3))
    return Rx @ Ry @ Rz


def _prep(manifold, points, weights):
    points = np.asarray(points, dtype=float)
    weights = np.asarray(weights, dtype=float).reshape(-1)
    if len(points) != len(weights) or len(points) == 0:
        raise ConfigError("need one weight per point and at least one point")
    if not np.isclose(weights.sum(), 1.0, rtol=0, atol=1e-10):
        raise ConfigError(f"weights must sum to 1, got {weights.sum()!r}")
    return points, weights


def karcher_mean(manifold: Manifold, points, weights, cfg: KarcherConfig = KarcherConfig(),
                 init=None):
    """Weighted Riemannian center of mass by undamped fixed-point iteration.

    ``init`` defaults to the first point.  Flat instances return the weighted
    arithmetic mean directly.
    """
    points, weights = _prep(manifold, points, weights)
    if manifold.is_flat:
        return (weights[:, None] * points).sum(axis=0) / weights.sum()
    Y0 = points[0] if init is None else np.asarray(init, dtype=float)
    return Manifold.karcher_batch(manifold, points[None], weights[None], Y0[None].copy(), cfg)[0]


def karcher_mean_spd(points, weights, cfg: KarcherConfig = KarcherConfig()):
    """SPD Karcher mean with Iannazzo step sizes, started at the arithmetic mean."""
    points, weights = _prep(SPD3_MANIFOLD, points, weights)
    if np.any(weights < 0):
        raise ConfigError("SPD Karcher mean needs non-negative weights")
    for P in points:
        SPD3_MANIFOLD.check_point(P)
    Y0 = (weights[:, None, None] * points).sum(axis=0)
    return SPD3_MANIFOLD.iannazzo_batch(points[None], weights[None], Y0[None], cfg)[0]
