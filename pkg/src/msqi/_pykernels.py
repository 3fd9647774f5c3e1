"""Pure NumPy evaluation kernels (fallback when the compiled core is absent).

Both kernels take neighbor lists in CSR form, as produced by
:meth:`msqi.pointset.PointSet.neighbors`, and return ``(out, status)`` where
``status`` is 0 (ok), 1 (empty neighborhood) or 2 (non-unisolvent).  Each
query's result depends only on its own CSR segment, so evaluating one point
or a whole grid gives bitwise-identical values.
"""
import numpy as np

OK, EMPTY, NON_UNISOLVENT = 0, 1, 2


def monomial_exponents(degree):
    """Exponent pairs of the 2-D monomials of total degree <= ``degree``,
    ordered 1, x, y, x^2, xy, y^2, ..."""
    return [(t - ey, ey) for t in range(degree + 1) for ey in range(t + 1)]


def _phi(r):
    inside = r < 1.0
    t = np.where(inside, 1.0 - r, 0.0)
    return np.where(inside, t * t * t * t * (4.0 * r + 1.0), 0.0)


def _scaled_offsets(query, sites, indptr, indices, delta):
    counts = np.diff(indptr)
    owner = np.repeat(np.arange(len(query)), counts)
    dx = (sites[indices, 0] - query[owner, 0]) / delta
    dy = (sites[indices, 1] - query[owner, 1]) / delta
    return counts, dx, dy


def shepard_eval(query, sites, values, indptr, indices, delta, threads=1):
    M, c = len(query), values.shape[1]
    out = np.full((M, c), np.nan)
    status = np.full(M, EMPTY, dtype=np.int8)
    counts, dx, dy = _scaled_offsets(query, sites, indptr, indices, delta)
    if len(indices) == 0:
        return out, status
    w = _phi(np.sqrt(dx * dx + dy * dy))
    nonempty = counts > 0
    starts = indptr[:-1][nonempty]
    wsum = np.add.reduceat(w, starts)
    num = np.add.reduceat(w[:, None] * values[indices], starts, axis=0)
    good = wsum > 0
    rows = np.flatnonzero(nonempty)[good]
    out[rows] = num[good] / wsum[good][:, None]
    status[rows] = OK
    return out, status


def mls_point_weights(dx, dy, degree, cap):
    """MLS coefficients for one query from scaled offsets ``(x_i - x)/delta``.

    Returns ``(a, status, cond)``.  The basis is centred at the query, so the
    right-hand side of the Gram system is the first unit vector.
    """
    w = _phi(np.sqrt(dx * dx + dy * dy))
    if not np.any(w > 0):
        return None, EMPTY, np.inf
    exps = monomial_exponents(degree)
    P = np.column_stack([dx ** ex * dy ** ey for ex, ey in exps])
    G = P.T @ (w[:, None] * P)
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        return None, NON_UNISOLVENT, np.inf
    Linv = np.linalg.inv(L)
    Ginv = Linv.T @ Linv
    cond = np.abs(G).sum(axis=0).max() * np.abs(Ginv).sum(axis=0).max()
    if not np.isfinite(cond) or cond > cap:
        return None, NON_UNISOLVENT, cond
    lam = Ginv[:, 0]
    return w * (P @ lam), OK, cond


def mls_eval(query, sites, values, indptr, indices, delta, degree, cap, threads=1):
    M, c = len(query), values.shape[1]
    out = np.full((M, c), np.nan)
    status = np.full(M, EMPTY, dtype=np.int8)
    cond = np.full(M, np.inf)
    counts, dx, dy = _scaled_offsets(query, sites, indptr, indices, delta)
    for k in range(M):
        lo, hi = indptr[k], indptr[k + 1]
        if hi == lo:
            continue
        a, st, cond[k] = mls_point_weights(dx[lo:hi], dy[lo:hi], degree, cap)
        status[k] = st
        if st == OK:
            out[k] = a @ values[indices[lo:hi]]
    return out, status, cond
