# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled evaluation kernels; same contract as ``msqi._pykernels``."""
import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport sqrt, fabs, floor, NAN, INFINITY

cnp.import_array()

DEF MAXQ = 15

cdef inline double _phi(double r) noexcept nogil:
    cdef double t
    if r >= 1.0:
        return 0.0
    t = 1.0 - r
    return t * t * t * t * (4.0 * r + 1.0)


cdef signed char _shepard_point(double qx, double qy, const double[:, ::1] sites,
                                const double[:, ::1] values, const Py_ssize_t[::1] indptr,
                                const Py_ssize_t[::1] indices, Py_ssize_t k, double delta,
                                double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t p, i, col
    cdef Py_ssize_t c = values.shape[1]
    cdef double dx, dy, w, wsum = 0.0, acc
    for p in range(indptr[k], indptr[k + 1]):
        i = indices[p]
        dx = (sites[i, 0] - qx) / delta
        dy = (sites[i, 1] - qy) / delta
        wsum = wsum + _phi(sqrt(dx * dx + dy * dy))
    if wsum <= 0.0:
        for col in range(c):
            out[k, col] = NAN
        return 1
    for col in range(c):
        acc = 0.0
        for p in range(indptr[k], indptr[k + 1]):
            i = indices[p]
            dx = (sites[i, 0] - qx) / delta
            dy = (sites[i, 1] - qy) / delta
            w = _phi(sqrt(dx * dx + dy * dy))
            acc = acc + w * values[i, col]
        out[k, col] = acc / wsum
    return 0


def shepard_eval(const double[:, ::1] query, const double[:, ::1] sites,
                 const double[:, ::1] values, const Py_ssize_t[::1] indptr,
                 const Py_ssize_t[::1] indices, double delta, int threads=1):
    cdef Py_ssize_t M = query.shape[0]
    out_arr = np.empty((M, values.shape[1]), dtype=np.float64)
    status_arr = np.empty(M, dtype=np.int8)
    cdef double[:, ::1] out = out_arr
    cdef signed char[::1] status = status_arr
    cdef Py_ssize_t k
    if threads < 1:
        threads = 1
    for k in prange(M, nogil=True, num_threads=threads, schedule="static"):
        status[k] = _shepard_point(query[k, 0], query[k, 1], sites, values, indptr,
                                   indices, k, delta, out)
    return out_arr, status_arr


cdef inline void _monomials(double dx, double dy, int degree, double* p) noexcept nogil:
    cdef int t, ey, n = 0, e
    cdef double px[5]
    cdef double py[5]
    px[0] = 1.0
    py[0] = 1.0
    for e in range(1, degree + 1):
        px[e] = px[e - 1] * dx
        py[e] = py[e - 1] * dy
    for t in range(degree + 1):
        for ey in range(t + 1):
            p[n] = px[t - ey] * py[ey]
            n += 1


cdef signed char _mls_point(double qx, double qy, const double[:, ::1] sites,
                            const double[:, ::1] values, const Py_ssize_t[::1] indptr,
                            const Py_ssize_t[::1] indices, Py_ssize_t k, double delta,
                            int degree, double cap, double[:, ::1] out,
                            double* cond_out) noexcept nogil:
    cdef int Q = (degree + 1) * (degree + 2) // 2
    cdef double G[MAXQ * MAXQ]
    cdef double L[MAXQ * MAXQ]
    cdef double Gi[MAXQ * MAXQ]
    cdef double pv[MAXQ]
    cdef double lam[MAXQ]
    cdef double z[MAXQ]
    cdef Py_ssize_t p, i, col
    cdef Py_ssize_t c = values.shape[1]
    cdef int a, b, j, nw = 0
    cdef double dx, dy, w, s, n1, n2, acc, coef
    for a in range(Q * Q):
        G[a] = 0.0
    for p in range(indptr[k], indptr[k + 1]):
        i = indices[p]
        dx = (sites[i, 0] - qx) / delta
        dy = (sites[i, 1] - qy) / delta
        w = _phi(sqrt(dx * dx + dy * dy))
        if w > 0.0:
            nw += 1
        _monomials(dx, dy, degree, pv)
        for a in range(Q):
            for b in range(Q):
                G[a * Q + b] += pv[a] * w * pv[b]
    cond_out[0] = INFINITY
    if nw == 0:
        for col in range(c):
            out[k, col] = NAN
        return 1
    # Cholesky, lower triangular L with G = L L^T
    for a in range(Q):
        for b in range(a + 1):
            s = G[a * Q + b]
            for j in range(b):
                s -= L[a * Q + j] * L[b * Q + j]
            if a == b:
                if s <= 0.0:
                    for col in range(c):
                        out[k, col] = NAN
                    return 2
                L[a * Q + a] = sqrt(s)
            else:
                L[a * Q + b] = s / L[b * Q + b]
    # explicit inverse, one unit column at a time
    for b in range(Q):
        for a in range(Q):
            s = 1.0 if a == b else 0.0
            for j in range(a):
                s -= L[a * Q + j] * z[j]
            z[a] = s / L[a * Q + a]
        for a in range(Q - 1, -1, -1):
            s = z[a]
            for j in range(a + 1, Q):
                s -= L[j * Q + a] * Gi[j * Q + b]
            Gi[a * Q + b] = s / L[a * Q + a]
    n1 = 0.0
    n2 = 0.0
    for b in range(Q):
        s = 0.0
        acc = 0.0
        for a in range(Q):
            s += fabs(G[a * Q + b])
            acc += fabs(Gi[a * Q + b])
        if s > n1:
            n1 = s
        if acc > n2:
            n2 = acc
    cond_out[0] = n1 * n2
    if not (cond_out[0] <= cap):
        for col in range(c):
            out[k, col] = NAN
        return 2
    for a in range(Q):
        lam[a] = Gi[a * Q]
    for col in range(c):
        out[k, col] = 0.0
    for p in range(indptr[k], indptr[k + 1]):
        i = indices[p]
        dx = (sites[i, 0] - qx) / delta
        dy = (sites[i, 1] - qy) / delta
        w = _phi(sqrt(dx * dx + dy * dy))
        _monomials(dx, dy, degree, pv)
        coef = 0.0
        for a in range(Q):
            coef += lam[a] * pv[a]
        coef = coef * w
        for col in range(c):
            out[k, col] += coef * values[i, col]
    return 0


def mls_eval(const double[:, ::1] query, const double[:, ::1] sites,
             const double[:, ::1] values, const Py_ssize_t[::1] indptr,
             const Py_ssize_t[::1] indices, double delta, int degree, double cap,
             int threads=1):
    if degree < 0 or degree > 4:
        raise ValueError("compiled MLS supports degrees 0..4")
    cdef Py_ssize_t M = query.shape[0]
    out_arr = np.empty((M, values.shape[1]), dtype=np.float64)
    status_arr = np.empty(M, dtype=np.int8)
    cond_arr = np.empty(M, dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef signed char[::1] status = status_arr
    cdef double[::1] cond = cond_arr
    cdef Py_ssize_t k
    if threads < 1:
        threads = 1
    for k in prange(M, nogil=True, num_threads=threads, schedule="static"):
        status[k] = _mls_point(query[k, 0], query[k, 1], sites, values, indptr, indices,
                               k, delta, degree, cap, out, &cond[k])
    return out_arr, status_arr, cond_arr


# -- fixed-radius neighbour search ---------------------------------------------------

cdef inline Py_ssize_t _cell(double v, double lo, double size, Py_ssize_t n) noexcept nogil:
    cdef double t = floor((v - lo) / size)
    if t < 0.0:
        return 0
    if t > n - 1:
        return n - 1
    return <Py_ssize_t>t


cdef Py_ssize_t _scan(double qx, double qy, const double[:, ::1] sites, double r,
                      double x0, double y0, double size, Py_ssize_t nx, Py_ssize_t ny,
                      const Py_ssize_t[::1] start, const Py_ssize_t[::1] order,
                      Py_ssize_t* dest) noexcept nogil:
    """Count (dest == NULL) or write the indices of sites strictly within r of q."""
    cdef double fx = floor((qx - x0) / size), fy = floor((qy - y0) / size)
    cdef Py_ssize_t cx, cy, c, p, i, n = 0
    cdef double dx, dy
    if fx < -1.0 or fy < -1.0 or fx > nx or fy > ny:
        return 0
    for cy in range(<Py_ssize_t>fy - 1, <Py_ssize_t>fy + 2):
        if cy < 0 or cy >= ny:
            continue
        for cx in range(<Py_ssize_t>fx - 1, <Py_ssize_t>fx + 2):
            if cx < 0 or cx >= nx:
                continue
            c = cy * nx + cx
            for p in range(start[c], start[c + 1]):
                i = order[p]
                dx = sites[i, 0] - qx
                dy = sites[i, 1] - qy
                if sqrt(dx * dx + dy * dy) < r:
                    if dest != NULL:
                        dest[n] = i
                    n += 1
    return n


cdef void _sort_segment(Py_ssize_t* a, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j, v
    for i in range(1, n):
        v = a[i]
        j = i - 1
        while j >= 0 and a[j] > v:
            a[j + 1] = a[j]
            j -= 1
        a[j + 1] = v


def radius_csr(const double[:, ::1] query, const double[:, ::1] sites, double r, int threads=1):
    """Strict fixed-radius neighbour lists ``(indptr, indices)``, rows sorted ascending."""
    cdef Py_ssize_t M = query.shape[0], N = sites.shape[0], k, i, c
    # cells a hair wider than r so the 3x3 scan is complete despite rounding
    cdef double size = r * (1.0 + 1e-9)
    cdef double x0 = INFINITY, y0 = INFINITY, x1 = -INFINITY, y1 = -INFINITY
    for i in range(N):
        x0 = min(x0, sites[i, 0]); x1 = max(x1, sites[i, 0])
        y0 = min(y0, sites[i, 1]); y1 = max(y1, sites[i, 1])
    cdef Py_ssize_t nx = <Py_ssize_t>floor((x1 - x0) / size) + 1
    cdef Py_ssize_t ny = <Py_ssize_t>floor((y1 - y0) / size) + 1
    start_arr = np.zeros(nx * ny + 1, dtype=np.intp)
    order_arr = np.empty(N, dtype=np.intp)
    cell_arr = np.empty(N, dtype=np.intp)
    cdef Py_ssize_t[::1] start = start_arr, order = order_arr, cell = cell_arr
    for i in range(N):
        c = _cell(sites[i, 1], y0, size, ny) * nx + _cell(sites[i, 0], x0, size, nx)
        cell[i] = c
        start[c + 1] += 1
    for c in range(nx * ny):
        start[c + 1] += start[c]
    fill_arr = start_arr[:-1].copy()
    cdef Py_ssize_t[::1] fill = fill_arr
    for i in range(N):
        order[fill[cell[i]]] = i
        fill[cell[i]] += 1
    indptr_arr = np.zeros(M + 1, dtype=np.intp)
    cdef Py_ssize_t[::1] indptr = indptr_arr
    if threads < 1:
        threads = 1
    for k in prange(M, nogil=True, num_threads=threads, schedule="static"):
        indptr[k + 1] = _scan(query[k, 0], query[k, 1], sites, r, x0, y0, size, nx, ny,
                              start, order, NULL)
    for k in range(M):
        indptr[k + 1] += indptr[k]
    indices_arr = np.empty(indptr[M], dtype=np.intp)
    cdef Py_ssize_t[::1] indices = indices_arr
    cdef Py_ssize_t* base = &indices[0] if indptr[M] > 0 else NULL
    if base != NULL:
        for k in prange(M, nogil=True, num_threads=threads, schedule="static"):
            _scan(query[k, 0], query[k, 1], sites, r, x0, y0, size, nx, ny, start, order,
                  base + indptr[k])
            _sort_segment(base + indptr[k], indptr[k + 1] - indptr[k])
    return indptr_arr, indices_arr
