# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled knot store for lazily refined Brownian paths.

Mirrors :mod:`mvsde.randomness._knots_py` operation for operation, so both
backends produce bit-identical knot maps for the same normal streams.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs
from libc.stdlib cimport malloc, realloc, free
from libc.string cimport memmove, memcpy

cnp.import_array()


cdef class KnotStore:
    """Per-path sorted knot maps ``t -> W(t)`` with ``dim`` channels each.

    ``refill(i)`` must return a 1-D float64 array of exactly ``block``
    standard normals, the next chunk of path ``i``'s stream.
    """

    cdef readonly Py_ssize_t n_paths
    cdef readonly Py_ssize_t dim
    cdef Py_ssize_t block
    cdef double tol
    cdef object refill
    cdef double** times
    cdef double** vals
    cdef Py_ssize_t* count
    cdef Py_ssize_t* cap
    cdef double[:, ::1] nbuf
    cdef Py_ssize_t* npos

    def __cinit__(self, Py_ssize_t n_paths, Py_ssize_t dim, double horizon,
                  object refill, Py_ssize_t block=256):
        cdef Py_ssize_t i, c
        if n_paths < 1 or dim < 1:
            raise ValueError("need at least one path and one channel")
        if block < dim or block % dim != 0:
            raise ValueError("block must be a positive multiple of dim")
        self.n_paths = n_paths
        self.dim = dim
        self.block = block
        self.tol = 1e-12 * horizon
        self.refill = refill
        self.times = <double**>malloc(n_paths * sizeof(double*))
        self.vals = <double**>malloc(n_paths * sizeof(double*))
        self.count = <Py_ssize_t*>malloc(n_paths * sizeof(Py_ssize_t))
        self.cap = <Py_ssize_t*>malloc(n_paths * sizeof(Py_ssize_t))
        self.npos = <Py_ssize_t*>malloc(n_paths * sizeof(Py_ssize_t))
        if (self.times == NULL or self.vals == NULL or self.count == NULL
                or self.cap == NULL or self.npos == NULL):
            raise MemoryError()
        for i in range(n_paths):
            self.times[i] = NULL
            self.vals[i] = NULL
        for i in range(n_paths):
            self.cap[i] = 16
            self.count[i] = 1
            self.npos[i] = block
            self.times[i] = <double*>malloc(16 * sizeof(double))
            self.vals[i] = <double*>malloc(16 * dim * sizeof(double))
            if self.times[i] == NULL or self.vals[i] == NULL:
                raise MemoryError()
            self.times[i][0] = 0.0
            for c in range(dim):
                self.vals[i][c] = 0.0
        self.nbuf = np.empty((n_paths, block), dtype=np.float64)

    def __dealloc__(self):
        cdef Py_ssize_t i
        if self.times != NULL:
            for i in range(self.n_paths):
                free(self.times[i])
            free(self.times)
        if self.vals != NULL:
            for i in range(self.n_paths):
                free(self.vals[i])
            free(self.vals)
        free(self.count)
        free(self.cap)
        free(self.npos)

    cdef double _normal(self, Py_ssize_t i) except? -1e308:
        cdef Py_ssize_t p = self.npos[i]
        cdef double[::1] chunk
        if p >= self.block:
            chunk = np.ascontiguousarray(self.refill(i), dtype=np.float64)
            if chunk.shape[0] != self.block:
                raise ValueError("refill returned the wrong number of normals")
            self.nbuf[i, :] = chunk
            p = 0
        self.npos[i] = p + 1
        return self.nbuf[i, p]

    cdef int _grow(self, Py_ssize_t i) except -1:
        cdef Py_ssize_t newcap = 2 * self.cap[i]
        cdef double* nt = <double*>realloc(self.times[i], newcap * sizeof(double))
        if nt == NULL:
            raise MemoryError()
        self.times[i] = nt
        cdef double* nv = <double*>realloc(self.vals[i], newcap * self.dim * sizeof(double))
        if nv == NULL:
            raise MemoryError()
        self.vals[i] = nv
        self.cap[i] = newcap
        return 0

    cdef int _query(self, Py_ssize_t i, double s, double* out) except -1:
        cdef double* ts = self.times[i]
        cdef double* vs
        cdef Py_ssize_t n = self.count[i]
        cdef Py_ssize_t d = self.dim
        cdef Py_ssize_t lo, hi, mid, pos, c
        cdef double t1, t2, frac, sd, z, w1, w2

        # first index with ts[idx] > s
        lo = 0
        hi = n
        while lo < hi:
            mid = (lo + hi) >> 1
            if ts[mid] <= s:
                lo = mid + 1
            else:
                hi = mid
        pos = lo
        # reuse a knot within tolerance (left neighbour first)
        if pos > 0 and s - ts[pos - 1] <= self.tol:
            memcpy(out, self.vals[i] + (pos - 1) * d, d * sizeof(double))
            return 0
        if pos < n and ts[pos] - s <= self.tol:
            memcpy(out, self.vals[i] + pos * d, d * sizeof(double))
            return 0

        if self.count[i] == self.cap[i]:
            self._grow(i)
        ts = self.times[i]
        vs = self.vals[i]

        if pos == n:
            t1 = ts[n - 1]
            sd = sqrt(s - t1)
            for c in range(d):
                z = self._normal(i)
                out[c] = vs[(n - 1) * d + c] + sd * z
        else:
            t1 = ts[pos - 1]
            t2 = ts[pos]
            frac = (s - t1) / (t2 - t1)
            sd = sqrt((t2 - s) * frac)
            for c in range(d):
                z = self._normal(i)
                w1 = vs[(pos - 1) * d + c]
                w2 = vs[pos * d + c]
                out[c] = w1 + frac * (w2 - w1) + sd * z
            memmove(ts + pos + 1, ts + pos, (n - pos) * sizeof(double))
            memmove(vs + (pos + 1) * d, vs + pos * d, (n - pos) * d * sizeof(double))
        ts[pos] = s
        memcpy(vs + pos * d, out, d * sizeof(double))
        self.count[i] = n + 1
        return 0

    def sample(self, idx, t):
        """Return ``W_idx[j](t[j])`` for each query j, in order, shape (m, dim)."""
        cdef const cnp.int64_t[::1] ii = np.ascontiguousarray(idx, dtype=np.int64).reshape(-1)
        cdef const double[::1] tt = np.ascontiguousarray(t, dtype=np.float64).reshape(-1)
        cdef Py_ssize_t m = ii.shape[0]
        cdef Py_ssize_t j, p
        if tt.shape[0] != m:
            raise ValueError("idx and t must have the same length")
        out = np.empty((m, self.dim), dtype=np.float64)
        cdef double[:, ::1] ov = out
        for j in range(m):
            p = ii[j]
            if p < 0 or p >= self.n_paths:
                raise IndexError("path index out of range")
            if not (tt[j] >= 0.0) or tt[j] != tt[j] or tt[j] - tt[j] != 0.0:
                raise ValueError("query time must be finite and >= 0")
            self._query(p, tt[j], &ov[j, 0])
        return out

    def knot_count(self, Py_ssize_t i):
        return self.count[i]

    def knots(self, Py_ssize_t i):
        """Copy of path ``i``'s knot times and values."""
        cdef Py_ssize_t n = self.count[i]
        ts = np.empty(n, dtype=np.float64)
        vs = np.empty((n, self.dim), dtype=np.float64)
        cdef double[::1] tv = ts
        cdef double[:, ::1] vv = vs
        if n:
            memcpy(&tv[0], self.times[i], n * sizeof(double))
            memcpy(&vv[0, 0], self.vals[i], n * self.dim * sizeof(double))
        return ts, vs
