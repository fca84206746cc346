"""Pure-Python knot store, the fallback for the compiled ``_knots`` kernel.

Same algorithm and floating-point expression order as the Cython version, so
the two agree bit for bit given the same normal streams.
"""

from __future__ import annotations

import math
from bisect import bisect_right

import numpy as np


class KnotStore:
    """Per-path sorted knot maps ``t -> W(t)`` with ``dim`` channels each."""

    def __init__(self, n_paths, dim, horizon, refill, block=256):
        if n_paths < 1 or dim < 1:
            raise ValueError("need at least one path and one channel")
        if block < dim or block % dim != 0:
            raise ValueError("block must be a positive multiple of dim")
        self.n_paths = int(n_paths)
        self.dim = int(dim)
        self._block = int(block)
        self._tol = 1e-12 * horizon
        self._refill = refill
        self._times = [[0.0] for _ in range(self.n_paths)]
        self._vals = [[[0.0] * self.dim] for _ in range(self.n_paths)]
        self._buf = [None] * self.n_paths
        self._pos = [self._block] * self.n_paths

    def _normal(self, i):
        p = self._pos[i]
        if p >= self._block:
            chunk = np.ascontiguousarray(self._refill(i), dtype=np.float64)
            if chunk.shape[0] != self._block:
                raise ValueError("refill returned the wrong number of normals")
            self._buf[i] = chunk.tolist()
            p = 0
        self._pos[i] = p + 1
        return self._buf[i][p]

    def _query(self, i, s):
        ts = self._times[i]
        vs = self._vals[i]
        pos = bisect_right(ts, s)
        if pos > 0 and s - ts[pos - 1] <= self._tol:
            return list(vs[pos - 1])
        n = len(ts)
        if pos < n and ts[pos] - s <= self._tol:
            return list(vs[pos])
        if pos == n:
            sd = math.sqrt(s - ts[n - 1])
            last = vs[n - 1]
            out = [last[c] + sd * self._normal(i) for c in range(self.dim)]
        else:
            t1 = ts[pos - 1]
            t2 = ts[pos]
            frac = (s - t1) / (t2 - t1)
            sd = math.sqrt((t2 - s) * frac)
            left, right = vs[pos - 1], vs[pos]
            out = []
            for c in range(self.dim):
                z = self._normal(i)
                w1 = left[c]
                out.append(w1 + frac * (right[c] - w1) + sd * z)
        ts.insert(pos, s)
        vs.insert(pos, list(out))
        return out

    def sample(self, idx, t):
        ii = np.asarray(idx, dtype=np.int64).reshape(-1)
        tt = np.asarray(t, dtype=np.float64).reshape(-1)
        if tt.shape[0] != ii.shape[0]:
            raise ValueError("idx and t must have the same length")
        out = np.empty((ii.shape[0], self.dim), dtype=np.float64)
        for j, (p, s) in enumerate(zip(ii.tolist(), tt.tolist())):
            if p < 0 or p >= self.n_paths:
                raise IndexError("path index out of range")
            if not (s >= 0.0) or not math.isfinite(s):
                raise ValueError("query time must be finite and >= 0")
            out[j] = self._query(p, s)
        return out

    def knot_count(self, i):
        return len(self._times[i])

    def knots(self, i):
        return (np.array(self._times[i], dtype=np.float64),
                np.array(self._vals[i], dtype=np.float64).reshape(-1, self.dim))
