"""Lazily refined Brownian paths, one per particle.

Values are drawn on demand. A query past the last knot extends the path with
a forward increment; a query between two knots is drawn from the Brownian
bridge between them. Sampled values never change afterwards, so coupled
simulations on different (random) meshes see one consistent path.

The knot storage is the hot kernel; it is compiled with Cython when
available and falls back to a pure-Python store otherwise. Set
``MVSDE_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

import numpy as np

from ..errors import DomainError
from . import _knots_py
from .seeds import SeedSpec

try:
    from . import _knots as _knots_c
except ImportError:  # pragma: no cover - depends on the build
    _knots_c = None


def available_backends() -> list[str]:
    return (["cython"] if _knots_c is not None else []) + ["python"]


def default_backend() -> str:
    if os.environ.get("MVSDE_PURE_PYTHON", "") not in ("", "0") or _knots_c is None:
        return "python"
    return "cython"


def _store_class(backend):
    if backend == "cython":
        if _knots_c is None:
            raise DomainError("compiled kernel not built; use backend='python'")
        return _knots_c.KnotStore
    if backend == "python":
        return _knots_py.KnotStore
    raise DomainError(f"unknown backend {backend!r}")


class BrownianPaths:
    """``n_paths`` independent ``dim``-channel Brownian paths on ``[0, inf)``.

    Path ``j`` of this object is driven by the stream of particle
    ``offset + j``, so a system of ``n`` particles and a system of ``2n``
    built from the same seed share their first ``n`` paths.
    """

    def __init__(self, seed: SeedSpec, n_paths: int, dim: int, horizon: float = 1.0,
                 offset: int = 0, backend: str | None = None, block: int = 256):
        if horizon <= 0:
            raise DomainError("horizon must be positive")
        self.seed = seed
        self.n_paths = int(n_paths)
        self.dim = int(dim)
        self.horizon = float(horizon)
        self.offset = int(offset)
        self.backend = backend or default_backend()
        self._block = block * self.dim
        self._gens: dict[int, np.random.Generator] = {}
        self._store = _store_class(self.backend)(
            self.n_paths, self.dim, self.horizon, self._refill, self._block
        )

    def _refill(self, i):
        gen = self._gens.get(i)
        if gen is None:
            gen = self._gens[i] = self.seed.path_generator(self.offset + i)
        return gen.standard_normal(self._block)

    def sample(self, idx, t) -> np.ndarray:
        """Batched ``W_idx[j](t[j])``, shape ``(m, dim)``; queries are applied in order."""
        idx = np.asarray(idx, dtype=np.int64).reshape(-1)
        t = np.asarray(t, dtype=np.float64)
        t = np.broadcast_to(t, idx.shape) if t.ndim == 0 else t.reshape(-1)
        if t.size and (not np.all(np.isfinite(t)) or t.min() < 0):
            raise DomainError("Brownian query times must be finite and non-negative")
        return self._store.sample(idx, t)

    def sample_all(self, t) -> np.ndarray:
        """``W_j(t_j)`` for every path j (``t`` scalar or per path)."""
        idx = np.arange(self.n_paths, dtype=np.int64)
        return self.sample(idx, np.broadcast_to(np.asarray(t, dtype=float), idx.shape))

    def sample_at(self, i: int, t: float) -> np.ndarray:
        return self.sample([i], [t])[0]

    def increment(self, i: int, t0: float, t1: float) -> np.ndarray:
        if t1 < t0:
            raise DomainError("increment needs t0 <= t1")
        w = self.sample([i, i], [t0, t1])
        return w[1] - w[0]

    def knot_count(self, i: int) -> int:
        return self._store.knot_count(i)

    def knots(self, i: int):
        """Copies of path ``i``'s knot times and values."""
        return self._store.knots(i)

    def path(self, i: int) -> "BrownianPath":
        return BrownianPath(self, i)


class BrownianPath:
    """View of a single path inside a :class:`BrownianPaths` bundle."""

    def __init__(self, bundle: BrownianPaths, index: int):
        self.bundle = bundle
        self.index = int(index)

    @property
    def dim(self):
        return self.bundle.dim

    def sample_at(self, t):
        return self.bundle.sample_at(self.index, t)

    def increment(self, t0, t1):
        return self.bundle.increment(self.index, t0, t1)

    def knots(self):
        return self.bundle.knots(self.index)


def sample_at(path: BrownianPath, t: float) -> np.ndarray:
    return path.sample_at(t)


def increment(path: BrownianPath, t0: float, t1: float) -> np.ndarray:
    return path.increment(t0, t1)
