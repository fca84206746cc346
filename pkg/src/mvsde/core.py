"""Particle clouds, empirical measures and the model interface.

States are stored as ``(N, d)`` float arrays, one row per particle. Models
evaluate their coefficients for a batch of particles at once; the measure
enters either through precomputed sufficient statistics (separable
interactions, O(N) per step) or through a direct O(N^2) pairwise sum, which
every shipped model also implements as an oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np

from .errors import DimensionError, DomainError, UnsupportedModelError

SEPARABLE = "separable"
PAIRWISE = "pairwise"


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Uniform atomic measure over a snapshot of particle states."""

    atoms: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.atoms, dtype=np.float64)
        if a.ndim == 1:
            a = a[:, None]
        if a.ndim != 2 or a.shape[0] < 1:
            raise DimensionError("atoms must have shape (N, d) with N >= 1")
        object.__setattr__(self, "atoms", _frozen(a))

    @property
    def size(self) -> int:
        return self.atoms.shape[0]

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    @property
    def weight(self) -> float:
        return 1.0 / self.size

    def mean(self) -> np.ndarray:
        return self.atoms.mean(axis=0)


@dataclass
class ParticleCloud:
    """States plus per-particle clocks and step counters."""

    states: np.ndarray
    clocks: np.ndarray = None
    step_counts: np.ndarray = None

    def __post_init__(self):
        s = np.array(self.states, dtype=np.float64)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2 or s.shape[0] < 1:
            raise DimensionError("states must have shape (N, d) with N >= 1")
        self.states = s
        n = s.shape[0]
        self.clocks = np.zeros(n) if self.clocks is None else np.asarray(self.clocks, dtype=float)
        if self.step_counts is None:
            self.step_counts = np.zeros(n, dtype=np.int64)
        else:
            self.step_counts = np.asarray(self.step_counts, dtype=np.int64)
        if self.clocks.shape != (n,) or self.step_counts.shape != (n,):
            raise DimensionError("clocks and step_counts need one entry per particle")

    @property
    def count(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def snapshot(self) -> EmpiricalMeasure:
        return EmpiricalMeasure(self.states)

    def copy(self) -> "ParticleCloud":
        return ParticleCloud(self.states.copy(), self.clocks.copy(), self.step_counts.copy())


@dataclass(frozen=True)
class InteractionCache:
    """Sufficient statistics of a measure snapshot, as consumed by a model."""

    size: int
    values: MappingProxyType = field(default_factory=lambda: MappingProxyType({}))

    def __getitem__(self, key):
        return self.values[key]


class McKeanVlasovModel:
    """Base class for particle-system coefficients.

    Subclasses set ``dim_state``, ``dim_noise`` and ``interaction_kind`` and
    implement ``drift``/``diffusion`` on batches: ``x`` has shape ``(m, d)``,
    ``idx`` holds the particle labels of the rows (needed by models with
    per-particle parameters), and ``stats`` is the :class:`InteractionCache`
    of the current measure snapshot. Pairwise models receive a cache whose
    only entry is ``"atoms"``.
    """

    dim_state = 1
    dim_noise = 1
    interaction_kind = SEPARABLE
    name = "model"

    def statistics(self, atoms: np.ndarray) -> dict:
        raise NotImplementedError

    def drift(self, t, x, stats, idx) -> np.ndarray:
        raise NotImplementedError

    def diffusion(self, t, x, stats, idx) -> np.ndarray:
        raise NotImplementedError

    def drift_pairwise(self, t, x, atoms, idx) -> np.ndarray:
        raise NotImplementedError

    def diffusion_pairwise(self, t, x, atoms, idx) -> np.ndarray:
        raise NotImplementedError

    # Milstein support: L^{j1} sigma_{m,j2}(x) as an (m, d, k, k) array,
    # index order [row, m, j1, j2].
    milstein_correction = None

    def post_step(self, x: np.ndarray) -> np.ndarray:
        return x

    def subset(self, labels) -> "McKeanVlasovModel":
        """Model for the sub-system made of particles ``labels`` (renumbered from 0)."""
        return self

    def sample_statistics(self, atoms, rng=None):
        """Statistics handed to the probes; default is the exact cache."""
        return self.statistics(atoms)


def measure_statistics(measure, model: McKeanVlasovModel) -> InteractionCache:
    """Sufficient statistics of ``measure`` (an EmpiricalMeasure, cloud or array)."""
    if isinstance(measure, ParticleCloud):
        atoms = measure.states
    elif isinstance(measure, EmpiricalMeasure):
        atoms = measure.atoms
    else:
        atoms = np.asarray(measure, dtype=np.float64)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
    if model.interaction_kind == PAIRWISE:
        raise UnsupportedModelError(f"{model.name} has pairwise interactions; no sufficient statistics")
    values = model.statistics(atoms)
    return InteractionCache(atoms.shape[0], MappingProxyType(dict(values)))


def coefficient_cache(measure_atoms: np.ndarray, model: McKeanVlasovModel) -> InteractionCache:
    """Whatever the model's coefficients consume: statistics, or the atoms themselves."""
    if model.interaction_kind == PAIRWISE:
        return InteractionCache(measure_atoms.shape[0], MappingProxyType({"atoms": _frozen(measure_atoms)}))
    return measure_statistics(measure_atoms, model)


def wasserstein2_upper_bound(a: EmpiricalMeasure, b: EmpiricalMeasure) -> float:
    """Index-aligned coupling bound ``sqrt(mean_i |x_i - y_i|^2) >= W2(a, b)``."""
    xa = a.atoms if isinstance(a, EmpiricalMeasure) else np.atleast_2d(np.asarray(a, float))
    xb = b.atoms if isinstance(b, EmpiricalMeasure) else np.atleast_2d(np.asarray(b, float))
    if xa.shape != xb.shape:
        raise DimensionError(f"measures differ in shape: {xa.shape} vs {xb.shape}")
    diff = xa - xb
    return float(np.sqrt(np.mean(np.sum(diff * diff, axis=1))))


def phi(n: int, d: int) -> float:
    """Propagation-of-chaos rate: N^-1/2 (d<4), N^-1/2 ln N (d=4), N^-2/d (d>4)."""
    if n < 2:
        raise DomainError("phi needs N >= 2")
    if d < 1:
        raise DomainError("phi needs d >= 1")
    if d < 4:
        return n ** -0.5
    if d == 4:
        return n ** -0.5 * math.log(n)
    return n ** (-2.0 / d)
