"""Seeded random streams and initial-value laws.

Every stream is a Philox generator keyed by a :class:`numpy.random.SeedSequence`
whose spawn key names the stream, so streams are independent of each other
and of the order (or process) in which they are created.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DomainError

# stream families inside one experiment
PATH_STREAM = 0
INIT_STREAM = 1
MODEL_STREAM = 2
PROBE_STREAM = 3


@dataclass(frozen=True)
class SeedSpec:
    """Master seed, experiment id and repetition index; streams are derived per particle."""

    master_seed: int = 0
    experiment: int = 0
    replicate: int = 0

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise DomainError("master_seed must fit in 64 bits")
        if int(self.experiment) < 0 or int(self.replicate) < 0:
            raise DomainError("experiment and replicate ids must be non-negative")

    def generator(self, family: int, index: int = 0) -> np.random.Generator:
        ss = np.random.SeedSequence(
            int(self.master_seed), spawn_key=(int(self.experiment), int(self.replicate), int(family), int(index))
        )
        return np.random.Generator(np.random.Philox(ss))

    def path_generator(self, particle: int) -> np.random.Generator:
        return self.generator(PATH_STREAM, particle)

    def with_experiment(self, experiment: int) -> "SeedSpec":
        return SeedSpec(self.master_seed, experiment, self.replicate)

    def with_replicate(self, replicate: int) -> "SeedSpec":
        return SeedSpec(self.master_seed, self.experiment, replicate)


@dataclass(frozen=True)
class InitialLaw:
    """Law of the i.i.d. initial states.

    ``kind`` is ``"point"`` (``loc`` only), ``"uniform"`` (``loc`` = lower,
    ``scale`` = upper bound) or ``"normal"`` (``loc`` = mean, ``scale`` =
    standard deviation). Parameters broadcast per coordinate.
    """

    kind: str
    loc: tuple = (0.0,)
    scale: tuple = (1.0,)

    def __post_init__(self):
        object.__setattr__(self, "loc", tuple(np.atleast_1d(self.loc).astype(float)))
        object.__setattr__(self, "scale", tuple(np.atleast_1d(self.scale).astype(float)))
        if self.kind not in ("point", "uniform", "normal"):
            raise DomainError(f"unknown initial law {self.kind!r}")
        if self.kind == "uniform" and np.any(np.asarray(self.loc) > np.asarray(self.scale)):
            raise DomainError("uniform law needs lower <= upper")
        if self.kind == "normal" and np.any(np.asarray(self.scale) < 0):
            raise DomainError("normal law needs a non-negative standard deviation")

    @classmethod
    def point(cls, value):
        return cls("point", loc=value)

    @classmethod
    def uniform(cls, low, high):
        return cls("uniform", loc=low, scale=high)

    @classmethod
    def normal(cls, mean, std):
        return cls("normal", loc=mean, scale=std)

    @property
    def dim(self) -> int:
        if self.kind == "point":
            return len(self.loc)
        return max(len(self.loc), len(self.scale))


def gaussian_initials(seed: SeedSpec, law: InitialLaw, n: int, dim: int | None = None) -> np.ndarray:
    """Draw ``n`` i.i.d. initial states, shape ``(n, dim)``.

    Draws fill row-major from one stream, so the first ``m`` rows for ``n``
    equal the rows drawn for ``m`` (nested particle systems share initials).
    """
    if n < 1:
        raise DomainError("need at least one particle")
    d = law.dim if dim is None else int(dim)
    loc = np.broadcast_to(np.asarray(law.loc, dtype=float), (d,))
    scale = np.broadcast_to(np.asarray(law.scale, dtype=float), (d,))
    if law.kind == "point":
        return np.tile(loc, (n, 1))
    rng = seed.generator(INIT_STREAM, 0)
    if law.kind == "uniform":
        u = rng.random((n, d))
        return loc + (scale - loc) * u
    z = rng.standard_normal((n, d))
    return loc + scale * z
