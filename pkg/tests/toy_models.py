"""Small hand-checkable models shared by the test modules."""

import numpy as np

from mvsde.core import McKeanVlasovModel


class Affine(McKeanVlasovModel):
    """``dX = (a X + c E[X] + e) dt + (s + g X) dW`` in one dimension."""

    def __init__(self, a=0.0, c=0.0, e=0.0, s=0.0, g=0.0):
        self.a, self.c, self.e, self.s, self.g = a, c, e, s, g

    def statistics(self, atoms):
        return {"mean": float(np.mean(atoms[:, 0]))}

    def sample_statistics(self, atoms, rng=None):
        return self.statistics(atoms)

    def drift(self, t, x, stats, idx=None):
        return self.a * x + self.c * stats["mean"] + self.e

    def diffusion(self, t, x, stats, idx=None):
        return (self.s + self.g * x).reshape(-1, 1, 1)

    def drift_pairwise(self, t, x, atoms, idx=None):
        return self.a * x + self.c * atoms[:, 0].mean() + self.e

    def diffusion_pairwise(self, t, x, atoms, idx=None):
        return self.diffusion(t, x, None, idx)

    def milstein_correction(self, x):
        # L sigma = sigma' sigma = g (s + g x)
        return (self.g * (self.s + self.g * x[:, 0])).reshape(-1, 1, 1, 1)


def zero():
    return Affine()


def brownian():
    return Affine(s=1.0)


class Cubic(Affine):
    def drift(self, t, x, stats, idx=None):
        return x**3


class FixedPaths:
    """Stand-in for BrownianPaths returning ``W(t) = slope * t`` on every path."""

    def __init__(self, n_paths, dim=1, slope=0.0):
        self.n_paths, self.dim, self.slope = n_paths, dim, slope

    def sample(self, idx, t):
        t = np.asarray(t, dtype=float).reshape(-1)
        return np.repeat((self.slope * t)[:, None], self.dim, axis=1)

    def sample_all(self, t):
        return self.sample(np.arange(self.n_paths), np.full(self.n_paths, t))


class MixedPaths:
    """Path ``i`` taken from ``sources[i]`` (each a BrownianPaths), for coupling tests."""

    def __init__(self, sources):
        self.sources = sources
        self.n_paths = len(sources)
        self.dim = sources[0].dim

    def sample(self, idx, t):
        idx = np.asarray(idx).reshape(-1)
        t = np.asarray(t, dtype=float).reshape(-1)
        return np.array([self.sources[i].sample([i], [s])[0] for i, s in zip(idx, t)])

    def sample_all(self, t):
        return self.sample(np.arange(self.n_paths), np.full(self.n_paths, t))
