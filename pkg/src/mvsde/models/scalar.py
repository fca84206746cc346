"""One-dimensional test systems with super-linear drift.

All four interact only through the empirical mean (or the mean of sin/cos
for the Kuramoto kernel), so their measure statistics are O(N).
"""

from __future__ import annotations

import numpy as np

from ..core import SEPARABLE, McKeanVlasovModel


def _col(v):
    return np.asarray(v, dtype=float).reshape(-1, 1)


class _MeanFieldScalar(McKeanVlasovModel):
    """Scalar model whose drift is ``local(x) + c * mean``."""

    dim_state = 1
    dim_noise = 1
    interaction_kind = SEPARABLE
    coupling = 1.0

    def statistics(self, atoms):
        return {"mean": float(np.mean(atoms[:, 0]))}

    def local_drift(self, x):
        raise NotImplementedError

    def sigma(self, x):
        raise NotImplementedError

    def drift(self, t, x, stats, idx=None):
        return _col(self.local_drift(x[:, 0]) + self.coupling * stats["mean"])

    def drift_pairwise(self, t, x, atoms, idx=None):
        xi = x[:, 0][:, None]
        xj = atoms[:, 0][None, :]
        kernel = self.local_drift(xi) + self.coupling * xj
        return _col(kernel.mean(axis=1))

    def diffusion(self, t, x, stats, idx=None):
        return self.sigma(x[:, 0]).reshape(-1, 1, 1)

    def diffusion_pairwise(self, t, x, atoms, idx=None):
        return self.diffusion(t, x, None, idx)


class FangGilesMeanField(_MeanFieldScalar):
    """``dX = (-X/(1-|X|^2) + E[X]) dt + dW`` on the open unit interval.

    After every step a state outside ``r_max`` is pulled back onto the
    sphere of radius ``r_max`` (``(r_max/|x|) x``).
    """

    name = "ex1"

    def __init__(self, r_max: float = 1.0 - 1e-10):
        self.r_max = float(r_max)

    def local_drift(self, x):
        return -x / (1.0 - x * x)

    def sigma(self, x):
        return np.ones_like(x)

    def post_step(self, x):
        r = np.linalg.norm(x, axis=1)
        out = r > self.r_max
        if np.any(out):
            x = x.copy()
            x[out] = (self.r_max / r[out])[:, None] * x[out]
        return x

    def milstein_correction(self, x):
        return np.zeros((x.shape[0], 1, 1, 1))


class GinzburgLandauMeanField(_MeanFieldScalar):
    """``dX = (sigma^2/2 X - X^3 + c E[X]) dt + sigma X dW``."""

    name = "ex2"

    def __init__(self, sigma: float = 1.5, c: float = 0.5):
        self.sig = float(sigma)
        self.coupling = float(c)

    def local_drift(self, x):
        return 0.5 * self.sig**2 * x - x**3

    def sigma(self, x):
        return self.sig * x

    def milstein_correction(self, x):
        return (self.sig**2 * x[:, 0]).reshape(-1, 1, 1, 1)


class KuramotoCubic(McKeanVlasovModel):
    """Kuramoto oscillators with an added ``x - x^3`` drift and frozen frequencies ``eta``."""

    name = "ex3"
    dim_state = 1
    dim_noise = 1
    interaction_kind = SEPARABLE

    def __init__(self, eta, sigma: float = 1.0):
        self.eta = np.asarray(eta, dtype=float).reshape(-1)
        self.eta.setflags(write=False)
        self.sig = float(sigma)

    @property
    def n_particles(self):
        return self.eta.size

    def subset(self, labels):
        return KuramotoCubic(self.eta[np.asarray(labels)], self.sig)

    def statistics(self, atoms):
        x = atoms[:, 0]
        return {"mean_sin": float(np.mean(np.sin(x))), "mean_cos": float(np.mean(np.cos(x)))}

    def sample_statistics(self, atoms, rng=None):
        return self.statistics(atoms)

    def drift(self, t, x, stats, idx):
        xi = x[:, 0]
        # sin(xi - xj) = sin xi cos xj - cos xi sin xj
        inter = np.sin(xi) * stats["mean_cos"] - np.cos(xi) * stats["mean_sin"]
        return _col(self.eta[idx] + xi - xi**3 + inter)

    def drift_pairwise(self, t, x, atoms, idx):
        xi = x[:, 0]
        inter = np.sin(xi[:, None] - atoms[:, 0][None, :]).mean(axis=1)
        return _col(self.eta[idx] + xi - xi**3 + inter)

    def diffusion(self, t, x, stats, idx=None):
        return np.full((x.shape[0], 1, 1), self.sig)

    def diffusion_pairwise(self, t, x, atoms, idx=None):
        return self.diffusion(t, x, None, idx)

    def milstein_correction(self, x):
        return np.zeros((x.shape[0], 1, 1, 1))


class QuinticGBM(_MeanFieldScalar):
    """``dX = (-X^5 + E[X]) dt + X dW``; Milstein operator ``L sigma = x``."""

    name = "ex5"

    def local_drift(self, x):
        return -x**5

    def sigma(self, x):
        return x

    def milstein_correction(self, x):
        return x[:, 0].reshape(-1, 1, 1, 1).copy()


def h_unit_ball(x):
    return 1.0 - np.sum(x * x, axis=1)


class InversePower:
    """``h(x) = min(1, |x|^-power)`` (picklable, unlike a closure)."""

    def __init__(self, power):
        self.power = float(power)

    def __call__(self, x):
        r = np.linalg.norm(x, axis=1)
        with np.errstate(divide="ignore"):
            return np.minimum(1.0, r ** (-self.power))

    def __repr__(self):
        return f"min(1,|x|^-{self.power:g})"


def h_inverse_power(power):
    return InversePower(power)
