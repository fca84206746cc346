"""FitzHugh-Nagumo neuron network with chemical synapses.

State per neuron is ``(V, w, y)``: membrane potential, recovery variable and
synaptic gating fraction. Noise channels per neuron are ``[W, W^y, W^1 ..
W^P]``: external current noise, gating noise, and one synaptic-weight noise
per presynaptic population. Synaptic interaction from population ``g`` only
sees the population mean of ``y``, so the measure statistics are the ``P``
means ``mean_y[g]``.
"""

from __future__ import annotations

from importlib import resources

import numpy as np

from ..core import SEPARABLE, McKeanVlasovModel
from ..errors import ConfigError

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

PER_POPULATION = ("a", "b", "c", "I", "a_r", "a_d", "T_max", "lambda", "V_T",
                  "Gamma", "Lambda", "sigma_ext")
PER_PAIR = ("J", "V_rev", "sigma_J")
REQUIRED = PER_POPULATION + PER_PAIR + ("gamma", "init_mean", "init_std")


def load_defaults() -> dict:
    text = resources.files("mvsde.models").joinpath("fhn_defaults.toml").read_text()
    return tomllib.loads(text)


def check_params(params: dict) -> None:
    missing = [k for k in REQUIRED if k not in params]
    if missing:
        raise ConfigError(f"missing FitzHugh-Nagumo parameters: {', '.join(missing)}")


class FitzHughNagumoNetwork(McKeanVlasovModel):
    """All-to-all FHN network with ``P`` populations (``populations[i]`` in ``0..P-1``)."""

    name = "ex4"
    dim_state = 3
    interaction_kind = SEPARABLE

    def __init__(self, params: dict, populations=None, n_populations: int = 1):
        check_params(params)
        self.P = int(n_populations)
        self.params = dict(params)
        self.populations = (np.zeros(0, dtype=np.int64) if populations is None
                            else np.asarray(populations, dtype=np.int64))
        self.dim_noise = 2 + self.P
        P = self.P
        self._pop = {k: np.broadcast_to(np.asarray(params[k], dtype=float), (P,)).copy()
                     for k in PER_POPULATION}
        self._pair = {k: np.broadcast_to(np.asarray(params[k], dtype=float), (P, P)).copy()
                      for k in PER_PAIR}
        self.gamma = float(params["gamma"])

    def _labels(self, idx, m):
        if self.P == 1:
            return np.zeros(m, dtype=np.int64)
        return self.populations[np.asarray(idx)]

    def _p(self, key, alpha):
        return self._pop[key][alpha]

    def sigmoid(self, V, alpha):
        return self._p("T_max", alpha) / (1.0 + np.exp(-self._p("lambda", alpha) * (V - self._p("V_T", alpha))))

    def chi(self, y, alpha):
        inside = (y > 0.0) & (y < 1.0)
        u = 2.0 * np.where(inside, y, 0.5) - 1.0
        val = self._p("Gamma", alpha) * np.exp(-self._p("Lambda", alpha) / (1.0 - u * u))
        return np.where(inside, val, 0.0)

    def sigma_y(self, V, y, alpha):
        arg = self._p("a_r", alpha) * self.sigmoid(V, alpha) * (1.0 - y) + self._p("a_d", alpha) * y
        # full truncation: a negative radicand is replaced by zero
        return np.sqrt(np.maximum(arg, 0.0)) * self.chi(y, alpha)

    def intrinsic_drift(self, x, alpha):
        V, w, y = x[:, 0], x[:, 1], x[:, 2]
        out = np.empty_like(x)
        out[:, 0] = V - V**3 / 3.0 - w + self._p("I", alpha)
        out[:, 1] = self._p("c", alpha) * (V + self._p("a", alpha) - self._p("b", alpha) * w)
        out[:, 2] = (self._p("a_r", alpha) * self.sigmoid(V, alpha) * (1.0 - y)
                     - self._p("a_d", alpha) * y)
        return out

    def statistics(self, atoms):
        labels = self._labels(np.arange(atoms.shape[0]), atoms.shape[0])
        means = np.zeros(self.P)
        for g in range(self.P):
            sel = labels == g
            if np.any(sel):
                means[g] = atoms[sel, 2].mean()
        return {"mean_y": means}

    def sample_statistics(self, atoms, rng=None):
        return {"mean_y": np.full(self.P, float(np.mean(atoms[:, 2])))}

    def _synaptic(self, x, alpha, mean_y, key):
        # sum_g -K[alpha, g] (V - V_rev[alpha, g]) mean_y[g], one column per g
        V = x[:, 0][:, None]
        K = self._pair[key][alpha]
        Vrev = self._pair["V_rev"][alpha]
        return -K * (V - Vrev) * np.asarray(mean_y)[None, :]

    def drift(self, t, x, stats, idx=None):
        alpha = self._labels(idx, x.shape[0])
        out = self.intrinsic_drift(x, alpha)
        out[:, 0] += self._synaptic(x, alpha, stats["mean_y"], "J").sum(axis=1)
        return out

    def diffusion(self, t, x, stats, idx=None):
        alpha = self._labels(idx, x.shape[0])
        g = np.zeros((x.shape[0], 3, self.dim_noise))
        g[:, 0, 0] = self._p("sigma_ext", alpha)
        g[:, 2, 1] = self.sigma_y(x[:, 0], x[:, 2], alpha)
        g[:, 0, 2:] = self._synaptic(x, alpha, stats["mean_y"], "sigma_J")
        return g

    def _pair_means(self, x, atoms, idx, key):
        # direct per-pair evaluation of b / beta, averaged over each population
        alpha = self._labels(idx, x.shape[0])
        lab = self._labels(np.arange(atoms.shape[0]), atoms.shape[0])
        out = np.zeros((x.shape[0], self.P))
        for g in range(self.P):
            sel = lab == g
            if not np.any(sel):
                continue
            yj = atoms[sel, 2][None, :]
            K = self._pair[key][alpha, g][:, None]
            Vrev = self._pair["V_rev"][alpha, g][:, None]
            out[:, g] = (-K * (x[:, 0][:, None] - Vrev) * yj).mean(axis=1)
        return out

    def drift_pairwise(self, t, x, atoms, idx=None):
        alpha = self._labels(idx, x.shape[0])
        out = self.intrinsic_drift(x, alpha)
        out[:, 0] += self._pair_means(x, atoms, idx, "J").sum(axis=1)
        return out

    def diffusion_pairwise(self, t, x, atoms, idx=None):
        alpha = self._labels(idx, x.shape[0])
        g = np.zeros((x.shape[0], 3, self.dim_noise))
        g[:, 0, 0] = self._p("sigma_ext", alpha)
        g[:, 2, 1] = self.sigma_y(x[:, 0], x[:, 2], alpha)
        g[:, 0, 2:] = self._pair_means(x, atoms, idx, "sigma_J")
        return g

    def subset(self, labels):
        if self.P == 1:
            return self
        return FitzHughNagumoNetwork(self.params, self.populations[np.asarray(labels)], self.P)

    def step_function(self):
        return FHNStep(self)


class FHNStep:
    """``h(x) = gamma |x|^2 / |f(x)|^2`` on the intrinsic FHN drift (population 0)."""

    def __init__(self, model: FitzHughNagumoNetwork):
        self.model = model

    def __call__(self, x):
        f = self.model.intrinsic_drift(x, np.zeros(x.shape[0], dtype=np.int64))
        num = self.model.gamma * np.sum(x * x, axis=1)
        den = np.sum(f * f, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = num / den
        return np.where(den == 0.0, np.inf, r)

    def __repr__(self):
        return "gamma|x|^2/|f(x)|^2"
