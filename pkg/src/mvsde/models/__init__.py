"""The five example systems, wired with their step functions and initial laws."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import McKeanVlasovModel
from ..errors import ConfigError
from ..randomness.seeds import MODEL_STREAM, InitialLaw, SeedSpec
from ..stepping import TimeStepFunction
from .fhn import FitzHughNagumoNetwork, check_params, load_defaults
from .scalar import (
    FangGilesMeanField,
    GinzburgLandauMeanField,
    KuramotoCubic,
    QuinticGBM,
    h_inverse_power,
    h_unit_ball,
)

EXAMPLES = ("ex1", "ex2", "ex3", "ex4", "ex5")

DEFAULTS = {
    "ex1": {"r_max": 1.0 - 1e-10, "x0": 0.0},
    "ex2": {"sigma": 1.5, "c": 0.5, "x0": 1.0},
    "ex3": {"sigma": 1.0, "x0_low": 0.5, "x0_high": 1.0, "eta_mean": 0.0, "eta_std": 1.0},
    "ex4": None,  # loaded from fhn_defaults.toml
    "ex5": {"x0": 1.0},
}


@dataclass
class Example:
    name: str
    model: McKeanVlasovModel
    step: TimeStepFunction
    initial_law: InitialLaw
    params: dict

    def __iter__(self):
        return iter((self.model, self.step, self.initial_law))


def default_params(name: str) -> dict:
    if name not in EXAMPLES:
        raise ConfigError(f"unknown example {name!r}; expected one of {', '.join(EXAMPLES)}")
    if name == "ex4":
        return load_defaults()
    return dict(DEFAULTS[name])


STEP_PRESETS = ("unit_ball", "inverse_power_2", "inverse_power_4", "fhn")


def step_preset(name: str, model=None, delta: float = 1.0, horizon: float = 1.0) -> TimeStepFunction:
    """Named step functions; ``fhn`` needs the FitzHugh-Nagumo model it is built on."""
    if name == "unit_ball":
        return TimeStepFunction(h_unit_ball, delta, horizon, name="1-|x|^2")
    if name == "inverse_power_2":
        return TimeStepFunction(h_inverse_power(2), delta, horizon, lower_law=(1.0, 1.0, 2.0),
                                name="min(1,|x|^-2)")
    if name == "inverse_power_4":
        return TimeStepFunction(h_inverse_power(4), delta, horizon, lower_law=(1.0, 1.0, 4.0),
                                name="min(1,|x|^-4)")
    if name == "fhn":
        if not isinstance(model, FitzHughNagumoNetwork):
            raise ConfigError("the fhn step function needs a FitzHugh-Nagumo model")
        return TimeStepFunction(model.step_function(), delta, horizon, name="gamma|x|^2/|f|^2")
    raise ConfigError(f"unknown step function {name!r}; expected one of {', '.join(STEP_PRESETS)}")


DEFAULT_STEP = {"ex1": "unit_ball", "ex2": "inverse_power_2", "ex3": "inverse_power_2",
                "ex4": "fhn", "ex5": "inverse_power_4"}


def make_example(name: str, params: dict | None = None, n: int = 1,
                 seed: SeedSpec | None = None, horizon: float = 1.0,
                 delta: float = 1.0, step: str | None = None) -> Example:
    """Build ``(model, step function, initial law)`` for one of ``ex1`` .. ``ex5``.

    ``params`` overrides the defaults key by key; unknown keys are rejected.
    ``ex3`` draws its frozen frequencies for ``n`` particles from ``seed``.
    ``step`` replaces the example's own step function by a named preset.
    """
    base = default_params(name)
    params = dict(params or {})
    unknown = sorted(set(params) - set(base))
    if unknown:
        raise ConfigError(f"unknown parameters for {name}: {', '.join(unknown)}")
    p = {**base, **params}
    seed = seed or SeedSpec()

    if name == "ex1":
        model = FangGilesMeanField(p["r_max"])
        law = InitialLaw.point(p["x0"])
    elif name == "ex2":
        model = GinzburgLandauMeanField(p["sigma"], p["c"])
        law = InitialLaw.point(p["x0"])
    elif name == "ex3":
        eta = p["eta_mean"] + p["eta_std"] * seed.generator(MODEL_STREAM, 0).standard_normal(n)
        model = KuramotoCubic(eta, p["sigma"])
        law = InitialLaw.uniform(p["x0_low"], p["x0_high"])
    elif name == "ex4":
        check_params(p)
        model = FitzHughNagumoNetwork(p)
        law = InitialLaw.normal(p["init_mean"], p["init_std"])
    else:
        model = QuinticGBM()
        law = InitialLaw.point(p["x0"])
    fn = step_preset(step or DEFAULT_STEP[name], model, delta, horizon)
    return Example(name, model, fn, law, p)


__all__ = [
    "EXAMPLES",
    "Example",
    "FangGilesMeanField",
    "FitzHughNagumoNetwork",
    "GinzburgLandauMeanField",
    "KuramotoCubic",
    "QuinticGBM",
    "STEP_PRESETS",
    "default_params",
    "step_preset",
    "make_example",
]
