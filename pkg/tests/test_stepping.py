import numpy as np
import pytest

from mvsde.core import McKeanVlasovModel
from mvsde.errors import ConfigError, DomainError, StepFunctionError
from mvsde.models import EXAMPLES, GinzburgLandauMeanField, make_example, step_preset
from mvsde.models.scalar import h_inverse_power
from mvsde.stepping import (
    TimeStepFunction,
    clamp_step,
    h_delta,
    probe_lower_bound_law,
    probe_monotone_step_condition,
    probe_superlinear_diffusion_bound,
    sample_ball,
)


def test_h_delta_examples():
    ex2 = step_preset("inverse_power_2", delta=2**-5)
    assert h_delta(ex2, 2.0) == 1 / 128
    assert h_delta(ex2, 0.0) == 1 / 32
    ex5 = step_preset("inverse_power_4", delta=2**-3)
    assert h_delta(ex5, np.sqrt(2.0)) == pytest.approx(1 / 32, rel=1e-15)


def test_h_delta_rejects_nonfinite():
    f = step_preset("inverse_power_2", delta=0.5)
    with pytest.raises(DomainError):
        h_delta(f, np.nan)
    with pytest.raises(DomainError):
        h_delta(f, np.array([[1.0], [np.inf]]))


def test_h_delta_caps_at_horizon_and_floors():
    f = TimeStepFunction(lambda x: np.full(x.shape[0], 50.0), 0.25, horizon=2.0)
    assert h_delta(f, 1.0) == 0.5
    g = step_preset("unit_ball", delta=0.5)
    assert h_delta(g, 3.0) == 0.5 * g.floor


def test_clamp_step_examples():
    assert clamp_step(0.1, 0.95, 1.0) == pytest.approx(0.05, abs=1e-15)
    assert clamp_step(0.01, 0.5, 1.0) == 0.01
    with pytest.raises(StepFunctionError):
        clamp_step(0.1, 1.0, 1.0)


def test_clamp_step_positive():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        t = rng.uniform(0, 1)
        assert clamp_step(rng.uniform(1e-9, 1), t, 1.0) > 0


def _band_states(name, model, rng, n):
    if name == "ex1":
        return sample_ball(rng, n, 1, 1.2)
    if name == "ex4":
        return np.column_stack([rng.uniform(-3, 3, n), rng.uniform(-2, 3, n), rng.uniform(-0.2, 1.2, n)])
    return sample_ball(rng, n, model.dim_state, 1e3)


@pytest.mark.parametrize("name", EXAMPLES)
def test_band_over_random_states(name):
    # delta*min(T, h) <= h_delta <= min(delta*T, h) on 1e5 states, with h floored
    ex = make_example(name, n=4, delta=2**-5)
    rng = np.random.default_rng(hash(name) % 2**32)
    x = _band_states(name, ex.model, rng, 100_000)
    hd = h_delta(ex.step, x)
    lo, hi = ex.step.band(x)
    assert np.all(hd > 0)
    assert np.all(lo <= hd) and np.all(hd <= hi)


@pytest.mark.parametrize("name", EXAMPLES)
def test_h_delta_linear_in_delta(name):
    ex = make_example(name, n=4, delta=2**-3)
    x = _band_states(name, ex.model, np.random.default_rng(1), 1000)
    a = h_delta(ex.step, x)
    b = h_delta(ex.step.with_delta(2**-7), x)
    assert np.array_equal(b, a * 2**-4)


def test_probe_monotone_ginzburg_landau():
    f = step_preset("inverse_power_2", delta=1.0)
    rep = probe_monotone_step_condition(f, GinzburgLandauMeanField(1.5, 0.5), samples=10_000,
                                        domain_radius=1e3)
    assert rep.passed, rep.worst


class _Drift(McKeanVlasovModel):
    def __init__(self, fn):
        self.fn = fn

    def statistics(self, atoms):
        return {}

    def sample_statistics(self, atoms, rng=None):
        return {}

    def drift(self, t, x, stats, idx=None):
        return self.fn(x)


def test_probe_monotone_zero_drift():
    f = TimeStepFunction(lambda x: np.ones(x.shape[0]), 1.0)
    rep = probe_monotone_step_condition(f, _Drift(np.zeros_like), samples=2000)
    assert rep.passed
    assert rep.constants["L_d"] >= 0


def test_probe_monotone_cubic_constant_step_fails():
    f = TimeStepFunction(lambda x: np.ones(x.shape[0]), 1.0)
    rep = probe_monotone_step_condition(f, _Drift(lambda x: -x**3), samples=10_000, domain_radius=1e3)
    assert not rep.passed
    assert rep.worst


def test_probe_superlinear_examples():
    assert probe_superlinear_diffusion_bound(TimeStepFunction(h_inverse_power(4), 1.0), 1, 2.0).passed
    const = TimeStepFunction(lambda x: np.ones(x.shape[0]), 1.0)
    assert not probe_superlinear_diffusion_bound(const, 1, 1.0).passed
    eq = TimeStepFunction(lambda x: 1.0 / (1.0 + np.abs(x[:, 0]) ** 3), 1.0)
    assert probe_superlinear_diffusion_bound(eq, 1, 1.0).passed


def test_probe_lower_bound_examples():
    assert probe_lower_bound_law(step_preset("inverse_power_2")).passed
    gauss = TimeStepFunction(lambda x: np.exp(-np.sum(x * x, axis=1)), 1.0, lower_law=(1.0, 1.0, 2.0))
    assert not probe_lower_bound_law(gauss).passed
    # at the origin h(0) >= 1/b is what is checked
    tight = TimeStepFunction(lambda x: np.full(x.shape[0], 0.4), 1.0, lower_law=(0.0, 2.0, 1.0))
    assert not probe_lower_bound_law(tight, samples=10).passed
    with pytest.raises(ConfigError):
        probe_lower_bound_law(step_preset("unit_ball"))
