"""Adaptive time-step functions and sampling probes for their assumptions.

A :class:`TimeStepFunction` wraps a raw step function ``h(x) > 0`` and the
scaling parameter ``delta``. The step actually taken is the lower envelope
``delta * min(T, h(x))``, which always sits inside the admissible band
``[delta*min(T, h), min(delta*T, h)]``.

The probes sample states and report counterexamples to the growth
conditions a step function must satisfy. They can falsify a choice of ``h``
but never prove it admissible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, DomainError, StepFunctionError

DEFAULT_FLOOR = 1e-12


@dataclass(frozen=True)
class TimeStepFunction:
    """Raw step function ``h`` (batched: ``(m, d) -> (m,)``) plus ``delta`` and ``T``.

    ``lower_law`` optionally holds constants ``(a, b, c)`` with
    ``h(x) >= 1 / (a|x|^c + b)``. ``floor`` keeps ``h`` strictly positive where
    the raw formula is not (Example 1 outside the unit ball).
    """

    h: Callable[[np.ndarray], np.ndarray]
    delta: float
    horizon: float = 1.0
    lower_law: tuple | None = None
    floor: float = DEFAULT_FLOOR
    name: str = "h"

    def __post_init__(self):
        if not 0 < self.delta <= 1:
            raise DomainError("delta must lie in (0, 1]")
        if self.horizon <= 0:
            raise DomainError("horizon must be positive")
        if self.floor <= 0:
            raise DomainError("floor must be positive")

    def with_delta(self, delta: float) -> "TimeStepFunction":
        return TimeStepFunction(self.h, delta, self.horizon, self.lower_law, self.floor, self.name)

    def raw(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.asarray(self.h(x), dtype=float).reshape(-1)

    def band(self, x):
        """Admissible ``(lower, upper)`` bounds for the step at ``x``."""
        hx = np.maximum(self.raw(x), self.floor)
        return self.delta * np.minimum(self.horizon, hx), np.minimum(self.delta * self.horizon, hx)


def h_delta(f: TimeStepFunction, x) -> np.ndarray | float:
    """``delta * min(T, max(h(x), floor))``.

    ``x`` is one state (scalar or ``(d,)``, returns a float) or a batch
    ``(m, d)`` (returns ``(m,)``).
    """
    arr = np.asarray(x, dtype=float)
    single = arr.ndim < 2
    x2 = arr.reshape(1, -1) if single else arr
    if not np.all(np.isfinite(x2)):
        raise DomainError("h_delta needs finite states")
    hx = f.raw(x2)
    if np.any(np.isnan(hx)):
        raise StepFunctionError(f"{f.name} returned NaN")
    out = f.delta * np.minimum(f.horizon, np.maximum(hx, f.floor))
    return float(out[0]) if single else out


def clamp_step(proposed: float, t_now: float, block_end: float) -> float:
    """Shorten ``proposed`` so the step ends no later than ``block_end``."""
    if t_now >= block_end:
        raise StepFunctionError(f"block already finished (t={t_now!r} >= {block_end!r})")
    if not proposed > 0:
        raise StepFunctionError("proposed step must be positive")
    return min(proposed, block_end - t_now)


@dataclass
class ProbeReport:
    name: str
    samples: int
    violations: int = 0
    worst: list = field(default_factory=list)
    constants: dict = field(default_factory=dict)
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "samples": self.samples,
            "violations": self.violations,
            "passed": self.passed,
            "constants": self.constants,
            "worst": self.worst,
            "note": self.note,
        }


def sample_ball(rng: np.random.Generator, samples: int, dim: int, radius: float) -> np.ndarray:
    """States in the closed ball of ``radius``; half uniform in |x|, half log-uniform."""
    direction = rng.standard_normal((samples, dim))
    norms = np.linalg.norm(direction, axis=1)
    norms[norms == 0] = 1.0
    direction /= norms[:, None]
    half = samples // 2
    r = np.empty(samples)
    r[:half] = radius * rng.random(half)
    lo = min(1e-3, radius)
    r[half:] = np.exp(rng.uniform(np.log(lo), np.log(radius), samples - half))
    return direction * r[:, None]


def _worst(x, excess, k=5):
    order = np.argsort(-excess)[:k]
    return [{"x": x[j].tolist(), "excess": float(excess[j])} for j in order if excess[j] > 0]


def probe_monotone_step_condition(f: TimeStepFunction, model, samples: int = 10_000,
                                  domain_radius: float = 1e3, kappa: float = 0.5,
                                  seed: int = 0, measure_size: int = 8,
                                  margin: float = 0.1) -> ProbeReport:
    """Falsification probe for ``<x,b> + kappa h(x)|b|^2 <= L_c|x|^2 + L_d``.

    ``kappa`` is 1/2 for Euler-type schemes and 3/2 for Milstein. Constants
    are fitted on the inner half of the radius range (least squares on the
    positive part, inflated to an envelope with ``margin``); samples in the
    outer half exceeding that envelope are violations, which is what a
    right-hand side growing faster than ``|x|^2`` produces.
    """
    if samples < 1:
        raise DomainError("need at least one sample")
    rng = np.random.default_rng(seed)
    d = model.dim_state
    x = sample_ball(rng, samples, d, domain_radius)
    t = rng.uniform(0.0, f.horizon, samples)
    atoms = rng.standard_normal((measure_size, d))
    stats = model.sample_statistics(atoms, rng)
    idx = rng.integers(0, getattr(model, "n_particles", measure_size) or 1, samples)
    b = np.asarray(model.drift(t, x, stats, idx), dtype=float)
    hx = f.raw(x)
    r2 = np.sum(x * x, axis=1)
    g = np.sum(x * b, axis=1) + kappa * hx * np.sum(b * b, axis=1)
    ok = np.isfinite(g)
    inner = ok & (np.sqrt(r2) <= 0.5 * domain_radius)
    A = np.column_stack([r2[inner], np.ones(inner.sum())])
    if inner.sum() >= 2:
        coef, *_ = np.linalg.lstsq(A, np.maximum(g[inner], 0.0), rcond=None)
    else:
        coef = np.zeros(2)
    lc, ld = (max(float(c), 1e-12) for c in coef)
    env = lc * r2 + ld
    scale = max(1.0, float(np.max(np.where(inner, g / env, 0.0), initial=0.0)))
    lc, ld = lc * scale * (1 + margin), ld * scale * (1 + margin)
    excess = np.where(ok, g - (lc * r2 + ld), np.inf)
    bad = (~inner) & (excess > 0)
    bad |= ~ok
    report = ProbeReport(
        "monotone_step_condition", samples, int(bad.sum()),
        _worst(x, np.where(bad, excess, -np.inf)), {"L_c": lc, "L_d": ld, "kappa": kappa},
    )
    return report


def probe_superlinear_diffusion_bound(f: TimeStepFunction, q: int, C: float,
                                      samples: int = 10_000, radius: float = 1e3,
                                      seed: int = 0, dim: int = 1) -> ProbeReport:
    """Report sampled ``x`` with ``h(x) > C (1 + |x|^{3q})^{-1}``."""
    if q < 1 or C <= 0:
        raise DomainError("need q >= 1 and C > 0")
    rng = np.random.default_rng(seed)
    x = sample_ball(rng, samples, dim, radius)
    hx = f.raw(x)
    bound = C / (1.0 + np.linalg.norm(x, axis=1) ** (3 * q))
    excess = hx - bound * (1 + 1e-12)
    bad = excess > 0
    return ProbeReport("superlinear_diffusion_bound", samples, int(bad.sum()),
                       _worst(x, np.where(bad, excess, -np.inf)), {"q": q, "C": C})


def probe_lower_bound_law(f: TimeStepFunction, samples: int = 10_000, radius: float = 1e3,
                          seed: int = 0, dim: int = 1) -> ProbeReport:
    """Report sampled ``x`` with ``h(x) < 1 / (a|x|^c + b)``."""
    if f.lower_law is None:
        raise ConfigError(f"{f.name} has no lower-bound constants (a, b, c)")
    a, b, c = f.lower_law
    rng = np.random.default_rng(seed)
    x = sample_ball(rng, samples, dim, radius)
    x[0] = 0.0
    hx = f.raw(x)
    bound = 1.0 / (a * np.linalg.norm(x, axis=1) ** c + b)
    excess = bound * (1 - 1e-12) - hx
    bad = excess > 0
    return ProbeReport("lower_bound_law", samples, int(bad.sum()),
                       _worst(x, np.where(bad, excess, -np.inf)), {"a": a, "b": b, "c": c})
