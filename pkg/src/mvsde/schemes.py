"""Time-stepping schemes for interacting particle systems.

Six schemes advance a :class:`~mvsde.core.ParticleCloud` from ``0`` to ``T``
on a bundle of :class:`~mvsde.randomness.BrownianPaths` (one path per
particle):

* ``uniform_euler``: explicit Euler-Maruyama with ``h = T/M``.
* ``tamed_euler``: drift tamed as ``b / (1 + M^-alpha |b|)``.
* ``scheme1_adaptive_euler``: all particles share the smallest adaptive
  step of the cloud; the measure is refreshed every step.
* ``scheme2_adaptive_euler``: each particle takes its own adaptive steps;
  the measure is frozen on blocks of length ``delta*T`` and every particle
  lands exactly on each block boundary.
* ``tamed_milstein``: Milstein with drift tamed as ``b / (1 + h|b|)``.
* ``adaptive_milstein``: Milstein on the shared-minimum adaptive mesh.

Brownian increments are read from the paths, so two runs on the same bundle
are coupled whatever their meshes are. Every mesh ends exactly at ``T``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ParticleCloud, coefficient_cache
from .errors import ConfigError, DivergenceError, DomainError, StepFunctionError, UnsupportedModelError
from .randomness import BrownianPaths
from .stepping import TimeStepFunction, h_delta

KINDS = (
    "uniform_euler",
    "tamed_euler",
    "scheme1_adaptive_euler",
    "scheme2_adaptive_euler",
    "tamed_milstein",
    "adaptive_milstein",
)
ADAPTIVE = ("scheme1_adaptive_euler", "scheme2_adaptive_euler", "adaptive_milstein")
MILSTEIN = ("tamed_milstein", "adaptive_milstein")

CORRUPTION_BOUND = 1e100


@dataclass(frozen=True)
class SchemeConfig:
    kind: str
    delta: float | None = None
    M: int | None = None
    alpha: float | None = None
    horizon: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown scheme {self.kind!r}; expected one of {', '.join(KINDS)}")
        if self.horizon <= 0:
            raise ConfigError("horizon must be positive")
        adaptive = self.kind in ADAPTIVE
        needs = {"delta": adaptive, "M": not adaptive, "alpha": self.kind == "tamed_euler"}
        for key, needed in needs.items():
            value = getattr(self, key)
            if needed and value is None:
                raise ConfigError(f"{self.kind} requires {key}")
            if not needed and value is not None:
                raise ConfigError(f"{self.kind} does not take {key}")
        if adaptive and not 0 < self.delta <= 1:
            raise ConfigError("delta must lie in (0, 1]")
        if not adaptive and (int(self.M) != self.M or self.M < 1):
            raise ConfigError("M must be a positive integer")
        if self.kind == "tamed_euler" and self.alpha <= 0:
            raise ConfigError("alpha must be positive")
        if self.kind == "scheme2_adaptive_euler":
            blocks = round(1.0 / self.delta)
            if abs(1.0 / self.delta - blocks) >= 1e-9:
                raise ConfigError("scheme2 needs 1/delta to be an integer block count")

    @property
    def blocks(self) -> int:
        return int(round(1.0 / self.delta))

    @property
    def label(self) -> str:
        if self.kind in ADAPTIVE:
            return f"{self.kind}(delta={self.delta:g})"
        if self.kind == "tamed_euler":
            return f"{self.kind}(M={self.M},alpha={self.alpha:g})"
        return f"{self.kind}(M={self.M})"


@dataclass
class _Record:
    """Per-step knots of the particles that moved, for interpolation."""

    idx: np.ndarray
    t: np.ndarray
    x: np.ndarray
    drift: np.ndarray
    sigma: np.ndarray
    lsigma: np.ndarray | None


@dataclass
class Trajectory:
    kind: str
    horizon: float
    final: np.ndarray
    step_counts: np.ndarray
    mesh: np.ndarray | None = None
    corrupted: np.ndarray | None = None
    corruption_times: np.ndarray | None = None
    max_second_moment: float = 0.0
    records: list = field(default_factory=list, repr=False)
    initial: np.ndarray | None = None

    @property
    def n_particles(self) -> int:
        return self.final.shape[0]

    @property
    def n_corrupted(self) -> int:
        return 0 if self.corrupted is None else int(self.corrupted.sum())

    def mean_steps(self) -> float:
        return float(np.mean(self.step_counts))

    def average_step(self) -> float:
        """Harmonic-mean step size ``T * N / sum_i N_T^i``."""
        return self.horizon * self.n_particles / float(np.sum(self.step_counts))

    def cloud(self) -> ParticleCloud:
        n = self.n_particles
        return ParticleCloud(self.final.copy(), np.full(n, self.horizon), self.step_counts.copy())

    def knots(self, i: int):
        """Knot times and states of particle ``i`` (needs ``record=True``)."""
        if not self.records:
            raise DomainError("trajectory was not recorded; rerun with record=True")
        times, states = [], []
        for rec in self.records:
            hit = np.nonzero(rec.idx == i)[0]
            if hit.size:
                times.append(rec.t[hit[0]])
                states.append(rec.x[hit[0]])
        times.append(self.horizon)
        states.append(self.final[i])
        return np.array(times), np.array(states)

    def _segment(self, i, t):
        best = None
        for rec in self.records:
            hit = np.nonzero(rec.idx == i)[0]
            if hit.size and rec.t[hit[0]] <= t:
                best = (rec, hit[0])
        return best


def _check_paths(paths: BrownianPaths, n: int, k: int):
    if paths.n_paths != n:
        raise DomainError(f"need one Brownian path per particle ({paths.n_paths} != {n})")
    if paths.dim != k:
        raise DomainError(f"model has {k} noise channels, paths have {paths.dim}")


def tame(b: np.ndarray, scale: float) -> np.ndarray:
    """Row-wise ``b / (1 + scale |b|)``: ``scale = M^-alpha`` (Euler) or ``h`` (Milstein)."""
    b = np.asarray(b, dtype=float)
    nb = np.linalg.norm(b, axis=-1, keepdims=True)
    return b / (1.0 + scale * nb)


def _apply_noise(sigma, dw):
    return np.einsum("ndk,nk->nd", sigma, dw)


def _milstein_term(model, x, dw, h):
    lsig = np.asarray(model.milstein_correction(x), dtype=float)
    k = dw.shape[1]
    q = dw[:, :, None] * dw[:, None, :] - np.asarray(h, dtype=float).reshape(-1, 1, 1) * np.eye(k)
    return 0.5 * np.einsum("nmab,nab->nm", lsig, q), lsig


def _corrupt(x):
    return ~np.all(np.isfinite(x), axis=1) | np.any(np.abs(x) > CORRUPTION_BOUND, axis=1)


class _Runner:
    """Shared bookkeeping for all schemes."""

    def __init__(self, model, cloud0, paths, horizon, record, on_divergence):
        if on_divergence not in ("raise", "report"):
            raise ConfigError("on_divergence must be 'raise' or 'report'")
        cloud0 = cloud0 if isinstance(cloud0, ParticleCloud) else ParticleCloud(cloud0)
        if cloud0.dim != model.dim_state:
            raise DomainError(f"cloud has d={cloud0.dim}, model expects {model.dim_state}")
        if not np.all(np.isfinite(cloud0.states)):
            raise DomainError("initial states must be finite")
        self.model = model
        self.T = float(horizon)
        self.tol = 1e-12 * self.T
        self.n = cloud0.count
        self.k = model.dim_noise
        _check_paths(paths, self.n, self.k)
        self.paths = paths
        self.x = cloud0.states.copy()
        self.x0 = cloud0.states.copy()
        self.counts = np.zeros(self.n, dtype=np.int64)
        self.w = paths.sample_all(0.0)
        self.idx_all = np.arange(self.n, dtype=np.int64)
        self.live = np.ones(self.n, dtype=bool)
        self.corrupt_t = np.full(self.n, np.nan)
        self.record = record
        self.records = []
        self.on_divergence = on_divergence
        self.max_m2 = float(np.mean(np.sum(self.x**2, axis=1)))

    def commit(self, idx, t0, t1, x_new, drift, sigma, lsig=None):
        """Store a step for particles ``idx`` (starting at ``t0``) or flag corruption."""
        bad = _corrupt(x_new)
        if np.any(bad):
            j = int(np.argmax(bad))
            first = int(idx[j])
            t_bad = float(np.broadcast_to(np.asarray(t0, dtype=float), idx.shape)[j])
            if self.on_divergence == "raise":
                raise DivergenceError(f"particle {first} diverged at t={t_bad:.6g}", first, t_bad)
            self.live[idx[bad]] = False
            self.corrupt_t[idx[bad]] = np.broadcast_to(np.asarray(t0, dtype=float), idx.shape)[bad]
        if self.record:
            t_arr = np.broadcast_to(np.asarray(t0, dtype=float), idx.shape).copy()
            self.records.append(_Record(idx.copy(), t_arr, self.x[idx].copy(), drift.copy(),
                                        sigma.copy(), None if lsig is None else lsig.copy()))
        good = ~bad
        self.x[idx[good]] = x_new[good]
        self.counts[idx] += 1

    def note_moment(self):
        m2 = float(np.mean(np.sum(self.x**2, axis=1)))
        if np.isfinite(m2):
            self.max_m2 = max(self.max_m2, m2)

    def result(self, kind, mesh=None):
        corrupted = ~self.live
        return Trajectory(kind, self.T, self.x.copy(), self.counts.copy(),
                          None if mesh is None else np.asarray(mesh), corrupted,
                          self.corrupt_t.copy(), self.max_m2, self.records, self.x0)


def _shared_clock(kind, model, cloud0, paths, cfg, step, record, on_divergence):
    run = _Runner(model, cloud0, paths, cfg.horizon, record, on_divergence)
    milstein = kind in MILSTEIN
    if milstein and model.milstein_correction is None:
        raise UnsupportedModelError(f"{model.name} has no Milstein correction operator")
    adaptive = kind in ADAPTIVE
    if adaptive:
        if step is None:
            raise ConfigError(f"{kind} needs a time-step function")
        step = step if step.delta == cfg.delta else step.with_delta(cfg.delta)
        if step.horizon != cfg.horizon:
            step = TimeStepFunction(step.h, step.delta, cfg.horizon, step.lower_law, step.floor, step.name)
    T = run.T
    h_unif = T / cfg.M if not adaptive else None
    t = 0.0
    mesh = [0.0]
    while t < T:
        idx = run.idx_all[run.live]
        if idx.size == 0:
            break
        x = run.x[idx]
        cache = coefficient_cache(run.x, model)
        if adaptive:
            hs = h_delta(step, x)
            h = float(np.min(hs))
            if not (h > 0 and np.isfinite(h)):
                raise StepFunctionError(f"shared step {h!r} is not positive")
        else:
            h = h_unif
        if T - (t + h) <= run.tol:
            h = T - t
            t_next = T
        else:
            t_next = t + h
        w_next = paths.sample(idx, np.full(idx.size, t_next))
        dw = w_next - run.w[idx]
        b = model.drift(t, x, cache, idx)
        sig = model.diffusion(t, x, cache, idx)
        if kind == "tamed_euler":
            b = tame(b, cfg.M ** (-cfg.alpha))
        elif kind == "tamed_milstein":
            b = tame(b, h)
        x_new = x + b * h + _apply_noise(sig, dw)
        lsig = None
        if milstein:
            corr, lsig = _milstein_term(model, x, dw, np.full(idx.size, h))
            x_new = x_new + corr
        x_new = model.post_step(x_new)
        run.commit(idx, t, t_next, x_new, b, sig, lsig)
        run.w[idx] = w_next
        t = t_next
        mesh.append(t)
        run.note_moment()
    return run.result(kind, mesh)


def run_uniform_euler(model, cloud0, paths, cfg, record=False, on_divergence="raise"):
    """Explicit Euler-Maruyama, ``M`` uniform steps, measure refreshed every step."""
    _expect(cfg, "uniform_euler")
    return _shared_clock("uniform_euler", model, cloud0, paths, cfg, None, record, on_divergence)


def run_tamed_euler(model, cloud0, paths, cfg, record=False, on_divergence="raise"):
    """Uniform Euler with drift ``b / (1 + M^-alpha |b|)``."""
    _expect(cfg, "tamed_euler")
    return _shared_clock("tamed_euler", model, cloud0, paths, cfg, None, record, on_divergence)


def run_scheme1(model, cloud0, paths, cfg, step, record=False, on_divergence="raise"):
    """Adaptive Euler; every particle advances by the cloud's minimum step."""
    _expect(cfg, "scheme1_adaptive_euler")
    return _shared_clock("scheme1_adaptive_euler", model, cloud0, paths, cfg, step, record, on_divergence)


def run_tamed_milstein(model, cloud0, paths, cfg, record=False, on_divergence="raise"):
    """Milstein (commutative noise) with drift tamed by ``1 + h|b|``."""
    _expect(cfg, "tamed_milstein")
    return _shared_clock("tamed_milstein", model, cloud0, paths, cfg, None, record, on_divergence)


def run_adaptive_milstein(model, cloud0, paths, cfg, step, record=False, on_divergence="raise"):
    """Milstein on the shared-minimum adaptive mesh."""
    _expect(cfg, "adaptive_milstein")
    return _shared_clock("adaptive_milstein", model, cloud0, paths, cfg, step, record, on_divergence)


def run_scheme2(model, cloud0, paths, cfg, step, record=False, on_divergence="raise"):
    """Adaptive Euler with per-particle steps and a measure frozen per block.

    Within block ``k`` every particle steps with ``min(h_delta(x), end - t)``
    against the snapshot taken at ``k*delta*T`` until it lands on the block
    end. All particles are iterated together; a particle drops out of the
    batch once it has landed.
    """
    _expect(cfg, "scheme2_adaptive_euler")
    if step is None:
        raise ConfigError("scheme2 needs a time-step function")
    step = step if step.delta == cfg.delta else step.with_delta(cfg.delta)
    if step.horizon != cfg.horizon:
        step = TimeStepFunction(step.h, step.delta, cfg.horizon, step.lower_law, step.floor, step.name)
    run = _Runner(model, cloud0, paths, cfg.horizon, record, on_divergence)
    T = run.T
    blocks = cfg.blocks
    clocks = np.zeros(run.n)
    mesh = [0.0]
    for k in range(blocks):
        start = k * T / blocks
        end = T if k == blocks - 1 else (k + 1) * T / blocks
        cache = coefficient_cache(run.x, model)
        clocks[:] = start
        active = run.idx_all[run.live]
        while active.size:
            x = run.x[active]
            ta = clocks[active]
            hs = h_delta(step, x)
            if not np.all(hs > 0):
                raise StepFunctionError("adaptive step is not positive")
            rem = end - ta
            land = hs >= rem - run.tol
            h = np.where(land, rem, hs)
            t_next = np.where(land, end, ta + h)
            w_next = paths.sample(active, t_next)
            dw = w_next - run.w[active]
            b = model.drift(ta, x, cache, active)
            sig = model.diffusion(ta, x, cache, active)
            x_new = model.post_step(x + b * h[:, None] + _apply_noise(sig, dw))
            run.commit(active, ta, t_next, x_new, b, sig)
            run.w[active] = w_next
            clocks[active] = t_next
            active = active[~land & run.live[active]]
        mesh.append(end)
        run.note_moment()
    return run.result("scheme2_adaptive_euler", mesh)


def _expect(cfg, kind):
    if cfg.kind != kind:
        raise ConfigError(f"expected a {kind} config, got {cfg.kind}")


_RUNNERS = {
    "uniform_euler": run_uniform_euler,
    "tamed_euler": run_tamed_euler,
    "scheme1_adaptive_euler": run_scheme1,
    "scheme2_adaptive_euler": run_scheme2,
    "tamed_milstein": run_tamed_milstein,
    "adaptive_milstein": run_adaptive_milstein,
}


def run_scheme(model, cloud0, paths, cfg: SchemeConfig, step: TimeStepFunction | None = None,
               record=False, on_divergence="raise") -> Trajectory:
    """Dispatch on ``cfg.kind``; ``step`` is required by the adaptive schemes."""
    fn = _RUNNERS[cfg.kind]
    if cfg.kind in ADAPTIVE:
        return fn(model, cloud0, paths, cfg, step, record=record, on_divergence=on_divergence)
    return fn(model, cloud0, paths, cfg, record=record, on_divergence=on_divergence)


def interpolate(traj: Trajectory, i: int, t: float, paths: BrownianPaths) -> np.ndarray:
    """Continuous interpolant of particle ``i`` at time ``t``.

    Uses the coefficients frozen at the last knot ``t_n <= t`` and the
    Brownian value ``W(t)`` from ``paths`` (bridging if ``t`` is new).
    Returns the knot state exactly when ``t`` is a knot.
    """
    if not 0.0 <= t <= traj.horizon:
        raise DomainError(f"t={t!r} outside [0, {traj.horizon}]")
    if not traj.records:
        raise DomainError("trajectory was not recorded; rerun with record=True")
    if t == traj.horizon:
        return traj.final[i].copy()
    seg = traj._segment(i, t)
    if seg is None:
        raise DomainError(f"no knot at or before t={t!r} for particle {i}")
    rec, j = seg
    tn = rec.t[j]
    xn = rec.x[j]
    if t == tn:
        return xn.copy()
    dw = paths.sample([i, i], [tn, t])
    dw = dw[1] - dw[0]
    out = xn + rec.drift[j] * (t - tn) + rec.sigma[j] @ dw
    if rec.lsigma is not None:
        k = dw.size
        q = np.outer(dw, dw) - (t - tn) * np.eye(k)
        out = out + 0.5 * np.einsum("mab,ab->m", rec.lsigma[j], q)
    return out
