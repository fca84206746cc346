"""Estimators for convergence and propagation-of-chaos experiments.

Strong errors are measured between adjacent levels of a ladder run on one
shared bundle of Brownian paths: the finer level bridges between the knots
the coarser level already drew, so the two solutions are driven by the same
Brownian motion. Particle-count studies rely on the seeding contract
instead: particle ``i`` of every system built from the same seed uses the
same Brownian stream and the same initial value.
"""

from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import McKeanVlasovModel, ParticleCloud
from .errors import ConfigError, DimensionError, DomainError
from .randomness import BrownianPaths, InitialLaw, SeedSpec, gaussian_initials
from .schemes import ADAPTIVE, SchemeConfig, Trajectory, run_scheme
from .stepping import TimeStepFunction


def parallel_map(fn, tasks, workers: int = 1) -> list:
    """``[fn(t) for t in tasks]``, optionally over a process pool; order is kept."""
    tasks = list(tasks)
    if workers is None or workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


def initial_cloud(law, seed: SeedSpec, n: int, dim: int) -> np.ndarray:
    """Initial states from a law, or an explicit ``(n, d)`` array passed through."""
    if isinstance(law, InitialLaw):
        return gaussian_initials(seed, law, n, dim)
    x0 = np.asarray(law, dtype=float)
    if x0.ndim == 1:
        x0 = x0[:, None]
    if x0.shape != (n, dim):
        raise DimensionError(f"initial states have shape {x0.shape}, expected {(n, dim)}")
    return x0.copy()


# ---------------------------------------------------------------- ladders


@dataclass(frozen=True)
class LevelLadder:
    """Levels ``l`` with their scheme configs, all run on paths from ``seed``.

    ``level_seeds`` may list the seed each level was meant to use; the
    levels are only coupled if they all agree with ``seed``.
    """

    levels: tuple
    seed: SeedSpec = field(default_factory=SeedSpec)
    level_seeds: tuple | None = None

    def __post_init__(self):
        levels = tuple((int(l), cfg) for l, cfg in self.levels)
        object.__setattr__(self, "levels", levels)
        if len(levels) < 1:
            raise ConfigError("a ladder needs at least one level")
        ls = [l for l, _ in levels]
        if any(b <= a for a, b in zip(ls, ls[1:])):
            raise ConfigError("ladder levels must be strictly increasing")
        horizons = {cfg.horizon for _, cfg in levels}
        if len(horizons) != 1:
            raise ConfigError("all levels must share the horizon T")
        if self.level_seeds is not None:
            if len(self.level_seeds) != len(levels):
                raise ConfigError("one seed per level expected")
            if any(s != self.seed for s in self.level_seeds):
                raise ConfigError("levels use different seeds; their Brownian paths would not be coupled")

    @classmethod
    def adaptive(cls, kind: str, levels, seed: SeedSpec | None = None, horizon: float = 1.0):
        """``delta = 2^-l`` per level."""
        if kind not in ADAPTIVE:
            raise ConfigError(f"{kind} is not an adaptive scheme")
        return cls(tuple((l, SchemeConfig(kind, delta=2.0**-l, horizon=horizon)) for l in levels),
                   seed or SeedSpec())

    @classmethod
    def uniform(cls, kind: str, levels, seed: SeedSpec | None = None, horizon: float = 1.0,
                alpha: float | None = None):
        """``M_l = ceil(2^l T)`` per level (``alpha`` only for tamed Euler)."""
        if kind in ADAPTIVE:
            raise ConfigError(f"{kind} is not a uniform scheme")
        return cls(tuple((l, SchemeConfig(kind, M=int(math.ceil(2.0**l * horizon)), alpha=alpha,
                                          horizon=horizon)) for l in levels),
                   seed or SeedSpec())

    @property
    def horizon(self) -> float:
        return self.levels[0][1].horizon

    def __len__(self):
        return len(self.levels)


@dataclass(frozen=True)
class LevelError:
    level: int
    param: float  # delta or M of the finer level
    avg_step: float
    rmse: float
    mean_steps: float


def _scheme_param(cfg: SchemeConfig) -> float:
    return float(cfg.delta) if cfg.kind in ADAPTIVE else float(cfg.M)


def _distance(a: np.ndarray, b: np.ndarray, component: int | None) -> float:
    diff = a - b
    if component is not None:
        diff = diff[:, [component]]
    return float(np.sqrt(np.mean(np.sum(diff * diff, axis=1))))


def strong_rmse(ladder: LevelLadder, model: McKeanVlasovModel, N: int,
                step: TimeStepFunction | None = None, initial=None,
                component: int | None = None, on_divergence: str = "raise",
                backend: str | None = None) -> list[LevelError]:
    """RMSE between adjacent levels of ``ladder`` on one shared path bundle.

    Returns one :class:`LevelError` per adjacent pair ``(l-1, l)``, carrying
    the harmonic-mean step of level ``l``. The error is the Euclidean norm of
    the full state unless ``component`` selects one coordinate.
    """
    if len(ladder) < 2:
        raise ConfigError("strong_rmse needs at least two levels")
    if N < 1:
        raise DomainError("N must be positive")
    if component is not None and not 0 <= component < model.dim_state:
        raise DimensionError(f"component {component} out of range for d={model.dim_state}")
    T = ladder.horizon
    law = initial if initial is not None else InitialLaw.point(np.zeros(model.dim_state))
    x0 = initial_cloud(law, ladder.seed, N, model.dim_state)
    paths = BrownianPaths(ladder.seed, N, model.dim_noise, T, backend=backend)
    finals = []
    for _, cfg in ladder.levels:
        traj = run_scheme(model, ParticleCloud(x0), paths, cfg, step, on_divergence=on_divergence)
        finals.append(traj)
    out = []
    for (l, cfg), prev, cur in zip(ladder.levels[1:], finals[:-1], finals[1:]):
        out.append(LevelError(l, _scheme_param(cfg), cur.average_step(),
                              _distance(cur.final, prev.final, component), cur.mean_steps()))
    return out


@dataclass(frozen=True)
class OrderFit:
    slope: float
    intercept: float
    r2: float
    n_points: int

    def __iter__(self):
        return iter((self.slope, self.intercept, self.r2))


def fit_order(points, drop_coarsest: bool = False) -> OrderFit:
    """Least-squares fit of ``log rmse`` on ``log avg_step``; the slope is the order.

    ``points`` are ``(avg_step, rmse)`` pairs or :class:`LevelError` records.
    Points with a non-positive error carry no order information and are
    dropped with a warning.
    """
    pts = [(p.avg_step, p.rmse) if isinstance(p, LevelError) else (float(p[0]), float(p[1]))
           for p in points]
    if drop_coarsest and pts:
        coarsest = max(range(len(pts)), key=lambda j: pts[j][0])
        pts = pts[:coarsest] + pts[coarsest + 1:]
    keep = [(h, e) for h, e in pts if e > 0 and h > 0 and math.isfinite(e)]
    if len(keep) < len(pts):
        warnings.warn(f"fit_order: dropped {len(pts) - len(keep)} non-positive point(s)", RuntimeWarning,
                      stacklevel=2)
    if len(keep) < 3:
        raise DomainError("fit_order needs at least 3 positive points")
    lx = np.log([h for h, _ in keep])
    ly = np.log([e for _, e in keep])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return OrderFit(float(slope), float(intercept), r2, len(keep))


def compare_at_matched_steps(first: list[LevelError], second: list[LevelError]):
    """``(avg_step, rmse_first, rmse_second, ratio)`` at each step of ``first``.

    The second ladder is interpolated linearly in ``log avg_step`` /
    ``log rmse``; steps of ``first`` outside its range are skipped.
    """
    h2 = np.log([e.avg_step for e in second])
    r2 = np.log([e.rmse for e in second])
    order = np.argsort(h2)
    h2, r2 = h2[order], r2[order]
    out = []
    for e in first:
        lh = math.log(e.avg_step)
        if h2[0] <= lh <= h2[-1]:
            other = float(np.exp(np.interp(lh, h2, r2)))
            out.append((e.avg_step, e.rmse, other, e.rmse / other))
    return out


def fit_particle_rate(points) -> OrderFit:
    """Slope of ``log error`` against ``log N`` for ``(N, error)`` pairs."""
    return fit_order([(float(n), float(e)) for n, e in points])


# ----------------------------------------------------- propagation of chaos


@dataclass(frozen=True)
class SystemSpec:
    """Everything needed to rebuild one particle system in a worker process."""

    model: McKeanVlasovModel
    cfg: SchemeConfig
    initial: object
    step: TimeStepFunction | None = None
    backend: str | None = None


def _run_system(spec: SystemSpec, seed: SeedSpec, n: int, offset: int = 0,
                x0_full: np.ndarray | None = None) -> Trajectory:
    labels = np.arange(offset, offset + n)
    model = spec.model.subset(labels)
    if x0_full is None:
        x0_full = initial_cloud(spec.initial, seed, offset + n, spec.model.dim_state)
    x0 = x0_full[offset:offset + n]
    paths = BrownianPaths(seed, n, spec.model.dim_noise, spec.cfg.horizon, offset=offset,
                          backend=spec.backend)
    return run_scheme(model, ParticleCloud(x0), paths, spec.cfg, spec.step, on_divergence="raise")


def _weak_repetition(task):
    spec, seed, ladder = task
    x0 = initial_cloud(spec.initial, seed, ladder[-1], spec.model.dim_state)
    return [_run_system(spec, seed, n, 0, x0).final.mean(axis=0) for n in ladder]


def check_nested(ladder) -> list[int]:
    ladder = [int(n) for n in ladder]
    if len(ladder) < 2:
        raise ConfigError("a particle ladder needs at least two sizes")
    if ladder[0] < 1:
        raise ConfigError("particle counts must be positive")
    for a, b in zip(ladder, ladder[1:]):
        if b != 2 * a and b != a:
            raise ConfigError(f"particle ladder is not nested by doubling ({a} -> {b})")
    return ladder


def poc_weak(model: McKeanVlasovModel, cfg: SchemeConfig, particle_ladder, K: int = 50,
             seed: SeedSpec | None = None, initial=None, step: TimeStepFunction | None = None,
             workers: int = 1, backend: str | None = None) -> list[tuple[int, float]]:
    """Weak particle-count error between nested systems of sizes ``N_l`` and ``N_{l+1}``.

    Repetition ``j`` runs every system of the ladder on seed replicate ``j``;
    the ``N_l`` system's Brownian motions and initial values are the first
    ``N_l`` of the larger one's. Returns ``(N_l, |mean_j (m_l - m_{l+1})|)``,
    with ``m`` the empirical mean of the final states (Euclidean norm for
    ``d > 1``).
    """
    ladder = check_nested(particle_ladder)
    if K < 1:
        raise ConfigError("K must be at least 1")
    seed = seed or SeedSpec()
    law = initial if initial is not None else InitialLaw.point(np.zeros(model.dim_state))
    spec = SystemSpec(model, cfg, law, step, backend)
    tasks = [(spec, seed.with_replicate(j), ladder) for j in range(K)]
    means = np.array(parallel_map(_weak_repetition, tasks, workers))  # (K, L, d)
    diffs = means[:, :-1, :] - means[:, 1:, :]
    err = np.linalg.norm(diffs.mean(axis=0), axis=1)
    return [(n, float(e)) for n, e in zip(ladder[:-1], err)]


def _strong_task(task):
    spec, seed, n = task
    x0 = initial_cloud(spec.initial, seed, n, spec.model.dim_state)
    full = _run_system(spec, seed, n, 0, x0).final
    h = n // 2
    first = _run_system(spec, seed, h, 0, x0).final
    second = _run_system(spec, seed, h, h, x0).final
    return _distance(full, np.vstack([first, second]), None)


def _strong_tasks(spec, seed, ns, K):
    return [(spec, seed.with_replicate(j), n) for n in ns for j in range(K)]


def _pool_strong(errs, ns, K):
    # root of the mean square over repetitions, per N
    e = np.asarray(errs).reshape(len(ns), K)
    return [float(v) for v in np.sqrt(np.mean(e * e, axis=1))]


def poc_strong(model: McKeanVlasovModel, cfg: SchemeConfig, N: int, seed: SeedSpec | None = None,
               initial=None, step: TimeStepFunction | None = None,
               backend: str | None = None, K: int = 1) -> float:
    """Pathwise distance between an ``N``-system and its two independent halves.

    The halves use the first and second ``N/2`` Brownian motions and initial
    values of the full system. With ``K > 1`` the squared distance is
    averaged over ``K`` seed replicates before taking the root.
    """
    if N < 2 or N % 2:
        raise DomainError("poc_strong needs an even N >= 2")
    if K < 1:
        raise ConfigError("K must be at least 1")
    seed = seed or SeedSpec()
    law = initial if initial is not None else InitialLaw.point(np.zeros(model.dim_state))
    spec = SystemSpec(model, cfg, law, step, backend)
    errs = [_strong_task(t) for t in _strong_tasks(spec, seed, [int(N)], K)]
    return _pool_strong(errs, [N], K)[0]


def poc_strong_ladder(model, cfg, particle_ladder, seed=None, initial=None, step=None,
                      workers: int = 1, backend: str | None = None,
                      K: int = 1) -> list[tuple[int, float]]:
    """:func:`poc_strong` for every ``N`` of a ladder."""
    seed = seed or SeedSpec()
    law = initial if initial is not None else InitialLaw.point(np.zeros(model.dim_state))
    spec = SystemSpec(model, cfg, law, step, backend)
    ns = [int(n) for n in particle_ladder]
    for n in ns:
        if n < 2 or n % 2:
            raise DomainError("poc_strong needs even particle counts")
    if K < 1:
        raise ConfigError("K must be at least 1")
    errs = parallel_map(_strong_task, _strong_tasks(spec, seed, ns, K), workers)
    return list(zip(ns, _pool_strong(errs, ns, K)))


# --------------------------------------------------------------- histograms


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    mean: float
    max: int


def step_histogram(traj: Trajectory | np.ndarray, bin_width: int = 1) -> Histogram:
    """Counts of particles per bin of ``bin_width`` step counts ``N_T^i``."""
    if int(bin_width) != bin_width or bin_width < 1:
        raise DomainError("bin_width must be a positive integer")
    bw = int(bin_width)
    counts = np.asarray(traj.step_counts if isinstance(traj, Trajectory) else traj, dtype=np.int64)
    lo = (counts.min() // bw) * bw
    hi = (counts.max() // bw + 1) * bw
    edges = np.arange(lo, hi + 1, bw)
    hist = np.bincount((counts - lo) // bw, minlength=edges.size - 1)
    return Histogram(edges, hist, float(counts.mean()), int(counts.max()))


# ----------------------------------------------------------------- density


@dataclass(frozen=True)
class DensityGrid:
    """Density values ``density[iy, ix]`` on the grid ``x`` by ``y``."""

    x: np.ndarray
    y: np.ndarray
    density: np.ndarray
    bandwidth: tuple

    def integral(self) -> float:
        return float(_trapezoid(_trapezoid(self.density, self.x, axis=1), self.y))

    def at(self, x: float, y: float) -> float:
        """Bilinear interpolation of the grid (zero outside)."""
        if not (self.x[0] <= x <= self.x[-1] and self.y[0] <= y <= self.y[-1]):
            return 0.0
        i = min(int(np.searchsorted(self.x, x, side="right")) - 1, self.x.size - 2)
        j = min(int(np.searchsorted(self.y, y, side="right")) - 1, self.y.size - 2)
        fx = (x - self.x[i]) / (self.x[i + 1] - self.x[i])
        fy = (y - self.y[j]) / (self.y[j + 1] - self.y[j])
        d = self.density
        return float((1 - fy) * ((1 - fx) * d[j, i] + fx * d[j, i + 1])
                     + fy * ((1 - fx) * d[j + 1, i] + fx * d[j + 1, i + 1]))


_trapezoid = getattr(np, "trapezoid", None) or np.trapz

GRID_PAD = 4.0  # bandwidths of padding beyond the sample range


def silverman_bandwidth(v: np.ndarray, dim: int = 2) -> float:
    n = v.size
    return float(np.std(v, ddof=1) * (4.0 / (dim + 2)) ** (1.0 / (dim + 4)) * n ** (-1.0 / (dim + 4)))


def _kernel_rows(samples, grid, bw):
    z = (grid[None, :] - samples[:, None]) / bw
    return np.exp(-0.5 * z * z) / (bw * math.sqrt(2.0 * math.pi))


def kde2d(samples, bandwidth=None, grid: int = 128, chunk: int = 8192) -> DensityGrid:
    """Gaussian product-kernel density of ``(n, 2)`` samples on a ``grid x grid`` mesh.

    The default bandwidth is Silverman's rule per axis. An axis with zero
    spread has no bandwidth of its own; it gets a narrow kernel (1e-3 of the
    other axis' bandwidth) so the density is, in effect, the 1-d estimate of
    the other axis times a spike.
    """
    s = np.asarray(samples, dtype=float)
    if s.ndim != 2 or s.shape[1] != 2:
        raise DimensionError("kde2d needs samples of shape (n, 2)")
    if s.shape[0] < 2:
        raise DomainError("kde2d needs at least two samples")
    if not np.all(np.isfinite(s)):
        raise DomainError("kde2d needs finite samples")
    if grid < 2:
        raise DomainError("grid needs at least 2 points per axis")
    if bandwidth is None:
        bw = [silverman_bandwidth(s[:, a]) if np.ptp(s[:, a]) > 0 else 0.0 for a in (0, 1)]
    else:
        bw = list(np.broadcast_to(np.asarray(bandwidth, dtype=float), (2,)))
        if any(b <= 0 for b in bw):
            raise DomainError("bandwidths must be positive")
    if min(bw) == 0.0:
        degenerate = [a for a in (0, 1) if bw[a] == 0.0]
        warnings.warn(f"kde2d: zero variance along axis {degenerate}; using a 1-d estimate",
                      RuntimeWarning, stacklevel=2)
        if len(degenerate) == 2:
            fallback = 1e-3 * max(1.0, float(np.max(np.abs(s))))
            bw = [fallback, fallback]
        else:
            bw = [b if b > 0 else 1e-3 * max(bw) for b in bw]
    axes = [np.linspace(s[:, a].min() - GRID_PAD * bw[a], s[:, a].max() + GRID_PAD * bw[a], grid)
            for a in (0, 1)]
    dens = np.zeros((grid, grid))
    for lo in range(0, s.shape[0], chunk):
        kx = _kernel_rows(s[lo:lo + chunk, 0], axes[0], bw[0])
        ky = _kernel_rows(s[lo:lo + chunk, 1], axes[1], bw[1])
        dens += ky.T @ kx
    dens /= s.shape[0]
    return DensityGrid(axes[0], axes[1], dens, (float(bw[0]), float(bw[1])))


# ---------------------------------------------------------------------- CSV


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def level_rows(scheme: str, errors: list[LevelError]):
    for e in errors:
        yield (scheme, e.level, e.param, e.avg_step, e.rmse, e.mean_steps,
               math.log2(e.avg_step), math.log2(e.rmse) if e.rmse > 0 else float("nan"))


LEVEL_HEADER = ("scheme", "level", "delta_or_M", "avg_step", "rmse", "mean_steps",
                "log2_avg_step", "log2_rmse")


def histogram_rows(h: Histogram):
    for lo, hi, c in zip(h.edges[:-1], h.edges[1:], h.counts):
        yield (int(lo), int(hi), int(c))


def density_rows(g: DensityGrid):
    for j, y in enumerate(g.y):
        for i, x in enumerate(g.x):
            yield (x, y, g.density[j, i])
