"""Config-driven experiments: one TOML table in, CSV files plus ``meta.json`` out.

Keys shared by all experiments::

    experiment = "convergence"      # see EXPERIMENTS
    example = "ex2"                 # ex1 .. ex5
    N = 1000
    T = 1.0
    seed = 0
    output_dir = "out"
    [params]                        # model parameter overrides
    sigma = 1.5

A scheme is either its name or a table ``{kind = ..., delta/M/alpha = ...}``.
Convergence ladders fill in ``delta = 2^-l`` or ``M = ceil(2^l T)`` from
``levels = [lo, hi]``.
"""

from __future__ import annotations

import json
import math
import os
import platform
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import __version__
from .analysis import (
    LEVEL_HEADER,
    LevelLadder,
    density_rows,
    fit_order,
    fit_particle_rate,
    histogram_rows,
    initial_cloud,
    kde2d,
    level_rows,
    parallel_map,
    poc_strong_ladder,
    poc_weak,
    step_histogram,
    strong_rmse,
    write_csv,
)
from .core import ParticleCloud
from .errors import ConfigError, DivergenceError, DomainError
from .models import EXAMPLES, make_example
from .randomness import BrownianPaths, SeedSpec, default_backend
from .schemes import ADAPTIVE, KINDS, SchemeConfig, run_scheme
from .stepping import probe_lower_bound_law, probe_monotone_step_condition

EXPERIMENTS = ("convergence", "poc_weak", "poc_strong", "histogram", "density", "single_run", "probe")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_IO = 4

SCHEME_ALIASES = {"scheme1": "scheme1_adaptive_euler", "scheme2": "scheme2_adaptive_euler"}

COMMON_KEYS = {"experiment", "example", "N", "T", "seed", "output_dir", "params", "backend", "step"}
EXPERIMENT_KEYS = {
    "convergence": {"schemes", "levels", "component", "drop_coarsest"},
    "poc_weak": {"scheme", "particle_levels", "K"},
    "poc_strong": {"scheme", "particle_levels", "K"},
    "histogram": {"scheme", "bin_width"},
    "density": {"scheme", "components", "grid", "bandwidth"},
    "single_run": {"scheme", "expect_divergence"},
    "probe": {"samples", "radius", "kappa"},
}

PHI_NOTE = "phi(N) = N^-1/2 (d<4), N^-1/2 ln N (d=4), N^-2/d (d>4); ln is the natural logarithm"


def _scheme_table(spec) -> dict:
    if isinstance(spec, str):
        spec = {"kind": spec}
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError(f"scheme must be a name or a table with 'kind', got {spec!r}")
    spec = dict(spec)
    spec["kind"] = SCHEME_ALIASES.get(spec["kind"], spec["kind"])
    if spec["kind"] not in KINDS:
        raise ConfigError(f"unknown scheme {spec['kind']!r}; expected one of {', '.join(KINDS)}")
    unknown = sorted(set(spec) - {"kind", "delta", "M", "alpha"})
    if unknown:
        raise ConfigError(f"unknown scheme keys: {', '.join(unknown)}")
    return spec


def _parse_delta(v):
    # accepts 0.03125, "2^-5" or "1/32"
    if isinstance(v, str):
        s = v.replace(" ", "")
        try:
            if s.startswith("2^"):
                return 2.0 ** float(s[2:])
            if "/" in s:
                a, b = s.split("/")
                return float(a) / float(b)
            return float(s)
        except ValueError:
            raise ConfigError(f"cannot parse delta {v!r}") from None
    return float(v)


@dataclass
class ExperimentConfig:
    experiment: str
    example: str
    N: int = 1000
    T: float = 1.0
    seed: int = 0
    output_dir: str = "out"
    params: dict = field(default_factory=dict)
    backend: str | None = None
    step: str | None = None
    options: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        exp = raw.get("experiment")
        if exp not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {exp!r}; expected one of {', '.join(EXPERIMENTS)}")
        unknown = sorted(set(raw) - COMMON_KEYS - EXPERIMENT_KEYS[exp])
        if unknown:
            raise ConfigError(f"unknown keys for {exp}: {', '.join(unknown)}")
        if raw.get("example") not in EXAMPLES:
            raise ConfigError(f"unknown example {raw.get('example')!r}; expected one of {', '.join(EXAMPLES)}")
        try:
            n = int(raw.get("N", 1000))
            T = float(raw.get("T", 1.0))
            seed = int(raw.get("seed", 0))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad numeric value: {exc}") from None
        if n < 1:
            raise ConfigError("N must be at least 1")
        if not T > 0:
            raise ConfigError("T must be positive")
        params = raw.get("params", {}) or {}
        if not isinstance(params, dict):
            raise ConfigError("params must be a table")
        options = {k: raw[k] for k in EXPERIMENT_KEYS[exp] if k in raw}
        cfg = cls(exp, raw["example"], n, T, seed, str(raw.get("output_dir", "out")), dict(params),
                  raw.get("backend"), raw.get("step"), options)
        cfg.validate()
        return cfg

    def validate(self):
        # resolve everything once so errors surface before any work starts
        self.build(1)
        if self.backend not in (None, "cython", "python"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        if self.experiment == "convergence":
            if not self.options.get("schemes"):
                raise ConfigError("convergence needs a non-empty 'schemes' list")
            for s in self.options["schemes"]:
                _scheme_table(s)
            self.level_range()
        elif self.experiment != "probe":
            self.scheme()

    def build(self, n: int):
        return make_example(self.example, self.params, n=n, seed=SeedSpec(self.seed), horizon=self.T,
                            step=self.step)

    def level_range(self) -> list[int]:
        lv = self.options.get("levels", [3, 8])
        if not (isinstance(lv, list) and len(lv) == 2 and lv[0] < lv[1]):
            raise ConfigError("levels must be [lo, hi] with lo < hi")
        return list(range(int(lv[0]), int(lv[1]) + 1))

    def scheme(self) -> SchemeConfig:
        default = {
            "poc_weak": {"kind": "tamed_euler", "M": 256, "alpha": 0.5},
            "poc_strong": {"kind": "tamed_euler", "M": 256, "alpha": 0.5},
        }.get(self.experiment)
        spec = self.options.get("scheme", default)
        if spec is None:
            raise ConfigError(f"{self.experiment} needs a 'scheme'")
        t = _scheme_table(spec)
        return SchemeConfig(t["kind"], delta=None if "delta" not in t else _parse_delta(t["delta"]),
                            M=t.get("M"), alpha=t.get("alpha"), horizon=self.T)

    def as_dict(self) -> dict:
        d = asdict(self)
        opts = d.pop("options")
        d.update(opts)
        return d


@dataclass
class ExitReport:
    status: int
    outputs: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    failure: dict | None = None


def _ladder(spec: dict, levels, seed: SeedSpec, T: float) -> LevelLadder:
    kind = spec["kind"]
    if kind in ADAPTIVE:
        return LevelLadder.adaptive(kind, levels, seed, T)
    return LevelLadder.uniform(kind, levels, seed, T, alpha=spec.get("alpha"))


def _convergence_task(task):
    cfg, spec = task
    seed = SeedSpec(cfg.seed)
    ex = cfg.build(cfg.N)
    comp = cfg.options.get("component")
    errs = strong_rmse(_ladder(spec, cfg.level_range(), seed, cfg.T), ex.model, cfg.N, ex.step,
                       ex.initial_law, component=comp, backend=cfg.backend)
    return errs


def _label(spec: dict) -> str:
    s = spec["kind"]
    if "alpha" in spec:
        s += f"(alpha={spec['alpha']:g})"
    return s


def _run_convergence(cfg, out, workers):
    specs = [_scheme_table(s) for s in cfg.options["schemes"]]
    results = parallel_map(_convergence_task, [(cfg, s) for s in specs], workers)
    rows, summary = [], {}
    drop = bool(cfg.options.get("drop_coarsest", False))
    for spec, errs in zip(specs, results):
        label = _label(spec)
        rows.extend(level_rows(label, errs))
        try:
            fit = fit_order(errs, drop_coarsest=drop)
            summary[label] = {"slope": fit.slope, "intercept": fit.intercept, "r2": fit.r2}
        except DomainError as exc:
            summary[label] = {"slope": None, "note": str(exc)}
    path = os.path.join(out, "convergence.csv")
    write_csv(path, LEVEL_HEADER, rows)
    return [path], summary


def _particle_levels(cfg, default):
    lv = cfg.options.get("particle_levels", default)
    if not (isinstance(lv, list) and len(lv) == 2 and lv[0] < lv[1]):
        raise ConfigError("particle_levels must be [lo, hi] with lo < hi")
    return [2**k for k in range(int(lv[0]), int(lv[1]) + 1)]


def _poc_example(cfg, nmax):
    return cfg.build(nmax)


def _run_poc_weak(cfg, out, workers):
    ns = _particle_levels(cfg, [5, 10])
    K = int(cfg.options.get("K", 50))
    ex = _poc_example(cfg, ns[-1])
    sc = cfg.scheme()
    res = poc_weak(ex.model, sc, ns, K, SeedSpec(cfg.seed), ex.initial_law, ex.step, workers, cfg.backend)
    path = os.path.join(out, "poc_weak.csv")
    write_csv(path, ("N", "weak_error", "log2_N", "log2_error"),
              [(n, e, math.log2(n), math.log2(e) if e > 0 else float("nan")) for n, e in res])
    fit = fit_particle_rate(res)
    return [path], {"slope": fit.slope, "r2": fit.r2, "K": K, "scheme": sc.label}


def _run_poc_strong(cfg, out, workers):
    ns = _particle_levels(cfg, [6, 10])
    K = int(cfg.options.get("K", 1))
    ex = _poc_example(cfg, ns[-1])
    sc = cfg.scheme()
    res = poc_strong_ladder(ex.model, sc, ns, SeedSpec(cfg.seed), ex.initial_law, ex.step, workers,
                            cfg.backend, K=K)
    path = os.path.join(out, "poc_strong.csv")
    write_csv(path, ("N", "strong_error", "log2_N", "log2_error"),
              [(n, e, math.log2(n), math.log2(e) if e > 0 else float("nan")) for n, e in res])
    fit = fit_particle_rate(res)
    return [path], {"slope": fit.slope, "r2": fit.r2, "K": K, "scheme": sc.label}


def _single(cfg, on_divergence="raise"):
    seed = SeedSpec(cfg.seed)
    ex = cfg.build(cfg.N)
    sc = cfg.scheme()
    x0 = initial_cloud(ex.initial_law, seed, cfg.N, ex.model.dim_state)
    paths = BrownianPaths(seed, cfg.N, ex.model.dim_noise, cfg.T, backend=cfg.backend)
    return ex, sc, run_scheme(ex.model, ParticleCloud(x0), paths, sc, ex.step, on_divergence=on_divergence)


def _run_histogram(cfg, out, workers):
    _, sc, traj = _single(cfg)
    bw = int(cfg.options.get("bin_width", 1))
    h = step_histogram(traj, bw)
    path = os.path.join(out, "histogram.csv")
    write_csv(path, ("bin_lo", "bin_hi", "count"), histogram_rows(h))
    return [path], {"mean_steps": h.mean, "max_steps": h.max, "bin_width": bw, "scheme": sc.label}


def _run_density(cfg, out, workers):
    ex, sc, traj = _single(cfg)
    comps = list(cfg.options.get("components", [0, 1]))
    if len(comps) != 2 or not all(0 <= c < ex.model.dim_state for c in comps):
        raise ConfigError(f"components must name two of the {ex.model.dim_state} state coordinates")
    if ex.model.dim_state == 1:
        raise ConfigError("density needs a model with at least two state coordinates")
    g = kde2d(traj.final[:, comps], cfg.options.get("bandwidth"), int(cfg.options.get("grid", 128)))
    path = os.path.join(out, "density.csv")
    write_csv(path, ("x", "y", "density"), density_rows(g))
    return [path], {"integral": g.integral(), "bandwidth": list(g.bandwidth), "grid": g.x.size,
                    "scheme": sc.label}


def _run_single(cfg, out, workers):
    expect = bool(cfg.options.get("expect_divergence", False))
    ex, sc, traj = _single(cfg, on_divergence="report")
    d = ex.model.dim_state
    path = os.path.join(out, "single_run.csv")
    header = ("particle", *[f"x{m}" for m in range(d)], "steps", "corrupted", "corruption_time")
    rows = ((i, *traj.final[i], int(traj.step_counts[i]), int(traj.corrupted[i]),
             traj.corruption_times[i]) for i in range(traj.n_particles))
    write_csv(path, header, rows)
    summary = {"scheme": sc.label, "corrupted": traj.n_corrupted, "mean_steps": traj.mean_steps(),
               "max_second_moment": traj.max_second_moment, "expect_divergence": expect}
    if d == 3:
        summary["y_range"] = [float(traj.final[:, 2].min()), float(traj.final[:, 2].max())]
    failure = None
    if traj.n_corrupted and not expect:
        first = int(np.nanargmin(np.where(traj.corrupted, traj.corruption_times, np.inf)))
        failure = {"kind": "divergence", "particle": first,
                   "time": float(traj.corruption_times[first]), "corrupted": traj.n_corrupted}
    return [path], summary, failure


def _run_probe(cfg, out, workers):
    ex = cfg.build(cfg.N)
    samples = int(cfg.options.get("samples", 10_000))
    radius = float(cfg.options.get("radius", 1e3))
    kappas = cfg.options.get("kappa", [0.5, 1.5])
    reports = [probe_monotone_step_condition(ex.step, ex.model, samples, radius, float(k), seed=cfg.seed)
               for k in np.atleast_1d(kappas)]
    if ex.step.lower_law is not None:
        reports.append(probe_lower_bound_law(ex.step, samples, radius, cfg.seed, ex.model.dim_state))
    path = os.path.join(out, "probe.csv")
    write_csv(path, ("probe", "kappa", "samples", "violations", "passed"),
              [(r.name, r.constants.get("kappa", ""), r.samples, r.violations, int(r.passed))
               for r in reports])
    return [path], {"reports": [r.as_dict() for r in reports]}


_RUNNERS = {
    "convergence": _run_convergence,
    "poc_weak": _run_poc_weak,
    "poc_strong": _run_poc_strong,
    "histogram": _run_histogram,
    "density": _run_density,
    "single_run": _run_single,
    "probe": _run_probe,
}


def _versions():
    return {"mvsde": __version__, "numpy": np.__version__, "python": platform.python_version(),
            "brownian_backend": default_backend()}


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> ExitReport:
    """Run ``cfg`` and write its CSV plus ``meta.json`` into ``cfg.output_dir``.

    Divergence that the recipe does not expect gives status 3 with a
    failure record; OS errors propagate to the caller.
    """
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    t0 = time.perf_counter()
    failure = None
    outputs: list = []
    summary: dict = {}
    try:
        res = _RUNNERS[cfg.experiment](cfg, out, workers)
        outputs, summary = res[0], res[1]
        if len(res) > 2:
            failure = res[2]
    except DivergenceError as exc:
        failure = {"kind": "divergence", "particle": exc.particle, "time": exc.time, "message": str(exc)}
    status = EXIT_DIVERGENCE if failure else EXIT_OK
    meta = {
        "experiment": cfg.experiment,
        "status": status,
        "seed": cfg.seed,
        "versions": _versions(),
        "wall_time_s": time.perf_counter() - t0,
        "parameters": cfg.as_dict(),
        "resolved_params": cfg.build(1).params,
        "phi_log_base": PHI_NOTE,
        "outputs": [os.path.basename(p) for p in outputs],
        "summary": summary,
        "failure": failure,
    }
    with open(os.path.join(out, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, default=_json_default, sort_keys=True)
        fh.write("\n")
    return ExitReport(status, outputs, summary, failure)
