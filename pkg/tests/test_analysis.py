import math
import warnings

import numpy as np
import pytest

from mvsde.analysis import (
    LevelError,
    LevelLadder,
    check_nested,
    fit_order,
    fit_particle_rate,
    kde2d,
    poc_strong,
    poc_strong_ladder,
    poc_weak,
    step_histogram,
    strong_rmse,
)
from mvsde.errors import ConfigError, DomainError
from mvsde.models import make_example
from mvsde.randomness import BrownianPaths, InitialLaw, SeedSpec
from mvsde.schemes import SchemeConfig, run_scheme
from toy_models import Affine, brownian


def test_identical_levels_rmse_zero():
    ex = make_example("ex2", n=64)
    cfg = SchemeConfig("scheme2_adaptive_euler", delta=2**-4)
    ladder = LevelLadder(((3, cfg), (4, cfg)), SeedSpec(1))
    (err,) = strong_rmse(ladder, ex.model, 64, ex.step, ex.initial_law)
    assert err.rmse == 0.0


def test_brownian_levels_telescope():
    ladder = LevelLadder.adaptive("scheme2_adaptive_euler", [2, 4, 6], SeedSpec(2))
    from mvsde.stepping import TimeStepFunction

    step = TimeStepFunction(lambda x: 1.0 / (1.0 + x[:, 0] ** 2), 1.0)
    errs = strong_rmse(ladder, brownian(), 100, step)
    # the sum of increments equals W(T) up to rounding in the running sum
    assert all(e.rmse < 1e-14 for e in errs)
    uni = LevelLadder.uniform("uniform_euler", [1, 3, 5], SeedSpec(2))
    assert all(e.rmse < 1e-14 for e in strong_rmse(uni, brownian(), 100))


def test_ladder_validation():
    cfg = SchemeConfig("uniform_euler", M=4)
    with pytest.raises(ConfigError):
        LevelLadder(((2, cfg), (2, cfg)))
    with pytest.raises(ConfigError):
        LevelLadder(((1, cfg), (2, cfg)), SeedSpec(1), level_seeds=(SeedSpec(1), SeedSpec(2)))
    with pytest.raises(ConfigError):
        LevelLadder.adaptive("uniform_euler", [1, 2])
    assert [c.M for _, c in LevelLadder.uniform("tamed_euler", [3, 4], alpha=0.5).levels] == [8, 16]
    with pytest.raises(ConfigError):
        strong_rmse(LevelLadder(((1, cfg),)), brownian(), 4)


def test_rmse_component_selection():
    ex = make_example("ex4", n=32)
    ladder = LevelLadder.adaptive("scheme2_adaptive_euler", [3, 4], SeedSpec(3))
    full = strong_rmse(ladder, ex.model, 32, ex.step, ex.initial_law)[0].rmse
    parts = [strong_rmse(ladder, ex.model, 32, ex.step, ex.initial_law, component=c)[0].rmse
             for c in range(3)]
    assert full == pytest.approx(math.sqrt(sum(p * p for p in parts)), rel=1e-12)


def test_fit_order_exact_power_laws():
    hs = 2.0 ** -np.arange(3, 9)
    slope, intercept, r2 = fit_order([(h, 3.0 * h) for h in hs])
    assert slope == pytest.approx(1.0, abs=1e-12) and r2 == pytest.approx(1.0, abs=1e-12)
    assert intercept == pytest.approx(math.log(3.0), abs=1e-12)
    assert fit_order([(h, 0.2 * h**0.5) for h in hs]).slope == pytest.approx(0.5, abs=1e-12)


def test_fit_order_scale_equivariance():
    rng = np.random.default_rng(0)
    pts = [(h, h**0.7 * math.exp(rng.normal(0, 0.1))) for h in 2.0 ** -np.arange(3, 9)]
    base = fit_order(pts)
    scaled = fit_order([(h, 42.0 * e) for h, e in pts])
    assert scaled.slope == pytest.approx(base.slope, abs=1e-12)
    assert scaled.r2 == pytest.approx(base.r2, abs=1e-12)


def test_fit_order_drops_nonpositive():
    pts = [LevelError(l, 0, 2.0**-l, 2.0**-l, 0) for l in range(3, 7)] + [(1e-3, 0.0)]
    with pytest.warns(RuntimeWarning):
        fit = fit_order(pts)
    assert fit.n_points == 4
    with pytest.raises(DomainError):
        fit_order([(0.1, 1.0), (0.2, 2.0)])
    assert fit_order(pts[:4], drop_coarsest=True).n_points == 3


def test_fit_particle_rate():
    assert fit_particle_rate([(n, n**-1.0) for n in (32, 64, 128, 256)]).slope == pytest.approx(-1.0)


def test_check_nested():
    assert check_nested([4, 8, 16]) == [4, 8, 16]
    assert check_nested([4, 4]) == [4, 4]
    with pytest.raises(ConfigError):
        check_nested([4, 12])


def test_poc_weak_gaussian_oracle():
    # b = 0, sigma = 1, X_0 = 0, one Euler step: the final cloud is W(1) exactly
    cfg = SchemeConfig("uniform_euler", M=1)
    ladder = [4, 8, 16, 32]
    K = 20
    got = poc_weak(brownian(), cfg, ladder, K=K, seed=SeedSpec(3))
    diffs = []
    for j in range(K):
        w = BrownianPaths(SeedSpec(3, replicate=j), ladder[-1], 1).sample_all(1.0)[:, 0]
        m = [w[:n].mean() for n in ladder]
        diffs.append([a - b for a, b in zip(m, m[1:])])
    expect = np.abs(np.mean(diffs, axis=0))
    assert [n for n, _ in got] == ladder[:-1]
    assert np.allclose([e for _, e in got], expect, rtol=1e-12, atol=1e-15)


def test_poc_weak_error_scale():
    # |mean_j(m_N - m_2N)| has standard deviation 1/sqrt(2 N K)
    cfg = SchemeConfig("uniform_euler", M=1)
    K, N = 100, 512
    ((_, err),) = poc_weak(brownian(), cfg, [N, 2 * N], K=K, seed=SeedSpec(9))
    assert err < 4.0 / math.sqrt(2 * N * K)


def test_poc_weak_equal_sizes_zero():
    ex = make_example("ex2", n=16)
    cfg = SchemeConfig("tamed_euler", M=16, alpha=0.5)
    ((_, err),) = poc_weak(ex.model, cfg, [16, 16], K=1, initial=ex.initial_law)
    assert err == 0.0


def test_poc_strong_trivial_cases():
    cfg = SchemeConfig("uniform_euler", M=8)
    assert poc_strong(brownian(), cfg, 2, SeedSpec(1)) == 0.0
    assert poc_strong(brownian(), cfg, 64, SeedSpec(1), K=3) == 0.0
    free = Affine(a=-1.0, e=0.2, g=0.3)
    assert poc_strong(free, cfg, 2, SeedSpec(1), initial=InitialLaw.normal(0.0, 1.0)) == 0.0
    interacting = Affine(a=-1.0, c=1.0, s=1.0)
    assert poc_strong(interacting, cfg, 64, SeedSpec(1), initial=InitialLaw.normal(0.0, 1.0)) > 0
    with pytest.raises(DomainError):
        poc_strong(brownian(), cfg, 7)
    with pytest.raises(DomainError):
        poc_strong_ladder(brownian(), cfg, [8, 9])


def test_poc_workers_reproducible():
    ex = make_example("ex1")
    cfg = SchemeConfig("tamed_euler", M=32, alpha=0.5)
    a = poc_weak(ex.model, cfg, [8, 16, 32], K=4, seed=SeedSpec(5), initial=ex.initial_law, workers=1)
    b = poc_weak(ex.model, cfg, [8, 16, 32], K=4, seed=SeedSpec(5), initial=ex.initial_law, workers=4)
    assert a == b
    c = poc_strong_ladder(ex.model, cfg, [8, 16], SeedSpec(5), ex.initial_law, K=2, workers=1)
    d = poc_strong_ladder(ex.model, cfg, [8, 16], SeedSpec(5), ex.initial_law, K=2, workers=4)
    assert c == d


def test_histogram_uniform_scheme():
    traj = run_scheme(brownian(), np.zeros((10, 1)), BrownianPaths(SeedSpec(), 10, 1),
                      SchemeConfig("uniform_euler", M=16))
    h = step_histogram(traj, bin_width=8)
    assert h.mean == 16 and h.max == 16
    assert h.counts.tolist() == [10] and h.edges.tolist() == [16, 24]


def test_histogram_bins():
    h = step_histogram(np.array([3, 4, 9, 9, 15]), bin_width=4)
    assert h.edges.tolist() == [0, 4, 8, 12, 16]
    assert h.counts.tolist() == [1, 1, 2, 1]
    assert h.counts.sum() == 5
    with pytest.raises(DomainError):
        step_histogram(np.array([1, 2]), bin_width=0)


def test_kde_single_point():
    pts = np.tile([[0.4, -1.0]], (50, 1))
    with pytest.warns(RuntimeWarning):
        g = kde2d(pts)
    assert g.integral() == pytest.approx(1.0, abs=1e-3)
    iy, ix = np.unravel_index(np.argmax(g.density), g.density.shape)
    assert abs(g.x[ix] - 0.4) <= 3 * g.bandwidth[0]
    assert abs(g.y[iy] + 1.0) <= 3 * g.bandwidth[1]


def test_kde_degenerate_axis():
    rng = np.random.default_rng(0)
    pts = np.column_stack([rng.normal(size=2000), np.full(2000, 2.0)])
    with pytest.warns(RuntimeWarning, match="axis"):
        g = kde2d(pts)
    assert g.integral() == pytest.approx(1.0, abs=1e-3)
    # the marginal along x is the 1-d estimate
    marg = np.trapezoid(g.density, g.y, axis=0) if hasattr(np, "trapezoid") else np.trapz(g.density, g.y, axis=0)
    j = np.argmin(np.abs(g.x))
    assert marg[j] == pytest.approx(1 / math.sqrt(2 * math.pi), abs=0.03)


def test_kde_standard_normal():
    rng = np.random.default_rng(1)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        g = kde2d(rng.standard_normal((20_000, 2)))
    assert g.at(0.0, 0.0) == pytest.approx(1 / (2 * math.pi), abs=0.01)
    assert g.integral() == pytest.approx(1.0, abs=1e-3)
    assert g.at(100.0, 0.0) == 0.0


def test_kde_input_checks():
    with pytest.raises(Exception):
        kde2d(np.zeros((10, 3)))
    with pytest.raises(DomainError):
        kde2d(np.array([[0.0, np.nan], [1.0, 1.0]]))
    with pytest.raises(DomainError):
        kde2d(np.zeros((5, 2)) + np.arange(5)[:, None], bandwidth=-1.0)


def test_compare_at_matched_steps():
    from mvsde.analysis import compare_at_matched_steps

    a = [LevelError(l, 0, 2.0**-l - 1e-3, 0.1 * (2.0**-l - 1e-3), 0) for l in range(3, 7)]
    b = [LevelError(l, 0, 2.0**-l, 2.0 ** (-l / 2), 0) for l in range(2, 8)]
    rows = compare_at_matched_steps(a, b)
    assert len(rows) == 4
    for h, ra, rb, ratio in rows:
        assert rb == pytest.approx(h**0.5, rel=1e-2)  # exact at the nodes, close between them
        assert ratio == pytest.approx(ra / rb)
    # points outside the second ladder's range are skipped
    outside = [LevelError(1, 0, 0.5, 0.1, 0), LevelError(9, 0, 2.0**-9, 0.1, 0)]
    assert compare_at_matched_steps(outside, b) == []
