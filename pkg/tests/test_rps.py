"""Pull-back, coupling, periodicity and moment-watch experiment drivers."""

import math

import numpy as np
import pytest

from rps_sim import (
    PullbackConfig,
    SchemeConfig,
    benchmark_problem,
    initial_condition_coupling,
    ou_problem,
    periodicity_check,
    pullback_limit,
    second_moment_watch,
)
from rps_sim.rps import ExperimentError

from conftest import zero_noise_problem


def test_pullback_config_validation(benchmark):
    sch = SchemeConfig(kind="pmm", h=0.01, gamma=3.0)
    with pytest.raises(ValueError, match="ascending"):
        PullbackConfig(problem=benchmark, scheme=sch, k_list=[3, 2], t_lo=-1.0,
                       t_hi=0.0, xi_list=[0.5], master_seed=1)
    with pytest.raises(ValueError, match="multiple"):
        PullbackConfig(problem=benchmark,
                       scheme=SchemeConfig(kind="pmm", h=0.3, gamma=3.0),
                       k_list=[1], t_lo=-1.0, t_hi=0.0, xi_list=[0.5], master_seed=1)
    with pytest.raises(ValueError, match="window"):
        PullbackConfig(problem=benchmark, scheme=sch, k_list=[1], t_lo=0.0,
                       t_hi=0.0, xi_list=[0.5], master_seed=1)
    with pytest.raises(ValueError, match="shallowest"):
        PullbackConfig(problem=benchmark, scheme=sch, k_list=[1], t_lo=-5.0,
                       t_hi=0.0, xi_list=[0.5], master_seed=1)
    with pytest.raises(ValueError, match="xi_list"):
        PullbackConfig(problem=benchmark, scheme=sch, k_list=[1], t_lo=-1.0,
                       t_hi=0.0, xi_list=[], master_seed=1)


def test_pullback_zero_noise_closed_form():
    # dX = -X dt, h = 0.25, tau = 1: the pull-back from depth k lands at
    # 0.75^(4k) xi exactly
    p = zero_noise_problem(a=-1.0, tau=1.0)
    sch = SchemeConfig(kind="pmm", h=0.25, gamma=1.0)
    cfg = PullbackConfig(problem=p, scheme=sch, k_list=[1, 2, 3], t_lo=-1.0,
                         t_hi=0.0, xi_list=[0.5], master_seed=1)
    rep = pullback_limit(cfg, samples=2, threads=1)
    for a, k in enumerate((1, 2, 3)):
        assert rep.endpoint_mean[a] == pytest.approx(0.75 ** (4 * k) * 0.5, rel=1e-12)
    assert rep.failures == (0, 0, 0)


def test_pullback_duplicate_depths_give_zero_difference():
    p = zero_noise_problem()
    sch = SchemeConfig(kind="pmm", h=0.25, gamma=1.0)
    cfg = PullbackConfig(problem=p, scheme=sch, k_list=[2, 2], t_lo=-1.0,
                         t_hi=0.0, xi_list=[0.5], master_seed=1)
    rep = pullback_limit(cfg, samples=2, threads=1)
    assert rep.cauchy[0] == 0.0


def test_pullback_benchmark_cauchy_decreases(benchmark):
    sch = SchemeConfig(kind="pmm", h=0.05, gamma=3.0)
    cfg = PullbackConfig(problem=benchmark, scheme=sch, k_list=[1, 2, 3, 4],
                         t_lo=-2.0, t_hi=0.0, xi_list=[0.5], master_seed=11)
    rep = pullback_limit(cfg, samples=40, threads=1)
    assert rep.cauchy[0] > rep.cauchy[-1]
    assert rep.rps_path is not None and rep.rps_path.size == rep.window_times.size


def test_coupling_zero_noise_closed_form():
    # squared difference after n steps of dX = -X dt at h=0.1 is 0.9^(2n)(xi-eta)^2
    p = zero_noise_problem(a=-1.0, tau=1.0)
    sch = SchemeConfig(kind="pmm", h=0.1, gamma=1.0)
    cfg = PullbackConfig(problem=p, scheme=sch, k_list=[1], t_lo=-1.0,
                         t_hi=0.0, xi_list=[0.8], master_seed=1)
    rep = initial_condition_coupling(cfg, xi=0.8, eta=0.3, samples=2, threads=1)
    exact = np.array([(0.9 ** j) ** 2 * 0.25 for j in range(11)])
    np.testing.assert_allclose(rep.msq, exact, rtol=0, atol=1e-15)
    assert rep.decay_slope < 0.0


def test_coupling_identical_initial_values_rejected(benchmark):
    sch = SchemeConfig(kind="pmm", h=0.01, gamma=3.0)
    cfg = PullbackConfig(problem=benchmark, scheme=sch, k_list=[1], t_lo=-1.0,
                         t_hi=0.0, xi_list=[0.5], master_seed=1)
    with pytest.raises(ValueError, match="differ"):
        initial_condition_coupling(cfg, xi=0.5, eta=0.5, samples=2)


def test_periodicity_zero_shift_gives_zero_residual(benchmark):
    sch = SchemeConfig(kind="pmm", h=0.01, gamma=3.0)
    cfg = PullbackConfig(problem=benchmark, scheme=sch, k_list=[2], t_lo=-2.0,
                         t_hi=0.0, xi_list=[0.3], master_seed=5)
    rep = periodicity_check(cfg, samples=3, shifts=0, threads=1)
    assert rep.rms == 0.0


def test_periodicity_requires_full_period_window(benchmark):
    sch = SchemeConfig(kind="pmm", h=0.01, gamma=3.0)
    cfg = PullbackConfig(problem=benchmark, scheme=sch, k_list=[2], t_lo=-0.5,
                         t_hi=0.0, xi_list=[0.3], master_seed=5)
    with pytest.raises(ValueError, match="period"):
        periodicity_check(cfg, samples=2)


def test_second_moment_zero_noise_supremum():
    p = zero_noise_problem(a=-1.0)
    sch = SchemeConfig(kind="pmm", h=0.1, gamma=1.0)
    rep = second_moment_watch(p, sch, xi=0.7, n_steps=20, master_seed=1, samples=3)
    assert rep.supremum == pytest.approx(0.49, rel=1e-12)
    assert rep.sup_time == 0.0
    assert rep.attained_early


def test_second_moment_ou_stationary_level():
    # OU with lam=1, sigma=0.5: stationary second moment sigma^2/2 = 0.125;
    # the running supremum stays within 3 standard errors of
    # max(xi^2, sigma^2/2) (chi-square delta bound for M=200 samples)
    p = ou_problem(lam=1.0, sigma=0.5, forcing=0.0)
    sch = SchemeConfig(kind="pmm", h=0.01, gamma=1.0)
    rep = second_moment_watch(p, sch, xi=0.0, n_steps=2000, master_seed=5,
                              samples=200, threads=1)
    bound = 0.125 + 3.0 * math.sqrt(2.0 / 200) * 0.125
    assert rep.supremum <= bound
    rep2 = second_moment_watch(p, sch, xi=0.6, n_steps=2000, master_seed=5,
                               samples=200, threads=1)
    assert rep2.supremum == pytest.approx(0.36, abs=1e-12)


def test_experiment_error_on_mass_blowup(benchmark):
    # unprojected Euler at a coarse step on the cubic benchmark explodes in
    # (more than) half the samples
    sch = SchemeConfig(kind="em", h=0.1, gamma=3.0)
    with pytest.raises(ExperimentError):
        second_moment_watch(benchmark, sch, xi=5.0, n_steps=100,
                            master_seed=3, samples=10)


def test_thread_count_does_not_change_results(benchmark):
    sch = SchemeConfig(kind="pmm", h=0.05, gamma=3.0)
    cfg = PullbackConfig(problem=benchmark, scheme=sch, k_list=[1, 2],
                         t_lo=-2.0, t_hi=0.0, xi_list=[0.5], master_seed=13)
    r1 = pullback_limit(cfg, samples=12, threads=1)
    r8 = pullback_limit(cfg, samples=12, threads=8)
    assert np.array_equal(r1.window_mean, r8.window_mean)
    assert np.array_equal(r1.cauchy, r8.cauchy)
