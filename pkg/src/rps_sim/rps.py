"""Pull-back experiments around the random periodic solution.

All experiments fix one driving path per Monte Carlo sample and vary only
the start depth, the initial value, or the path shift, which is exactly the
pull-back semantics: deeper starts reuse the same grid from an earlier index.
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._parallel import map_samples
from .noise import derive_seed, sample_grid, theta_shift
from .schemes import BlowUpError, simulate

__all__ = [
    "ExperimentError",
    "PullbackConfig",
    "PullbackReport",
    "CouplingReport",
    "PeriodicityReport",
    "SecondMomentReport",
    "pullback_limit",
    "initial_condition_coupling",
    "periodicity_check",
    "second_moment_watch",
]


class ExperimentError(RuntimeError):
    """More than half of the Monte Carlo samples failed."""


def _check_tau_alignment(tau, h):
    n = tau / h
    if abs(n - round(n)) > 1e-9 * max(round(n), 1):
        raise ValueError(f"period {tau} is not an integer multiple of h={h}")


@dataclass(frozen=True)
class PullbackConfig:
    """Shared setup for the pull-back experiments.

    All runs of one config share one Brownian grid per sample, covering
    [-max(k) tau, t_hi], so every depth sees the same noise realization.
    """

    problem: object
    scheme: object
    k_list: Sequence[int]
    t_lo: float
    t_hi: float
    xi_list: Sequence[float]
    master_seed: int

    def __post_init__(self):
        ks = list(self.k_list)
        if not ks or any(k <= 0 for k in ks) or sorted(ks) != ks:
            raise ValueError("k_list must be ascending positive integers")
        _check_tau_alignment(self.problem.tau, self.scheme.h)
        if not self.t_lo < self.t_hi:
            raise ValueError("target window must be non-empty")
        if self.t_lo < -ks[0] * self.problem.tau:
            raise ValueError("target window starts before the shallowest pull-back")
        if not self.xi_list:
            raise ValueError("xi_list must be non-empty")


def _too_many_failures(failures, samples):
    return failures > samples // 2


@dataclass(frozen=True)
class PullbackReport:
    k_list: tuple
    window_times: np.ndarray
    window_mean: np.ndarray  # (n_k, n_t) mean over samples, first xi
    window_var: np.ndarray
    endpoint_mean: np.ndarray  # per k
    endpoint_var: np.ndarray
    cauchy: np.ndarray  # D_k between consecutive depths
    cauchy_se: np.ndarray
    failures: tuple
    samples: int
    rps_path: np.ndarray  # deepest-k trajectory of sample 0 on the window


def pullback_limit(config, samples, threads=1):
    """Simulate the pull-back at every depth in k_list on shared noise and
    report the Cauchy differences D_k between consecutive depths over the
    target window."""
    problem, scheme = config.problem, config.scheme
    tau = problem.tau
    ks = list(config.k_list)
    kmax = ks[-1]
    n_k = len(ks)
    xi_list = list(config.xi_list)

    def one_sample(i):
        grid = sample_grid(derive_seed(config.master_seed, i),
                           -kmax * tau, config.t_hi, scheme.h, m=problem.m)
        wins = np.full((n_k, len(xi_list)), None, dtype=object)
        times = None
        for a, k in enumerate(ks):
            view = grid.view(t_start=-k * tau, t_end=config.t_hi)
            for b, xi in enumerate(xi_list):
                try:
                    traj = simulate(problem, scheme, view, xi, store_stride=1)
                except BlowUpError:
                    continue
                t_w, v_w = traj.window(config.t_lo, config.t_hi)
                times = t_w
                wins[a, b] = v_w[:, 0] if v_w.shape[1] == 1 else v_w
        return times, wins

    results = map_samples(one_sample, samples, threads=threads)
    window_times = next(t for t, _ in results if t is not None)
    n_t = window_times.size

    window_sum = np.zeros((n_k, n_t))
    window_sumsq = np.zeros((n_k, n_t))
    counts = np.zeros(n_k, dtype=int)
    d_per_sample = np.full((n_k - 1, samples), np.nan)
    failures = np.zeros(n_k, dtype=int)
    rps_path = None

    for i, (times, wins) in enumerate(results):
        for a in range(n_k):
            if any(wins[a, b] is None for b in range(len(xi_list))):
                failures[a] += 1
                continue
            w0 = np.asarray(wins[a, 0], dtype=float)
            window_sum[a] += w0
            window_sumsq[a] += w0 * w0
            counts[a] += 1
        for a in range(n_k - 1):
            acc = []
            for b in range(len(xi_list)):
                if wins[a, b] is None or wins[a + 1, b] is None:
                    continue
                diff = np.asarray(wins[a, b], dtype=float) - np.asarray(wins[a + 1, b], dtype=float)
                acc.append(float(np.mean(diff * diff)))
            if acc:
                d_per_sample[a, i] = float(np.mean(acc))
        if i == 0 and wins[n_k - 1, 0] is not None:
            rps_path = np.asarray(wins[n_k - 1, 0], dtype=float)

    if any(_too_many_failures(int(f), samples) for f in failures):
        raise ExperimentError(f"blow-up in more than half the samples: {failures.tolist()}")

    with np.errstate(invalid="ignore"):
        window_mean = window_sum / counts[:, None]
        window_var = window_sumsq / counts[:, None] - window_mean**2
    cauchy = np.nanmean(d_per_sample, axis=1)
    n_ok = np.sum(~np.isnan(d_per_sample), axis=1)
    cauchy_se = np.nanstd(d_per_sample, axis=1, ddof=1) / np.sqrt(np.maximum(n_ok, 1))
    endpoint_mean = window_mean[:, -1]
    endpoint_var = window_var[:, -1]
    return PullbackReport(
        k_list=tuple(ks), window_times=window_times,
        window_mean=window_mean, window_var=window_var,
        endpoint_mean=endpoint_mean, endpoint_var=endpoint_var,
        cauchy=cauchy, cauchy_se=cauchy_se,
        failures=tuple(int(f) for f in failures), samples=samples,
        rps_path=rps_path,
    )


@dataclass(frozen=True)
class CouplingReport:
    times: np.ndarray
    msq: np.ndarray  # E||X_t - Y_t||^2 over samples
    msq_se: np.ndarray
    decay_slope: float  # log-linear fit d/dt log(msq)
    failures: int
    samples: int


def initial_condition_coupling(config, xi, eta, samples, threads=1):
    """Couple two initial values on identical paths and track the
    mean-square difference over time, with a log-linear decay fit."""
    if xi == eta:
        raise ValueError("initial values must differ")
    problem, scheme = config.problem, config.scheme
    tau = problem.tau
    kmax = list(config.k_list)[-1]
    t0 = -kmax * tau

    def one_sample(i):
        grid = sample_grid(derive_seed(config.master_seed, i),
                           t0, config.t_hi, scheme.h, m=problem.m)
        view = grid.view()
        try:
            tx = simulate(problem, scheme, view, xi, store_stride=1)
            ty = simulate(problem, scheme, view, eta, store_stride=1)
        except BlowUpError:
            return None
        d = tx.values - ty.values
        return tx.times, np.sum(d * d, axis=1)

    results = map_samples(one_sample, samples, threads=threads)
    ok = [r for r in results if r is not None]
    failures = samples - len(ok)
    if _too_many_failures(failures, samples):
        raise ExperimentError(f"blow-up in {failures}/{samples} samples")
    times = ok[0][0]
    stack = np.stack([r[1] for r in ok])
    msq = stack.mean(axis=0)
    msq_se = stack.std(axis=0, ddof=1) / math.sqrt(len(ok)) if len(ok) > 1 else np.zeros_like(msq)

    pos = msq > 0.0
    if pos.sum() >= 2:
        slope = float(np.polyfit(times[pos], np.log(msq[pos]), 1)[0])
    else:
        slope = -math.inf  # difference hit exact zero almost immediately
    return CouplingReport(times=times, msq=msq, msq_se=msq_se,
                          decay_slope=slope, failures=failures, samples=samples)


@dataclass(frozen=True)
class PeriodicityReport:
    times: np.ndarray  # target window of the unshifted run
    original_mean: np.ndarray
    shifted_mean: np.ndarray  # shifted run, relabelled back onto `times`
    residual_per_t: np.ndarray  # RMS across samples at each node
    rms: float
    rms_se: float
    failures: int
    samples: int


def periodicity_check(config, samples, shifts=1, threads=1):
    """Compare X on [t_lo, t_hi] under omega against X on the tau-shifted
    window under theta_{-tau} omega; for a random periodic solution the two
    segments coincide."""
    problem, scheme = config.problem, config.scheme
    tau = problem.tau
    if config.t_hi - config.t_lo < tau:
        raise ValueError("target window must span at least one period")
    k = list(config.k_list)[-1]
    shift = shifts * tau
    xi = list(config.xi_list)[0]
    start = -k * tau

    def one_sample(i):
        # parent grid covers both the plain window and the shifted one
        grid = sample_grid(derive_seed(config.master_seed, i),
                           start - shift, config.t_hi, scheme.h, m=problem.m)
        try:
            traj1 = simulate(problem, scheme,
                             grid.view(t_start=start, t_end=config.t_hi),
                             xi, store_stride=1)
            shifted = theta_shift(grid, -shift)
            traj2 = simulate(problem, scheme,
                             shifted.view(t_start=start, t_end=config.t_hi + shift),
                             xi, store_stride=1)
        except BlowUpError:
            return None
        t1, v1 = traj1.window(config.t_lo, config.t_hi)
        t2, v2 = traj2.window(config.t_lo + shift, config.t_hi + shift)
        return t1, v1[:, 0], v2[:, 0]

    results = map_samples(one_sample, samples, threads=threads)
    ok = [r for r in results if r is not None]
    failures = samples - len(ok)
    if _too_many_failures(failures, samples):
        raise ExperimentError(f"blow-up in {failures}/{samples} samples")
    times = ok[0][0]
    s1 = np.stack([r[1] for r in ok])
    s2 = np.stack([r[2] for r in ok])
    res = s2 - s1
    per_sample_rms = np.sqrt(np.mean(res * res, axis=1))
    rms = float(np.sqrt(np.mean(res * res)))
    rms_se = float(per_sample_rms.std(ddof=1) / math.sqrt(len(ok))) if len(ok) > 1 else 0.0
    return PeriodicityReport(
        times=times, original_mean=s1.mean(axis=0), shifted_mean=s2.mean(axis=0),
        residual_per_t=np.sqrt(np.mean(res * res, axis=0)),
        rms=rms, rms_se=rms_se, failures=failures, samples=samples,
    )


@dataclass(frozen=True)
class SecondMomentReport:
    times: np.ndarray
    msq: np.ndarray  # E||X_j||^2 at stored nodes
    supremum: float
    sup_time: float
    attained_early: bool  # supremum reached in the first half of the horizon
    failures: int
    samples: int


def second_moment_watch(problem, scheme, xi, n_steps, master_seed, samples, t0=0.0, threads=1):
    """Running supremum of the Monte Carlo second moment over n_steps."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    T = t0 + n_steps * scheme.h

    def one_sample(i):
        grid = sample_grid(derive_seed(master_seed, i), t0, T, scheme.h, m=problem.m)
        try:
            traj = simulate(problem, scheme, grid.view(), xi)
        except BlowUpError:
            return None
        return traj.times, np.sum(traj.values * traj.values, axis=1)

    results = map_samples(one_sample, samples, threads=threads)
    ok = [r for r in results if r is not None]
    failures = samples - len(ok)
    if _too_many_failures(failures, samples):
        raise ExperimentError(f"blow-up in {failures}/{samples} samples")
    times = ok[0][0]
    msq = np.stack([r[1] for r in ok]).mean(axis=0)
    j_sup = int(np.argmax(msq))
    return SecondMomentReport(
        times=times, msq=msq, supremum=float(msq[j_sup]), sup_time=float(times[j_sup]),
        attained_early=j_sup < msq.size // 2, failures=failures, samples=samples,
    )
