"""Projection operator, one-step maps (PMM / PEM / EM) and trajectory runs.

PMM is the projected Milstein step in its commutative-noise form; PEM drops
the Milstein correction; EM is the classical unprojected Euler-Maruyama
control, which is allowed (and expected) to blow up on superlinear problems.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _backend
from .noise import levy_product
from .problems import EstimationError, eval_levy_coefficient, sample_states

__all__ = [
    "BlowUpError",
    "SchemeConfig",
    "Trajectory",
    "project",
    "pmm_step",
    "pem_step",
    "em_step",
    "simulate",
    "StepBoundParams",
    "StepsizeWindow",
    "admissible_stepsize",
    "estimate_beta",
]

KIND_CODES = {"pmm": 0, "pem": 1, "em": 2}


class BlowUpError(RuntimeError):
    """A trajectory produced a non-finite state; carries the failing step."""

    def __init__(self, step_index, t, norm):
        super().__init__(f"non-finite state at step {step_index} (t={t}, |x| was {norm})")
        self.step_index = step_index
        self.t = t
        self.norm = norm


@dataclass(frozen=True)
class SchemeConfig:
    kind: str
    h: float
    gamma: float = 1.0

    def __post_init__(self):
        if self.kind not in KIND_CODES:
            raise ValueError(f"kind must be one of {sorted(KIND_CODES)}")
        if not (0.0 < self.h < 1.0):
            raise ValueError("h must lie in (0, 1)")
        if self.gamma < 1.0:
            raise ValueError("gamma must be >= 1")

    @property
    def cap(self):
        """Projection radius h^(-1/(2 gamma))."""
        return self.h ** (-1.0 / (2.0 * self.gamma))


def project(x, h, gamma):
    """Radial clamp of x to the ball of radius h^(-1/(2 gamma))."""
    x = np.asarray(x, dtype=float)
    nrm = float(np.linalg.norm(x))
    if nrm == 0.0:
        # covers x = 0 and vectors so small the squared norm underflows;
        # both lie far inside the ball
        return x.copy()
    cap = h ** (-1.0 / (2.0 * gamma))
    if nrm <= cap:
        return x.copy()
    return x * (cap / nrm)


def _tmod(t, tau):
    t = math.fmod(t, tau)
    if t < 0.0:
        t += tau
    return t


def _check_finite(x, step_index, t, x_before):
    if not np.all(np.isfinite(x)):
        raise BlowUpError(step_index, t, float(np.linalg.norm(np.atleast_1d(x_before))))


def pmm_step(problem, config, t_j, x, dW, step_index=0):
    """One projected Milstein step (commutative-noise form)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    dW = np.atleast_1d(np.asarray(dW, dtype=float))
    h = config.h
    t = _tmod(t_j, problem.tau)
    y = project(x, h, config.gamma)
    out = y + h * (problem.linear.matrix @ y) + h * problem.drift(t, y)
    P = levy_product(dW, h)
    for r in range(problem.m):
        out = out + problem.diffusion_column(t, y, r) * dW[r]
    for r1 in range(problem.m):
        for r2 in range(problem.m):
            out = out + eval_levy_coefficient(problem, r1, r2, t, y) * P[r1, r2]
    _check_finite(out, step_index, t_j, x)
    return out


def pem_step(problem, config, t_j, x, dW, step_index=0):
    """Projected Euler step: PMM without the Milstein correction."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    dW = np.atleast_1d(np.asarray(dW, dtype=float))
    h = config.h
    t = _tmod(t_j, problem.tau)
    y = project(x, h, config.gamma)
    out = y + h * (problem.linear.matrix @ y) + h * problem.drift(t, y)
    for r in range(problem.m):
        out = out + problem.diffusion_column(t, y, r) * dW[r]
    _check_finite(out, step_index, t_j, x)
    return out


def em_step(problem, config, t_j, x, dW, step_index=0):
    """Classical Euler-Maruyama step, no projection."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    dW = np.atleast_1d(np.asarray(dW, dtype=float))
    h = config.h
    t = _tmod(t_j, problem.tau)
    out = x + h * (problem.linear.matrix @ x + problem.drift(t, x))
    for r in range(problem.m):
        out = out + problem.diffusion_column(t, x, r) * dW[r]
    _check_finite(out, step_index, t_j, x)
    return out


_STEP_FUNCS = {"pmm": pmm_step, "pem": pem_step, "em": em_step}


@dataclass(frozen=True)
class Trajectory:
    """Stored nodes of a single scheme run (possibly thinned by a stride)."""

    times: np.ndarray
    values: np.ndarray  # (nodes, d)
    t0: float
    h: float
    stride: int

    @property
    def endpoint(self):
        return self.values[-1]

    def window(self, t_lo, t_hi):
        """(times, values) restricted to t_lo <= t <= t_hi."""
        eps = 1e-9 * self.h
        mask = (self.times >= t_lo - eps) & (self.times <= t_hi + eps)
        return self.times[mask], self.values[mask]

    def at(self, t):
        """Value at a stored node time t."""
        idx = np.flatnonzero(np.abs(self.times - t) <= 1e-9 * max(self.h, 1.0))
        if idx.size == 0:
            raise KeyError(f"time {t} is not a stored node")
        return self.values[idx[0]]


def _stored_count(n, stride):
    return 1 + n // stride + (1 if n % stride else 0)


def _stored_steps(n, stride):
    steps = list(range(0, n + 1, stride))
    if steps[-1] != n:
        steps.append(n)
    return np.asarray(steps)


def default_stride(n, max_nodes=10**6):
    return 1 if n <= max_nodes else -(-n // max_nodes)


def simulate(problem, config, path, xi, store_stride=None, backend=None):
    """Iterate the configured one-step map over a path view.

    Native scalar problems run on the selected kernel backend; everything
    else uses the generic per-step functions.  Raises BlowUpError with the
    failing step index when the state turns non-finite.
    """
    if abs(path.h - config.h) > 1e-12 * config.h:
        raise ValueError(f"path stepsize {path.h} != scheme stepsize {config.h}")
    n = path.steps
    stride = default_stride(n) if store_stride is None else int(store_stride)
    steps_idx = _stored_steps(n, stride)
    times = path.t0 + steps_idx * path.h

    if problem.native is not None and problem.d == 1 and problem.m == 1:
        code, params = problem.native
        kernel = _backend.get_kernel(backend)
        dW = np.ascontiguousarray(path.increments[:, 0])
        out = np.empty(steps_idx.size)
        x0 = float(np.atleast_1d(xi)[0])
        fail = kernel(
            code, tuple(params), KIND_CODES[config.kind],
            float(problem.linear.matrix[0, 0]), problem.tau, config.gamma,
            config.h, path.t0, x0, dW, out, stride,
        )
        if fail >= 0:
            raise BlowUpError(fail, path.t0 + fail * path.h, abs(x0))
        return Trajectory(times=times, values=out.reshape(-1, 1), t0=path.t0,
                          h=path.h, stride=stride)

    step = _STEP_FUNCS[config.kind]
    x = np.atleast_1d(np.asarray(xi, dtype=float)).copy()
    values = np.empty((steps_idx.size, problem.d))
    values[0] = x
    k = 1
    for j in range(n):
        x = step(problem, config, path.t0 + j * path.h, x, path.increments[j], step_index=j)
        jp = j + 1
        if jp % stride == 0 or jp == n:
            values[k] = x
            k += 1
    return Trajectory(times=times, values=values, t0=path.t0, h=path.h, stride=stride)


@dataclass(frozen=True)
class StepBoundParams:
    """Constants entering the admissible-stepsize bound.

    sigma1/sigma2 are free analysis parameters; sigma1 defaults to the
    midpoint of its admissible interval (0, lambda1 - K2 - 2 beta_L^2).
    """

    lambda_1: float
    lambda_d: float
    K2: float
    beta_f: float
    beta_L: float
    gamma: float = 1.0
    q: float = 1.0
    sigma1: Optional[float] = None
    sigma2: float = 1.0


@dataclass(frozen=True)
class StepsizeWindow:
    h_max: float
    vacuous: bool
    sigma1: float
    term_coercive: float
    term_lipschitz: float


def admissible_stepsize(params):
    """Advisory upper stepsize bound

        min{ (l1-K2)^g / ((1+s2)^g (ld+bf)^(2g)),  1/(l1-K2-s1-2 bL^2),  1 }

    with a vacuous flag when the sigma1 interval (0, l1-K2-2 bL^2) is empty.
    """
    gap = params.lambda_1 - params.K2 - 2.0 * params.beta_L**2
    if gap <= 0.0:
        return StepsizeWindow(h_max=0.0, vacuous=True, sigma1=math.nan,
                              term_coercive=math.nan, term_lipschitz=math.nan)
    sigma1 = 0.5 * gap if params.sigma1 is None else params.sigma1
    if not (0.0 < sigma1 < gap):
        return StepsizeWindow(h_max=0.0, vacuous=True, sigma1=sigma1,
                              term_coercive=math.nan, term_lipschitz=math.nan)
    g = params.gamma
    term1 = (params.lambda_1 - params.K2) ** g / (
        (1.0 + params.sigma2) ** g * (params.lambda_d + params.beta_f) ** (2.0 * g)
    )
    term2 = 1.0 / (params.lambda_1 - params.K2 - sigma1 - 2.0 * params.beta_L**2)
    h_max = min(term1, term2, 1.0)
    return StepsizeWindow(h_max=h_max, vacuous=h_max <= 0.0, sigma1=sigma1,
                          term_coercive=term1, term_lipschitz=term2)


def estimate_beta(problem, h, gamma=None, n=10**4, radius=10.0, seed=0):
    """h-scaled Lipschitz constants of f and of the Milstein correction
    through the projection: empirical suprema of

        ||f(t, P x) - f(t, P y)|| h^((g-1)/(2g)) / ||x - y||

    and the analogue over all correction vectors.  Returns (beta_f, beta_L).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    gamma = problem.gamma if gamma is None else gamma
    scale = h ** ((gamma - 1.0) / (2.0 * gamma))
    ts, xs = sample_states(problem, n, radius, seed=seed)
    _, ys = sample_states(problem, n, radius, seed=seed + 1)
    beta_f = 0.0
    beta_L = 0.0
    used = 0
    for t, x, y in zip(ts, xs, ys):
        nrm = float(np.linalg.norm(x - y))
        if nrm < 1e-12:
            continue
        px = project(x, h, gamma)
        py = project(y, h, gamma)
        df = float(np.linalg.norm(problem.drift(t, px) - problem.drift(t, py)))
        beta_f = max(beta_f, df * scale / nrm)
        for r1 in range(problem.m):
            for r2 in range(problem.m):
                dl = float(np.linalg.norm(
                    eval_levy_coefficient(problem, r1, r2, t, px)
                    - eval_levy_coefficient(problem, r1, r2, t, py)
                ))
                beta_L = max(beta_L, dl * scale / nrm)
        used += 1
    if used == 0:
        raise EstimationError("all sampled pairs were degenerate")
    return beta_f, beta_L
