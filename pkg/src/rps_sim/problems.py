"""Semi-linear SDE problem definitions and numerical condition estimators.

A problem is dX = (A x + f(t,x)) dt + sum_r g_r(t,x) dW_r with A symmetric
negative definite and f, g periodic in t with period tau.  Besides coefficient
evaluation this module provides sampling-based estimators for the coercivity
and monotonicity constants, a commutativity checker for the diffusion, and the
closed-form solution of the scalar linear problem used as a strong oracle.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "EvaluationError",
    "EstimationError",
    "LinearPart",
    "CoefficientField",
    "SdeProblem",
    "DissipativityEstimate",
    "CommutativityReport",
    "eval_levy_coefficient",
    "check_commutativity",
    "check_periodicity",
    "estimate_monotonicity_constant",
    "estimate_coercivity_constant",
    "exact_linear_solution",
    "sample_states",
    "benchmark_problem",
    "gbm_problem",
    "ou_problem",
    "get_problem",
    "REGISTRY",
]


class EvaluationError(RuntimeError):
    """A coefficient evaluated to a non-finite value at (t, x)."""

    def __init__(self, message, t=None, x=None):
        super().__init__(message)
        self.t = t
        self.x = x


class EstimationError(RuntimeError):
    """A sampling-based estimator could not produce a value."""


@dataclass(frozen=True)
class LinearPart:
    """Symmetric negative-definite linear drift A with its eigensystem.

    ``eigenvalues`` holds the eigenvalues of -A, ascending and all positive.
    """

    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @classmethod
    def from_matrix(cls, A):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got shape {A.shape}")
        scale = max(np.abs(A).max(), 1.0)
        if np.abs(A - A.T).max() > 1e-12 * scale:
            raise ValueError("A must be symmetric (1e-12 relative tolerance)")
        w, v = np.linalg.eigh(A)
        lam = -w[::-1]  # eigenvalues of -A, ascending
        vec = v[:, ::-1]
        if lam[0] <= 0.0:
            raise ValueError("A must be negative definite")
        obj = cls(matrix=A, eigenvalues=lam, eigenvectors=vec)
        for arr in (obj.matrix, obj.eigenvalues, obj.eigenvectors):
            arr.setflags(write=False)
        return obj

    @classmethod
    def scalar(cls, a):
        if a >= 0.0:
            raise ValueError("scalar linear coefficient must be negative")
        return cls.from_matrix([[float(a)]])

    @property
    def d(self):
        return self.matrix.shape[0]

    @property
    def lambda_1(self):
        return float(self.eigenvalues[0])

    @property
    def lambda_d(self):
        return float(self.eigenvalues[-1])


def _fd_jacobian(g, t, x):
    """Central finite-difference Jacobian of a diffusion column."""
    x = np.asarray(x, dtype=float)
    d = x.size
    step = 1e-6 * (1.0 + float(np.linalg.norm(x)))
    J = np.empty((d, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = step
        J[:, k] = (np.asarray(g(t, x + e)) - np.asarray(g(t, x - e))) / (2.0 * step)
    return J


@dataclass(frozen=True)
class CoefficientField:
    """Drift f, diffusion columns g_r and optional analytic Jacobians.

    When ``diffusion_jacobians`` is None, a central finite difference with
    step 1e-6 * (1 + ||x||) stands in.
    """

    drift: Callable[[float, np.ndarray], np.ndarray]
    diffusion: Sequence[Callable[[float, np.ndarray], np.ndarray]]
    period: float
    growth_exponent: float = 1.0
    p_star: float = 2.0
    diffusion_jacobians: Optional[Sequence[Callable]] = None

    def __post_init__(self):
        if self.period <= 0.0:
            raise ValueError("period must be positive")
        if self.growth_exponent < 1.0:
            raise ValueError("growth exponent must be >= 1")
        if self.p_star < 1.0:
            raise ValueError("p_star must be >= 1")

    def jacobian(self, r, t, x):
        """d x d Jacobian of diffusion column r at (t, x)."""
        if self.diffusion_jacobians is not None:
            return np.atleast_2d(np.asarray(self.diffusion_jacobians[r](t, x), dtype=float))
        return _fd_jacobian(self.diffusion[r], t, x)


@dataclass(frozen=True)
class SdeProblem:
    """A concrete SDE instance tying the linear part to its coefficients.

    ``native`` optionally names a compiled-kernel coefficient set as
    (code, params); problems without it always run on the generic path.
    """

    linear: LinearPart
    coeffs: CoefficientField
    m: int
    commutative: bool = False
    label: str = ""
    native: Optional[tuple] = None

    @property
    def d(self):
        return self.linear.d

    @property
    def tau(self):
        return self.coeffs.period

    @property
    def gamma(self):
        return self.coeffs.growth_exponent

    def drift(self, t, x):
        v = np.asarray(self.coeffs.drift(t, np.asarray(x, dtype=float)), dtype=float)
        if not np.all(np.isfinite(v)):
            raise EvaluationError("drift evaluated non-finite", t=t, x=x)
        return v

    def diffusion_column(self, t, x, r):
        v = np.asarray(self.coeffs.diffusion[r](t, np.asarray(x, dtype=float)), dtype=float)
        if not np.all(np.isfinite(v)):
            raise EvaluationError("diffusion evaluated non-finite", t=t, x=x)
        return v

    def diffusion_matrix(self, t, x):
        """d x m matrix with columns g_r(t, x)."""
        cols = [self.diffusion_column(t, x, r) for r in range(self.m)]
        return np.column_stack([np.atleast_1d(c) for c in cols])


def eval_levy_coefficient(problem, r1, r2, t, x):
    """The Milstein correction vector (dg_{r2}/dx)(t,x) g_{r1}(t,x)."""
    if not (0 <= r1 < problem.m and 0 <= r2 < problem.m):
        raise IndexError("noise column index out of range")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    J = problem.coeffs.jacobian(r2, t, x)
    v = J @ np.atleast_1d(problem.diffusion_column(t, x, r1))
    if not np.all(np.isfinite(v)):
        raise EvaluationError("Levy coefficient evaluated non-finite", t=t, x=x)
    return v


@dataclass(frozen=True)
class CommutativityReport:
    max_residual: float
    tol: float
    passed: bool
    worst_point: Optional[tuple] = None


def check_commutativity(problem, samples, tol=1e-8):
    """Check L^{r1} g_{k,r2} == L^{r2} g_{k,r1} over sampled (t, x) points.

    Residuals are compared against tol * (1 + ||x||^gamma).
    """
    if len(samples) == 0:
        raise ValueError("samples must be non-empty")
    gamma = problem.gamma
    worst = 0.0
    worst_point = None
    passed = True
    for t, x in samples:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        scale = 1.0 + float(np.linalg.norm(x)) ** gamma
        for r1 in range(problem.m):
            for r2 in range(r1 + 1, problem.m):
                lhs = eval_levy_coefficient(problem, r1, r2, t, x)
                rhs = eval_levy_coefficient(problem, r2, r1, t, x)
                res = float(np.abs(lhs - rhs).max())
                if res > worst:
                    worst = res
                    worst_point = (t, x.copy())
                if res > tol * scale:
                    passed = False
    return CommutativityReport(max_residual=worst, tol=tol, passed=passed, worst_point=worst_point)


def check_periodicity(problem, samples, tol=1e-10):
    """Validate f(t+tau, x) == f(t, x) and likewise for every g_r."""
    tau = problem.tau
    for t, x in samples:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        fv = problem.drift(t, x)
        if np.linalg.norm(problem.drift(t + tau, x) - fv) > tol * (1.0 + np.linalg.norm(fv)):
            return False
        for r in range(problem.m):
            gv = problem.diffusion_column(t, x, r)
            if np.linalg.norm(problem.diffusion_column(t + tau, x, r) - gv) > tol * (
                1.0 + np.linalg.norm(gv)
            ):
                return False
    return True


@dataclass(frozen=True)
class DissipativityEstimate:
    """Sampling supremum estimate of a one-sided growth constant."""

    K1_hat: Optional[float]
    K2_hat: Optional[float]
    q: float
    lambda_1: float
    n_samples: int
    radius: float

    @property
    def margin(self):
        ref = self.K2_hat if self.K2_hat is not None else self.K1_hat
        return self.lambda_1 - ref

    @property
    def below_spectral_gap(self):
        return self.margin > 0.0


def sample_states(problem, n, radius, seed=0):
    """Hybrid random/grid sample of (t, x) probe points in a cube of the
    given radius.  Half the points are uniform draws, half sit on an
    axis-aligned grid so extremes are always probed."""
    rng = np.random.default_rng(seed)
    d = problem.d
    n_grid = n // 2
    ts = rng.uniform(0.0, problem.tau, size=n)
    xs = rng.uniform(-radius, radius, size=(n, d))
    if n_grid > 0 and d == 1:
        xs[:n_grid, 0] = np.linspace(-radius, radius, n_grid)
    return ts, xs


def estimate_monotonicity_constant(problem, q=1.0, n=10**5, radius=10.0, seed=0):
    """Empirical supremum of the one-sided (monotonicity) quotient

        [<x-y, f(t,x)-f(t,y)> + (2q-1)/2 ||g(t,x)-g(t,y)||_F^2] / ||x-y||^2

    over n sampled pairs.  Being a supremum over samples, the estimate can
    only grow when the sample set grows.
    """
    if q < 1.0:
        raise ValueError("q must be >= 1")
    if n < 1:
        raise ValueError("n must be >= 1")
    ts, xs = sample_states(problem, n, radius, seed=seed)
    _, ys = sample_states(problem, n, radius, seed=seed + 1)
    best = -math.inf
    used = 0
    for t, x, y in zip(ts, xs, ys):
        diff = x - y
        nrm2 = float(diff @ diff)
        if nrm2 < 1e-24:  # ||x-y|| < 1e-12
            continue
        df = problem.drift(t, x) - problem.drift(t, y)
        dg = problem.diffusion_matrix(t, x) - problem.diffusion_matrix(t, y)
        val = (float(diff @ df) + 0.5 * (2.0 * q - 1.0) * float(np.sum(dg * dg))) / nrm2
        best = max(best, val)
        used += 1
    if used == 0:
        raise EstimationError("all sampled pairs were degenerate")
    return DissipativityEstimate(
        K1_hat=None,
        K2_hat=best,
        q=q,
        lambda_1=problem.linear.lambda_1,
        n_samples=used,
        radius=radius,
    )


def estimate_coercivity_constant(problem, p_star=None, n=10**5, radius=10.0, seed=0):
    """Empirical supremum of the coercivity quotient

        [<x, f(t,x)> + (2 p* - 1)/2 ||g(t,x)||_F^2] / (1 + ||x||^2).
    """
    if p_star is None:
        p_star = problem.coeffs.p_star
    if p_star < 1.0:
        raise ValueError("p_star must be >= 1")
    ts, xs = sample_states(problem, n, radius, seed=seed)
    best = -math.inf
    for t, x in zip(ts, xs):
        fv = problem.drift(t, x)
        gv = problem.diffusion_matrix(t, x)
        val = (float(x @ fv) + 0.5 * (2.0 * p_star - 1.0) * float(np.sum(gv * gv))) / (
            1.0 + float(x @ x)
        )
        best = max(best, val)
    return DissipativityEstimate(
        K1_hat=best,
        K2_hat=None,
        q=p_star,
        lambda_1=problem.linear.lambda_1,
        n_samples=n,
        radius=radius,
    )


def exact_linear_solution(a, b, x0, path, T=None):
    """Strong solution of dX = aX dt + bX dW on the nodes of a path view.

    Uses the closed form X_t = x0 exp((a - b^2/2)(t - t0) + b W_{t-t0}).
    Returns (times, values) arrays including the initial node.
    """
    inc = np.asarray(path.increments)[:, 0]
    n = inc.size
    W = np.concatenate([[0.0], np.cumsum(inc)])
    t_rel = path.h * np.arange(n + 1)
    times = path.t0 + t_rel
    if T is not None and not math.isclose(times[-1], T, rel_tol=0, abs_tol=1e-9 * path.h):
        raise ValueError(f"path ends at {times[-1]}, expected T={T}")
    values = x0 * np.exp((a - 0.5 * b * b) * t_rel + b * W)
    return times, values


# --- built-in problem registry -------------------------------------------

# native kernel codes shared with the compiled/pure step kernels
NATIVE_BENCHMARK = 0
NATIVE_GBM = 1
NATIVE_OU = 2


def benchmark_problem():
    """The cubic-drift benchmark with time-periodic multiplicative noise:

        dX = (-2 pi X + X - X^3 + cos(pi t)) dt + (1 + X^2 + cos(pi t)) dW,

    period 2, growth exponent 3.
    """

    def f(t, x):
        return x - x**3 + math.cos(math.pi * t)

    def g(t, x):
        return 1.0 + x**2 + math.cos(math.pi * t)

    def dg(t, x):
        x = np.atleast_1d(x)
        return np.array([[2.0 * x[0]]])

    return SdeProblem(
        linear=LinearPart.scalar(-2.0 * math.pi),
        coeffs=CoefficientField(
            drift=f,
            diffusion=(g,),
            diffusion_jacobians=(dg,),
            period=2.0,
            growth_exponent=3.0,
            p_star=16.0,
        ),
        m=1,
        commutative=True,
        label="benchmark",
        native=(NATIVE_BENCHMARK, ()),
    )


def gbm_problem(a=-1.0, b=0.25):
    """Scalar linear problem dX = aX dt + bX dW (a < 0), with a strong
    oracle via exact_linear_solution."""
    a = float(a)
    b = float(b)

    def f(t, x):
        return np.zeros_like(np.atleast_1d(x))

    def g(t, x):
        return b * np.atleast_1d(x)

    def dg(t, x):
        return np.array([[b]])

    return SdeProblem(
        linear=LinearPart.scalar(a),
        coeffs=CoefficientField(
            drift=f,
            diffusion=(g,),
            diffusion_jacobians=(dg,),
            period=1.0,
            growth_exponent=1.0,
            p_star=2.0,
        ),
        m=1,
        commutative=True,
        label="gbm",
        native=(NATIVE_GBM, (b,)),
    )


def ou_problem(lam=1.0, sigma=0.5, forcing=0.0):
    """Additive-noise Ornstein-Uhlenbeck with optional periodic forcing:

        dX = (-lam X + forcing cos(pi t)) dt + sigma dW,  period 2.
    """
    lam = float(lam)
    sigma = float(sigma)
    forcing = float(forcing)

    def f(t, x):
        return forcing * math.cos(math.pi * t) * np.ones_like(np.atleast_1d(x))

    def g(t, x):
        return sigma * np.ones_like(np.atleast_1d(x))

    def dg(t, x):
        return np.array([[0.0]])

    return SdeProblem(
        linear=LinearPart.scalar(-lam),
        coeffs=CoefficientField(
            drift=f,
            diffusion=(g,),
            diffusion_jacobians=(dg,),
            period=2.0,
            growth_exponent=1.0,
            p_star=2.0,
        ),
        m=1,
        commutative=True,
        label="ou",
        native=(NATIVE_OU, (forcing, sigma)),
    )


REGISTRY = {
    "benchmark": benchmark_problem,
    "gbm": gbm_problem,
    "ou": ou_problem,
}


def get_problem(label, **params):
    """Instantiate a registry problem by label, forwarding keyword params."""
    try:
        factory = REGISTRY[label]
    except KeyError:
        raise KeyError(f"unknown problem label {label!r}; known: {sorted(REGISTRY)}") from None
    return factory(**params)
