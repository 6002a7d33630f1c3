"""Mean-square convergence studies over a common-random-number stepsize ladder.

Every sample draws one fine grid; the reference (finest-PMM or the exact
linear oracle) and all coarse runs consume that same path, so the measured
differences isolate discretization error.
"""

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from ._parallel import map_samples
from .noise import derive_seed, sample_grid
from .problems import exact_linear_solution
from .schemes import BlowUpError, SchemeConfig, simulate

__all__ = [
    "ConvergenceStudy",
    "ErrorRow",
    "ErrorTable",
    "SlopeFit",
    "run_study",
    "mean_square_error",
    "slope_fit",
]


@dataclass(frozen=True)
class ConvergenceStudy:
    """Ladder definition for one error table.

    reference is either "pmm" (self-reference at h_ref) or "exact"
    (closed-form linear oracle; requires a scalar linear problem where
    drift reduces to a x and diffusion to b x).
    """

    problem: object
    scheme_kinds: Sequence[str]
    h_list: Sequence[float]
    h_ref: float
    t0: float
    T: float
    samples: int
    master_seed: int
    xi: float
    gamma: float = 1.0
    reference: str = "pmm"
    oracle_b: float = 0.0  # diffusion slope for reference="exact"
    error_time: str = "endpoint"  # or "sup" over shared stored nodes

    def __post_init__(self):
        if self.samples < 2:
            raise ValueError("samples must be >= 2")
        if self.reference not in ("pmm", "exact"):
            raise ValueError("reference must be 'pmm' or 'exact'")
        if self.error_time not in ("endpoint", "sup"):
            raise ValueError("error_time must be 'endpoint' or 'sup'")
        for h in self.h_list:
            f = h / self.h_ref
            if abs(f - round(f)) > 1e-9 * round(f) or round(f) < 1:
                raise ValueError(f"h={h} is not an integer multiple of h_ref={self.h_ref}")

    def factor(self, h):
        return round(h / self.h_ref)


@dataclass(frozen=True)
class ErrorRow:
    scheme: str
    h: float
    e_h: float
    stderr: float
    failures: int


@dataclass(frozen=True)
class ErrorTable:
    rows: tuple
    study: ConvergenceStudy

    def rows_for(self, scheme):
        return [r for r in self.rows if r.scheme == scheme]


@dataclass(frozen=True)
class SlopeFit:
    scheme: str
    slope: float
    intercept: float
    ci_halfwidth: float  # 95% band from residual variance

    @property
    def ci(self):
        return (self.slope - self.ci_halfwidth, self.slope + self.ci_halfwidth)


def _reference_values(study, grid):
    """Reference trajectory values on all fine nodes (stride 1)."""
    if study.reference == "exact":
        a = float(study.problem.linear.matrix[0, 0])
        _, vals = exact_linear_solution(a, study.oracle_b, study.xi, grid.view())
        return vals.reshape(-1, 1)
    config = SchemeConfig(kind="pmm", h=study.h_ref, gamma=study.gamma)
    traj = simulate(study.problem, config, grid.view(), study.xi, store_stride=1)
    return traj.values


def _sample_errors(study, i):
    """Squared errors for sample i: dict (scheme, h) -> float or None."""
    grid = sample_grid(derive_seed(study.master_seed, i),
                       study.t0, study.T, study.h_ref, m=study.problem.m)
    ref = _reference_values(study, grid)
    out = {}
    for kind in study.scheme_kinds:
        for h in study.h_list:
            fac = study.factor(h)
            config = SchemeConfig(kind=kind, h=h, gamma=study.gamma)
            try:
                traj = simulate(study.problem, config, grid.view(factor=fac),
                                study.xi, store_stride=1)
            except BlowUpError:
                out[(kind, h)] = None
                continue
            ref_nodes = ref[::fac]
            diff = traj.values - ref_nodes
            sq = np.sum(diff * diff, axis=1)
            out[(kind, h)] = float(sq[-1]) if study.error_time == "endpoint" else float(sq.max())
    return out


def run_study(study, threads=1):
    """Full error table over all schemes and ladder points, deterministic
    given the master seed (per-sample seeds are derived by index)."""
    results = map_samples(lambda i: _sample_errors(study, i), study.samples, threads=threads)
    rows = []
    for kind in study.scheme_kinds:
        for h in study.h_list:
            sq = np.array([r[(kind, h)] for r in results if r[(kind, h)] is not None])
            failures = study.samples - sq.size
            if sq.size == 0:
                rows.append(ErrorRow(scheme=kind, h=h, e_h=math.nan, stderr=math.nan,
                                     failures=failures))
                continue
            msq = float(sq.mean())
            e_h = math.sqrt(msq)
            se_msq = float(sq.std(ddof=1)) / math.sqrt(sq.size) if sq.size > 1 else 0.0
            # delta method: se(sqrt(m)) = se(m) / (2 sqrt(m))
            stderr = se_msq / (2.0 * e_h) if e_h > 0.0 else 0.0
            rows.append(ErrorRow(scheme=kind, h=h, e_h=e_h, stderr=stderr, failures=failures))
    return ErrorTable(rows=tuple(rows), study=study)


def mean_square_error(study, scheme, h, threads=1):
    """Single (scheme, h) cell of the error table: (e_h, stderr)."""
    sub = ConvergenceStudy(
        problem=study.problem, scheme_kinds=(scheme,), h_list=(h,),
        h_ref=study.h_ref, t0=study.t0, T=study.T, samples=study.samples,
        master_seed=study.master_seed, xi=study.xi, gamma=study.gamma,
        reference=study.reference, oracle_b=study.oracle_b,
        error_time=study.error_time,
    )
    row = run_study(sub, threads=threads).rows[0]
    return row.e_h, row.stderr


def slope_fit(table, include_failed=False):
    """OLS slope of log2(e_h) against log2(h) per scheme, with a 95% band
    from the residual variance.  Needs >= 3 usable rows per scheme."""
    fits = {}
    for kind in dict.fromkeys(r.scheme for r in table.rows):
        rows = [r for r in table.rows_for(kind)
                if r.e_h > 0.0 and math.isfinite(r.e_h)
                and (include_failed or r.failures == 0)]
        if len(rows) < 3:
            raise ValueError(f"need >= 3 usable rows for scheme {kind!r}, got {len(rows)}")
        x = np.log2([r.h for r in rows])
        y = np.log2([r.e_h for r in rows])
        n = x.size
        xbar = x.mean()
        sxx = float(np.sum((x - xbar) ** 2))
        slope = float(np.sum((x - xbar) * (y - y.mean())) / sxx)
        intercept = float(y.mean() - slope * xbar)
        resid = y - (intercept + slope * x)
        if n > 2:
            s2 = float(resid @ resid) / (n - 2)
            half = stats.t.ppf(0.975, n - 2) * math.sqrt(s2 / sxx)
        else:
            half = 0.0
        fits[kind] = SlopeFit(scheme=kind, slope=slope, intercept=intercept,
                              ci_halfwidth=float(half))
    return fits
