"""Mean-square convergence studies and slope fitting."""

import math

import numpy as np
import pytest

from rps_sim import ConvergenceStudy, gbm_problem, mean_square_error, run_study, slope_fit
from rps_sim.msq import ErrorRow, ErrorTable

from conftest import zero_noise_problem


def _study(problem, **kw):
    base = dict(problem=problem, scheme_kinds=("pmm",), h_list=(0.1,), h_ref=0.1,
                t0=0.0, T=1.0, samples=4, master_seed=1, xi=1.0, gamma=1.0)
    base.update(kw)
    return ConvergenceStudy(**base)


def test_study_validation():
    p = zero_noise_problem()
    with pytest.raises(ValueError, match="samples"):
        _study(p, samples=1)
    with pytest.raises(ValueError, match="reference"):
        _study(p, reference="exact-ish")
    with pytest.raises(ValueError, match="error_time"):
        _study(p, error_time="average")
    with pytest.raises(ValueError, match="multiple"):
        _study(p, h_list=(0.15,), h_ref=0.1)
    assert _study(p, h_list=(0.4,), h_ref=0.1).factor(0.4) == 4


def test_reference_scheme_at_reference_step_is_exact():
    # scheme == reference and h == h_ref: the two runs are the same run
    table = run_study(_study(zero_noise_problem()))
    assert table.rows[0].e_h == 0.0
    assert table.rows[0].failures == 0


def test_deterministic_under_repeated_seed():
    p = gbm_problem()
    st = _study(p, h_list=(0.25, 0.125), h_ref=0.0625, samples=6,
                scheme_kinds=("pmm", "em"))
    t1, t2 = run_study(st), run_study(st)
    assert [(r.e_h, r.stderr) for r in t1.rows] == [(r.e_h, r.stderr) for r in t2.rows]


def test_thread_count_invariant():
    p = gbm_problem()
    st = _study(p, h_list=(0.25,), h_ref=0.0625, samples=8)
    t1 = run_study(st, threads=1)
    t3 = run_study(st, threads=3)
    assert t1.rows[0].e_h == t3.rows[0].e_h


def test_zero_noise_deterministic_error():
    # PMM on dX = -X dt at h = 0.1 vs the exact flow over [0,1]:
    # |0.9^10 - e^-1| = 0.019201... for every sample
    st = _study(zero_noise_problem(), reference="exact", oracle_b=0.0,
                h_list=(0.1,), h_ref=0.1)
    table = run_study(st)
    assert table.rows[0].e_h == pytest.approx(abs(0.9**10 - math.exp(-1.0)), rel=1e-10)
    assert table.rows[0].stderr == pytest.approx(0.0, abs=1e-15)


def test_gbm_oracle_error_halves_with_h():
    # order-one scheme against the exact oracle: e_h halves (within 20%)
    # whenever h halves
    st = _study(gbm_problem(), reference="exact", oracle_b=0.25,
                h_list=tuple(2.0**-i for i in range(4, 8)), h_ref=2.0**-11,
                samples=300, master_seed=11)
    table = run_study(st, threads=2)
    es = [r.e_h for r in table.rows_for("pmm")]
    for hi, lo in zip(es, es[1:]):
        assert 1.6 <= hi / lo <= 2.4


def test_mean_square_error_single_cell():
    st = _study(gbm_problem(), h_list=(0.25, 0.125), h_ref=0.0625, samples=6)
    table = run_study(st)
    e, se = mean_square_error(st, "pmm", 0.25)
    row = table.rows_for("pmm")[0]
    assert (e, se) == (row.e_h, row.stderr)


def _synthetic_table(exponent, hs=(0.2, 0.1, 0.05, 0.025)):
    rows = tuple(ErrorRow(scheme="pmm", h=h, e_h=3.0 * h**exponent, stderr=0.0,
                          failures=0) for h in hs)
    return ErrorTable(rows=rows, study=None)


def test_slope_fit_exact_order_one():
    fit = slope_fit(_synthetic_table(1.0))["pmm"]
    assert fit.slope == pytest.approx(1.0, abs=1e-12)
    assert fit.ci_halfwidth == pytest.approx(0.0, abs=1e-9)


def test_slope_fit_exact_order_half():
    fit = slope_fit(_synthetic_table(0.5))["pmm"]
    assert fit.slope == pytest.approx(0.5, abs=1e-12)
    assert fit.ci[0] <= 0.5 <= fit.ci[1]


def test_slope_fit_needs_three_rows():
    table = ErrorTable(rows=tuple(_synthetic_table(1.0).rows[:2]), study=None)
    with pytest.raises(ValueError, match="3 usable rows"):
        slope_fit(table)


def test_slope_fit_skips_failed_rows_by_default():
    rows = list(_synthetic_table(1.0).rows)
    rows[0] = ErrorRow(scheme="pmm", h=rows[0].h, e_h=99.0, stderr=0.0, failures=5)
    table = ErrorTable(rows=tuple(rows), study=None)
    assert slope_fit(table)["pmm"].slope == pytest.approx(1.0, abs=1e-12)
    assert slope_fit(table, include_failed=True)["pmm"].slope != pytest.approx(1.0, abs=1e-3)
