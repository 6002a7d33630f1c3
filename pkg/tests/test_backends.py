"""Backend selection and bit-identity of the compiled and pure kernels."""

import os
import subprocess
import sys

import numpy as np
import pytest

from rps_sim import (
    SchemeConfig,
    active_backend,
    benchmark_problem,
    compiled_available,
    gbm_problem,
    ou_problem,
    sample_grid,
    simulate,
)
from rps_sim._backend import get_kernel


def test_compiled_backend_is_available():
    # the build ships the extension; the pure-Python kernel is the fallback
    assert compiled_available()
    assert active_backend() in ("compiled", "python")


def test_get_kernel_rejects_unknown_name():
    with pytest.raises(ValueError):
        get_kernel("fortran")


@pytest.mark.parametrize("factory", [benchmark_problem, gbm_problem, ou_problem])
@pytest.mark.parametrize("kind", ["pmm", "pem", "em"])
def test_backends_bit_identical(factory, kind):
    problem = factory()
    grid = sample_grid(17, -2.0, 2.0, 0.01)
    cfg = SchemeConfig(kind=kind, h=0.01, gamma=problem.gamma)
    t_c = simulate(problem, cfg, grid.view(), 0.4, backend="compiled")
    t_p = simulate(problem, cfg, grid.view(), 0.4, backend="python")
    assert np.array_equal(t_c.values, t_p.values)


def test_native_matches_generic_path(benchmark):
    # strip the native tag so the same run goes through the per-step functions
    from dataclasses import replace

    grid = sample_grid(23, 0.0, 1.0, 0.01)
    cfg = SchemeConfig(kind="pmm", h=0.01, gamma=3.0)
    fast = simulate(benchmark, cfg, grid.view(), 0.5)
    slow = simulate(replace(benchmark, native=None), cfg, grid.view(), 0.5)
    np.testing.assert_allclose(fast.values, slow.values, rtol=1e-12, atol=1e-14)


def test_env_var_selects_python_backend():
    code = "import rps_sim; print(rps_sim.active_backend())"
    env = dict(os.environ, RPS_SIM_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
