"""Shared fixtures and helper problem factories for the test suite."""

import numpy as np
import pytest

from rps_sim.problems import CoefficientField, LinearPart, SdeProblem


def make_scalar_problem(a=-1.0, f=None, g=None, dg=None, tau=1.0, gamma=1.0,
                        label="custom"):
    """Scalar SdeProblem with explicit coefficients (no native kernel, so it
    always exercises the generic per-step path)."""
    if f is None:
        f = lambda t, x: np.zeros_like(np.atleast_1d(x))
    if g is None:
        g = lambda t, x: np.zeros_like(np.atleast_1d(x))
        dg = lambda t, x: np.array([[0.0]])
    return SdeProblem(
        linear=LinearPart.scalar(a),
        coeffs=CoefficientField(
            drift=f,
            diffusion=(g,),
            diffusion_jacobians=(dg,) if dg is not None else None,
            period=tau,
            growth_exponent=gamma,
        ),
        m=1,
        label=label,
    )


def zero_noise_problem(a=-1.0, tau=1.0):
    """dX = aX dt: deterministic linear contraction, useful as a closed-form
    oracle for the experiment drivers."""
    return make_scalar_problem(a=a, tau=tau, label="zero-noise")


@pytest.fixture(scope="session")
def benchmark():
    from rps_sim import benchmark_problem

    return benchmark_problem()
