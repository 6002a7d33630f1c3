# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled scalar step kernels; the hot loop of every experiment.

Must stay expression-for-expression in sync with ``_kernels_py`` so both
backends produce bit-identical trajectories.
"""

from libc.math cimport cos, fabs, fmod, isfinite, pow, M_PI


# scheme kinds / coefficient codes shared with _kernels_py
DEF KIND_PMM = 0
DEF KIND_PEM = 1
DEF KIND_EM = 2

DEF CODE_BENCHMARK = 0
DEF CODE_GBM = 1
DEF CODE_OU = 2


def simulate_native(int code, tuple params, int kind, double a, double tau,
                    double gamma, double h, double t0, double x0,
                    const double[::1] dW, double[::1] out, long stride):
    """See _kernels_py.simulate_native; same contract, compiled."""
    cdef double p0 = 0.0, p1 = 0.0
    if len(params) > 0:
        p0 = params[0]
    if len(params) > 1:
        p1 = params[1]
    cdef long fail
    with nogil:
        fail = _run(code, p0, p1, kind, a, tau, gamma, h, t0, x0,
                    &dW[0], dW.shape[0], &out[0], stride)
    return fail


cdef long _run(int code, double p0, double p1, int kind, double a, double tau,
               double gamma, double h, double t0, double x0,
               const double* dW, long n, double* out, long stride) noexcept nogil:
    cdef double cap = pow(h, -1.0 / (2.0 * gamma))
    cdef double b = p0, c_f = p0, sigma = p1
    cdef double x = x0, y, ax, dw, tmod, c, fv, gv, lg
    cdef long j, jp, k = 1
    out[0] = x
    for j in range(n):
        tmod = fmod(t0 + j * h, tau)
        if tmod < 0.0:
            tmod += tau
        dw = dW[j]
        if kind == KIND_EM:
            y = x
        elif x != 0.0:
            ax = fabs(x)
            if ax > cap:
                y = x * (cap / ax)
            else:
                y = x
        else:
            y = 0.0
        if code == CODE_BENCHMARK:
            c = cos(M_PI * tmod)
            fv = y - y * y * y + c
            gv = 1.0 + y * y + c
            lg = 2.0 * y * gv
        elif code == CODE_GBM:
            fv = 0.0
            gv = b * y
            lg = b * (b * y)
        else:
            fv = c_f * cos(M_PI * tmod)
            gv = sigma
            lg = 0.0
        if kind == KIND_PMM:
            x = y + h * (a * y) + h * fv + gv * dw + lg * (0.5 * (dw * dw - h))
        elif kind == KIND_PEM:
            x = y + h * (a * y) + h * fv + gv * dw
        else:
            x = x + h * (a * x + fv) + gv * dw
        if not isfinite(x):
            return j
        jp = j + 1
        if jp % stride == 0 or jp == n:
            out[k] = x
            k += 1
    return -1
