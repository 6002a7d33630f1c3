"""Pure-Python scalar step kernels, the fallback twin of ``_speedups``.

Arithmetic here mirrors the compiled kernel expression by expression so the
two backends produce bit-identical trajectories.  Keep any change in sync
with ``_speedups.pyx``.
"""

from math import cos, fmod, isfinite, pi

# scheme kinds
KIND_PMM = 0
KIND_PEM = 1
KIND_EM = 2

# native coefficient codes (see problems registry)
CODE_BENCHMARK = 0
CODE_GBM = 1
CODE_OU = 2


def simulate_native(code, params, kind, a, tau, gamma, h, t0, x0, dW, out, stride):
    """Run a scalar scheme over the increments dW, storing every stride-th
    node (plus the first and last) into out.  Returns the step index of the
    first non-finite state, or -1 on success."""
    n = dW.shape[0]
    cap = h ** (-1.0 / (2.0 * gamma))
    if code == CODE_GBM:
        b = params[0]
    elif code == CODE_OU:
        c_f = params[0]
        sigma = params[1]
    x = x0
    out[0] = x
    k = 1
    for j in range(n):
        tmod = fmod(t0 + j * h, tau)
        if tmod < 0.0:
            tmod += tau
        dw = dW[j]
        if kind == KIND_EM:
            y = x
        elif x != 0.0:
            ax = abs(x)
            y = x * (cap / ax) if ax > cap else x
        else:
            y = 0.0
        if code == CODE_BENCHMARK:
            c = cos(pi * tmod)
            fv = y - y * y * y + c
            gv = 1.0 + y * y + c
            lg = 2.0 * y * gv
        elif code == CODE_GBM:
            fv = 0.0
            gv = b * y
            lg = b * (b * y)
        else:  # CODE_OU
            fv = c_f * cos(pi * tmod)
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
