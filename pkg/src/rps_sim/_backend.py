"""Backend selection: compiled step kernels when available, Python otherwise.

Set RPS_SIM_BACKEND=python to force the fallback, RPS_SIM_BACKEND=compiled to
insist on the extension (raises if it did not build).
"""

import os

from . import _kernels_py

try:
    from . import _speedups
except ImportError:  # extension not built
    _speedups = None

_forced = os.environ.get("RPS_SIM_BACKEND", "").strip().lower()
if _forced in ("python", "py"):
    _impl = _kernels_py
elif _forced in ("compiled", "c"):
    if _speedups is None:
        raise ImportError("RPS_SIM_BACKEND=compiled but the extension is not built")
    _impl = _speedups
else:
    _impl = _speedups if _speedups is not None else _kernels_py


def active_backend():
    return "compiled" if _impl is _speedups else "python"


def compiled_available():
    return _speedups is not None


def get_kernel(backend=None):
    """The simulate_native kernel for a backend name (default: active)."""
    if backend is None:
        return _impl.simulate_native
    if backend in ("python", "py"):
        return _kernels_py.simulate_native
    if backend in ("compiled", "c"):
        if _speedups is None:
            raise RuntimeError("compiled backend requested but not built")
        return _speedups.simulate_native
    raise ValueError(f"unknown backend {backend!r}")
