"""Two-sided Brownian increment grids with counter-addressed sampling.

Increments come from a Philox keystream through the inverse normal CDF, so
entry (j, r) of a grid is a pure function of (master_seed, j, r) and can be
regenerated in isolation.  Coarser stepsizes reuse the same grid by summing
blocks of fine increments (common-random-number coupling); the path shift
underlying the metric dynamical system is a relabelling of the same array.
"""

import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.random import Philox, SeedSequence
from scipy.special import ndtri

__all__ = [
    "ConfigurationError",
    "BrownianGrid",
    "PathView",
    "sample_grid",
    "aggregate",
    "theta_shift",
    "levy_product",
    "derive_seed",
    "save_grid",
    "load_grid",
]

# second Philox key word, fixed so grids keyed by seed alone are well defined
_KEY_TAG = 0x9E3779B97F4A7C15

_HEADER = struct.Struct("<Qdddqq")


class ConfigurationError(ValueError):
    """Grid geometry (stepsize, window, factor) does not line up."""


def derive_seed(master_seed, index):
    """Deterministic per-sample seed from a master seed and sample index."""
    return int(SeedSequence([int(master_seed), int(index)]).generate_state(1, np.uint64)[0])


def _step_count(t0, T, h):
    n = (T - t0) / h
    n_int = round(n)
    if n_int < 1 or abs(n - n_int) > 1e-9 * max(n_int, 1):
        raise ConfigurationError(f"(T - t0)/h = {n} is not a positive integer")
    return n_int


def _keystream_normals(master_seed, count, offset=0):
    """Standard normals at keystream indices offset .. offset+count-1."""
    first_block, pos = divmod(offset, 4)
    ph = Philox(counter=first_block, key=np.array([master_seed, _KEY_TAG], dtype=np.uint64))
    raw = ph.random_raw(pos + count)[pos:]
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u)


@dataclass(frozen=True)
class BrownianGrid:
    """Seeded Wiener increments on [t0, T] at the finest stepsize h_min.

    Entry (j, r) ~ Normal(0, h_min), independent; immutable after sampling.
    """

    t0: float
    T: float
    h_min: float
    m: int
    master_seed: int
    increments: np.ndarray  # (steps, m)

    @property
    def steps(self):
        return self.increments.shape[0]

    def entry(self, j, r):
        """Recompute a single increment independently of the rest."""
        if not (0 <= j < self.steps and 0 <= r < self.m):
            raise IndexError("increment index out of range")
        z = _keystream_normals(self.master_seed, 1, offset=j * self.m + r)[0]
        return z * np.sqrt(self.h_min)

    def index_of(self, t):
        """Grid index of time t; t must sit on the grid."""
        j = (t - self.t0) / self.h_min
        j_int = round(j)
        if abs(j - j_int) > 1e-9 * max(abs(j_int), 1):
            raise ConfigurationError(f"time {t} is not on the grid (h_min={self.h_min})")
        if not (0 <= j_int <= self.steps):
            raise ConfigurationError(f"time {t} outside sampled window [{self.t0}, {self.T}]")
        return j_int

    def view(self, factor=1, t_start=None, t_end=None):
        """Coarsened sub-window view; factor must divide the step count."""
        t_start = self.t0 if t_start is None else t_start
        t_end = self.T if t_end is None else t_end
        i0 = self.index_of(t_start)
        i1 = self.index_of(t_end)
        if i1 <= i0:
            raise ConfigurationError("empty window")
        n_fine = i1 - i0
        if factor < 1 or n_fine % factor != 0:
            raise ConfigurationError(f"factor {factor} does not divide {n_fine} steps")
        fine = self.increments[i0:i1]
        if factor == 1:
            coarse = fine
        else:
            coarse = np.add.reduceat(fine, np.arange(0, n_fine, factor), axis=0)
        if coarse.base is None:
            coarse.setflags(write=False)
        return PathView(
            parent=self,
            t0=self.t0 + i0 * self.h_min,
            h=factor * self.h_min,
            factor=factor,
            increments=coarse,
        )


@dataclass(frozen=True)
class PathView:
    """Read-only view of a grid at an effective stepsize factor * h_min."""

    parent: Optional[BrownianGrid]
    t0: float
    h: float
    factor: int
    increments: np.ndarray  # (steps, m)

    @property
    def steps(self):
        return self.increments.shape[0]

    @property
    def m(self):
        return self.increments.shape[1]

    @property
    def T(self):
        return self.t0 + self.steps * self.h


def sample_grid(master_seed, t0, T, h_min, m=1):
    """Sample a BrownianGrid; every entry is addressed by (seed, j, r)."""
    if h_min <= 0.0:
        raise ConfigurationError("h_min must be positive")
    steps = _step_count(t0, T, h_min)
    z = _keystream_normals(int(master_seed), steps * m)
    increments = (z * np.sqrt(h_min)).reshape(steps, m)
    increments.setflags(write=False)
    return BrownianGrid(
        t0=float(t0), T=float(T), h_min=float(h_min), m=int(m),
        master_seed=int(master_seed), increments=increments,
    )


def aggregate(grid, factor):
    """Coarse view over the full window; blocks of `factor` fine increments."""
    return grid.view(factor=factor)


def theta_shift(grid, s):
    """Shift of the driving path: the returned grid's increment over
    [t, t+h] equals the parent's over [t+s, t+s+h].  Implemented as a time
    relabelling of the shared increment array; s must sit on the grid."""
    k = s / grid.h_min
    k_int = round(k)
    if abs(k - k_int) > 1e-9 * max(abs(k_int), 1):
        raise ConfigurationError(f"shift {s} is not a multiple of h_min={grid.h_min}")
    return BrownianGrid(
        t0=grid.t0 - s,
        T=grid.T - s,
        h_min=grid.h_min,
        m=grid.m,
        master_seed=grid.master_seed,
        increments=grid.increments,
    )


def levy_product(dW, h):
    """Symmetrized iterated-integral surrogate for commutative noise:
    P[r1, r2] = (dW_r1 dW_r2 - delta_{r1 r2} h) / 2."""
    if h <= 0.0:
        raise ValueError("h must be positive")
    dW = np.atleast_1d(np.asarray(dW, dtype=float))
    return 0.5 * (np.outer(dW, dW) - h * np.eye(dW.size))


def save_grid(grid, path):
    """Binary dump: little-endian header (seed, t0, T, h_min, m, steps)
    followed by the row-major float64 increment matrix."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(grid.master_seed, grid.t0, grid.T, grid.h_min, grid.m, grid.steps))
        fh.write(np.ascontiguousarray(grid.increments, dtype="<f8").tobytes())


def load_grid(path):
    with open(path, "rb") as fh:
        seed, t0, T, h_min, m, steps = _HEADER.unpack(fh.read(_HEADER.size))
        body = fh.read(steps * m * 8)
    if len(body) != steps * m * 8:
        raise ConfigurationError("truncated grid dump")
    increments = np.frombuffer(body, dtype="<f8").reshape(steps, m).astype(np.float64)
    increments.setflags(write=False)
    return BrownianGrid(t0=t0, T=T, h_min=h_min, m=m, master_seed=seed, increments=increments)
