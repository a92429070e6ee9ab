"""Problem description, time grids and reproducible Brownian noise.

Coefficients are vectorised over paths: ``drift(t, x)`` takes a scalar time
and an ``(n_paths, d)`` array and returns ``(n_paths, d)``; ``diffusion(t, x)``
returns ``(n_paths, d, r)``.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

Drift = Callable[[float, np.ndarray], np.ndarray]
Diffusion = Callable[[float, np.ndarray], np.ndarray]


class InvalidSpecError(ValueError):
    pass


class CoverageError(IndexError):
    """Raised when a noise ensemble does not cover the requested periods."""


class IntegrationBlowupError(FloatingPointError):
    def __init__(self, path, step, message=None):
        self.path = path
        self.step = step
        super().__init__(message or f"non-finite state on path {path} at step {step}")


def wrap_time(t, theta):
    """Reduce ``t`` into ``[0, theta)``; exact multiples of ``theta`` map to 0."""
    r = t - theta * math.floor(t / theta)
    if r >= theta or r < 0.0:
        return 0.0
    return r


@dataclass(frozen=True)
class SdeSpec:
    drift: Drift
    diffusion: Diffusion
    dim_state: int
    dim_noise: int
    period: float
    name: str = "sde"
    wrapped: bool = False

    def __post_init__(self):
        if self.dim_state < 1 or self.dim_noise < 1:
            raise InvalidSpecError("dimensions must be positive")
        if not self.period > 0:
            raise InvalidSpecError(f"period must be positive, got {self.period}")

    def f(self, t, x):
        return np.asarray(self.drift(t, x), dtype=float)

    def g(self, t, x):
        return np.asarray(self.diffusion(t, x), dtype=float)


def periodic_wrap(spec: SdeSpec) -> SdeSpec:
    """Return a spec whose coefficients are evaluated at ``t mod period``."""
    if not spec.period > 0:
        raise InvalidSpecError(f"period must be positive, got {spec.period}")
    if spec.wrapped:
        return spec
    theta = spec.period
    drift, diffusion = spec.drift, spec.diffusion

    def wrapped_drift(t, x):
        return drift(wrap_time(t, theta), x)

    def wrapped_diffusion(t, x):
        return diffusion(wrap_time(t, theta), x)

    return replace(spec, drift=wrapped_drift, diffusion=wrapped_diffusion, wrapped=True)


@dataclass(frozen=True)
class TimeGrid:
    t_start: float
    t_end: float
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be positive")
        if not self.t_end > self.t_start:
            raise ValueError("t_end must exceed t_start")

    @classmethod
    def over_period(cls, theta, n_steps, n_periods=1):
        return cls(0.0, n_periods * theta, n_periods * n_steps)

    @property
    def dt(self):
        return (self.t_end - self.t_start) / self.n_steps

    def t(self, k):
        return self.t_start + k * self.dt

    @property
    def times(self):
        return self.t_start + np.arange(self.n_steps + 1) * self.dt


def _thread_count():
    try:
        return max(1, int(os.environ.get("PERIODICA_THREADS", "1")))
    except ValueError:
        return 1


def _path_normals(seed, stream, path, n_steps, r):
    ss = np.random.SeedSequence(seed, spawn_key=(stream, path))
    gen = np.random.Generator(np.random.Philox(ss))
    return gen.standard_normal((n_steps, r))


@dataclass(frozen=True, eq=False)
class NoiseEnsemble:
    """Brownian increments, ``increments[p, k, j] ~ N(0, dt)``.

    Path ``p`` draws from a Philox stream keyed by ``(seed, stream, p)``, so
    its increments do not depend on ``n_paths`` or on evaluation order, and the
    first ``k`` steps of a longer ensemble equal a shorter one on the same dt.
    """

    seed: int
    n_paths: int
    grid: TimeGrid
    increments: np.ndarray
    stream: int = 0

    @property
    def dim_noise(self):
        return self.increments.shape[2]

    @property
    def n_steps(self):
        return self.increments.shape[1]

    def brownian(self):
        """Brownian paths B(t_k), shape ``(n_paths, n_steps + 1, r)``."""
        b = np.zeros((self.n_paths, self.n_steps + 1, self.dim_noise))
        np.cumsum(self.increments, axis=1, out=b[:, 1:, :])
        return b

    def coarsen(self, factor):
        """Sum blocks of ``factor`` consecutive increments (same Brownian path)."""
        if self.n_steps % factor:
            raise ValueError("factor must divide n_steps")
        inc = self.increments.reshape(self.n_paths, self.n_steps // factor, factor, -1).sum(axis=2)
        grid = TimeGrid(self.grid.t_start, self.grid.t_end, self.n_steps // factor)
        return replace(self, grid=grid, increments=inc)

    def subset(self, n):
        return replace(self, n_paths=n, increments=self.increments[:n])


def make_noise(seed, n_paths, grid, r, stream=0) -> NoiseEnsemble:
    if n_paths < 1 or r < 1:
        raise ValueError("n_paths and r must be positive")
    seed = int(seed) % 2**64
    inc = np.empty((n_paths, grid.n_steps, r))
    scale = math.sqrt(grid.dt)

    def fill(lo, hi):
        for p in range(lo, hi):
            inc[p] = _path_normals(seed, stream, p, grid.n_steps, r)

    workers = min(_thread_count(), n_paths)
    if workers == 1:
        fill(0, n_paths)
    else:
        bounds = np.linspace(0, n_paths, workers + 1).astype(int)
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(fill, bounds[:-1], bounds[1:]))
    inc *= scale
    return NoiseEnsemble(seed, n_paths, grid, inc, stream)


def shift_noise(noise: NoiseEnsemble, k_periods, steps_per_period) -> NoiseEnsemble:
    """Increments of period ``k`` re-indexed to start at time 0."""
    lo = k_periods * steps_per_period
    hi = lo + steps_per_period
    if k_periods < 0 or hi > noise.n_steps:
        raise CoverageError(
            f"noise has {noise.n_steps} steps, period {k_periods} needs steps [{lo}, {hi})"
        )
    dt = noise.grid.dt
    grid = TimeGrid(0.0, steps_per_period * dt, steps_per_period)
    return replace(noise, grid=grid, increments=noise.increments[:, lo:hi, :])


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    grid: TimeGrid
    values: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.values.ndim != 3 or self.values.shape[1] != self.grid.n_steps + 1:
            raise ValueError(f"values shape {self.values.shape} does not match grid")
        if not np.all(np.isfinite(self.values)):
            bad = np.argwhere(~np.isfinite(self.values))[0]
            raise IntegrationBlowupError(int(bad[0]), int(bad[1]))

    @property
    def n_paths(self):
        return self.values.shape[0]

    @property
    def dim(self):
        return self.values.shape[2]

    def at(self, k):
        return self.values[:, k, :]

    def initial(self):
        return self.values[:, 0, :]

    def final(self):
        return self.values[:, -1, :]
