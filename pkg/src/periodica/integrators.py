"""Pathwise solvers driven by a shared NoiseEnsemble.

Both schemes evaluate coefficients at the left endpoint of each step (Ito).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import IntegrationBlowupError, NoiseEnsemble, PathEnsemble, SdeSpec, TimeGrid

SCHEMES = ("euler_maruyama", "exponential_euler")


def _bound(b, t):
    return np.asarray(b(t) if callable(b) else b, dtype=float)


@dataclass(frozen=True)
class IntegratorConfig:
    """``clamp_box`` bounds the state *argument* of f and g, not the state.

    Each bound is an array of shape ``(d,)`` or a callable ``t -> (d,)``.
    """

    scheme: str = "euler_maruyama"
    clamp_box: Optional[tuple] = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.clamp_box is not None:
            lo, hi = self.clamp_box
            if not callable(lo) and not callable(hi):
                if not np.all(np.asarray(lo) < np.asarray(hi)):
                    raise ValueError("clamp_box lower must be below upper")


class _Clamp:
    def __init__(self, box):
        self.box = box
        self.count = 0

    def __call__(self, t, x):
        if self.box is None:
            return x
        lo, hi = _bound(self.box[0], t), _bound(self.box[1], t)
        y = np.clip(x, lo, hi)
        self.count += int(np.count_nonzero(y != x))
        return y


def _check_inputs(init, noise, grid, d, r):
    init = np.array(init, dtype=float)
    if init.ndim == 1:
        init = init[:, None] if d == 1 else np.broadcast_to(init, (noise.n_paths, d)).copy()
    if init.shape != (noise.n_paths, d):
        raise ValueError(f"init shape {init.shape} != ({noise.n_paths}, {d})")
    if not np.all(np.isfinite(init)):
        raise ValueError("initial condition must be finite")
    if noise.dim_noise != r:
        raise ValueError(f"noise has {noise.dim_noise} coordinates, spec expects {r}")
    if noise.n_steps != grid.n_steps or not math.isclose(noise.grid.dt, grid.dt):
        raise ValueError("noise increments do not match the time grid")
    return init


def _assert_finite(x, k):
    if not np.all(np.isfinite(x)):
        p = int(np.argwhere(~np.all(np.isfinite(x), axis=1))[0, 0])
        raise IntegrationBlowupError(p, k)


def _noise_term(gval, db):
    if gval.shape[2] == 1:
        return gval[:, :, 0] * db
    return np.matmul(gval, db[:, :, None])[:, :, 0]


def integrate(
    spec: SdeSpec,
    init,
    noise: NoiseEnsemble,
    grid: TimeGrid,
    cfg: IntegratorConfig = IntegratorConfig(),
) -> PathEnsemble:
    """Euler-Maruyama: x_{k+1} = x_k + f(t_k, x_k) dt + g(t_k, x_k) dB_k."""
    d, r = spec.dim_state, spec.dim_noise
    x = _check_inputs(init, noise, grid, d, r)
    dt = grid.dt
    clamp = _Clamp(cfg.clamp_box)
    out = np.empty((noise.n_paths, grid.n_steps + 1, d))
    out[:, 0] = x
    for k in range(grid.n_steps):
        t = grid.t(k)
        xe = clamp(t, x)
        x = x + spec.f(t, xe) * dt + _noise_term(spec.g(t, xe), noise.increments[:, k])
        _assert_finite(x, k + 1)
        out[:, k + 1] = x
    prov = {"spec": spec.name, "seed": noise.seed, "stream": noise.stream,
            "integrator": "euler_maruyama", "clamped": clamp.count}
    return PathEnsemble(grid, out, prov)


def _exponential(rate, forcing, diffusion, init, noise, grid, clamp_box, name):
    d = init.shape[1]
    dt = grid.dt
    decay = math.exp(-rate * dt)
    gain = -math.expm1(-rate * dt) / rate
    clamp = _Clamp(clamp_box)
    u = init
    out = np.empty((noise.n_paths, grid.n_steps + 1, d))
    out[:, 0] = u
    for k in range(grid.n_steps):
        t = grid.t(k)
        gval = diffusion(t, clamp(t, u))
        u = decay * (u + _noise_term(gval, noise.increments[:, k])) + gain * forcing(t, k, u)
        _assert_finite(u, k + 1)
        out[:, k + 1] = u
    prov = {"spec": name, "seed": noise.seed, "stream": noise.stream,
            "integrator": "exponential_euler", "clamped": clamp.count}
    return PathEnsemble(grid, out, prov)


def integrate_exponential(
    M: float,
    forcing: Callable[[float, int, np.ndarray], np.ndarray],
    spec_diffusion,
    init,
    noise: NoiseEnsemble,
    grid: TimeGrid,
    cfg: IntegratorConfig = IntegratorConfig(scheme="exponential_euler"),
    name: str = "relaxation",
) -> PathEnsemble:
    """Exponential Euler for du = (forcing - M u) dt + g(t, u) dB.

    One step is ``u <- e^{-M dt} (u + g dB) + (1 - e^{-M dt}) / M * forcing``,
    exact when g vanishes and the forcing is constant over the step.
    ``forcing(t, k, u)`` receives the grid time, step index and current state.
    """
    if not M > 0:
        raise ValueError(f"M must be positive, got {M}")
    r = noise.dim_noise
    d = np.asarray(init).shape[1] if np.ndim(init) == 2 else 1
    init = _check_inputs(init, noise, grid, d, r)
    return _exponential(M, forcing, spec_diffusion, init, noise, grid, cfg.clamp_box, name)


def integrate_relaxation(rate, forcing, spec_diffusion, init, noise, grid, clamp_box=None, name="relaxation"):
    """Like :func:`integrate_exponential` but ``rate`` may be negative."""
    if rate == 0:
        raise ValueError("rate must be non-zero")
    d = np.asarray(init).shape[1] if np.ndim(init) == 2 else 1
    init = _check_inputs(init, noise, grid, d, noise.dim_noise)
    return _exponential(rate, forcing, spec_diffusion, init, noise, grid, clamp_box, name)
