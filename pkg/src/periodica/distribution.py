"""Empirical measures, W1 / KS comparisons and the periodic OU reference law."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import simpson

from .core import CoverageError, PathEnsemble, wrap_time

QUANTILE_NODES = 2**12
N_PROJECTIONS = 64
PROJECTION_SEED = 20240611
KS_C_ALPHA_1PCT = math.sqrt(-0.5 * math.log(0.01 / 2))


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2 or s.shape[0] < 2:
            raise ValueError("an empirical measure needs at least two samples")
        if not np.all(np.isfinite(s)):
            raise ValueError("samples must be finite")
        object.__setattr__(self, "samples", s)

    @property
    def n(self):
        return self.samples.shape[0]

    @property
    def dim(self):
        return self.samples.shape[1]

    def coordinate(self, i):
        return self.samples[:, i]

    def to_csv(self, path):
        header = ",".join(f"x_{i + 1}" for i in range(self.dim))
        np.savetxt(path, self.samples, delimiter=",", header=header, comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path):
        return cls(np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2))


def _as_measure(p):
    return p if isinstance(p, EmpiricalMeasure) else EmpiricalMeasure(p)


def _w1_1d(a, b):
    if a.size == b.size:
        return float(np.mean(np.abs(np.sort(a) - np.sort(b))))
    q = (np.arange(QUANTILE_NODES) + 0.5) / QUANTILE_NODES
    return float(np.mean(np.abs(np.quantile(a, q) - np.quantile(b, q))))


def _projections(d, n=N_PROJECTIONS, seed=PROJECTION_SEED):
    v = np.random.default_rng(seed).standard_normal((n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def sliced_wasserstein1(p, q, n_projections=N_PROJECTIONS):
    p, q = _as_measure(p), _as_measure(q)
    dirs = _projections(p.dim, n_projections)
    return float(np.mean([_w1_1d(p.samples @ v, q.samples @ v) for v in dirs]))


def wasserstein1(p, q) -> float:
    """Exact W1 in one dimension, sliced W1 over fixed projections otherwise."""
    p, q = _as_measure(p), _as_measure(q)
    if p.dim != q.dim:
        raise ValueError(f"dimension mismatch: {p.dim} vs {q.dim}")
    if p.dim == 1:
        return _w1_1d(p.samples[:, 0], q.samples[:, 0])
    return sliced_wasserstein1(p, q)


def coordinate_wasserstein1(p, q):
    p, q = _as_measure(p), _as_measure(q)
    if p.dim != q.dim:
        raise ValueError(f"dimension mismatch: {p.dim} vs {q.dim}")
    return [_w1_1d(p.samples[:, i], q.samples[:, i]) for i in range(p.dim)]


def law_distance(p, q):
    """Governing distance: max of coordinatewise W1 and sliced W1 (equal in 1D)."""
    p, q = _as_measure(p), _as_measure(q)
    coords = coordinate_wasserstein1(p, q)
    if p.dim == 1:
        return coords[0]
    return max(max(coords), sliced_wasserstein1(p, q))


def wasserstein2_squared_1d(a, b):
    a, b = np.sort(np.ravel(a)), np.sort(np.ravel(b))
    if a.size != b.size:
        q = (np.arange(QUANTILE_NODES) + 0.5) / QUANTILE_NODES
        a, b = np.quantile(a, q), np.quantile(b, q)
    return float(np.mean((a - b) ** 2))


def ks_statistic(a, b):
    a, b = np.sort(np.ravel(a)), np.sort(np.ravel(b))
    pts = np.concatenate([a, b])
    fa = np.searchsorted(a, pts, side="right") / a.size
    fb = np.searchsorted(b, pts, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_two_sample(p, q, coordinate=0):
    """Two-sample KS statistic on one coordinate and its verdict at level 0.01.

    Uses the asymptotic critical value c(0.01) * sqrt((n + m) / (n m)).
    """
    p, q = _as_measure(p), _as_measure(q)
    if not 0 <= coordinate < min(p.dim, q.dim):
        raise ValueError(f"coordinate {coordinate} out of range")
    stat = ks_statistic(p.samples[:, coordinate], q.samples[:, coordinate])
    n, m = p.n, q.n
    crit = KS_C_ALPHA_1PCT * math.sqrt((n + m) / (n * m))
    return stat, stat <= crit


def periodicity_scan(paths: PathEnsemble, theta, n_probes=16):
    """W1 between the laws at t and t + theta for evenly spaced t in [0, (k-1) theta].

    Returns ``(profile, max)`` where ``profile`` has rows ``(t, distance)``.
    """
    grid = paths.grid
    spp = theta / grid.dt
    steps_per_period = int(round(spp))
    if not math.isclose(spp, steps_per_period, rel_tol=1e-9):
        raise ValueError("theta is not a whole number of grid steps")
    k = grid.n_steps // steps_per_period
    if k < 2:
        raise CoverageError("periodicity_scan needs at least two periods")
    span = (k - 1) * steps_per_period
    idx = np.unique(np.rint(np.linspace(0, span, n_probes)).astype(int))
    rows = []
    for i in idx:
        d = law_distance(paths.at(i), paths.at(i + steps_per_period))
        rows.append((grid.t(i), d))
    profile = np.array(rows)
    return profile, float(profile[:, 1].max())


@dataclass(frozen=True)
class OuOracle:
    """dx = (mu(t) - a x) dt + sigma dB with theta-periodic mu."""

    a: float
    sigma: float
    mu: Callable[[np.ndarray], np.ndarray]
    theta: float

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"mean reversion a must be positive, got {self.a}")
        if self.sigma < 0 or not self.theta > 0:
            raise ValueError("sigma must be >= 0 and theta > 0")


SIMPSON_NODES = 2**14


def _simpson(fn, lo, hi, n=SIMPSON_NODES):
    if hi <= lo:
        return 0.0
    s = np.linspace(lo, hi, n + 1)
    return float(simpson(fn(s), x=s))


def ou_periodic_law(oracle: OuOracle, t):
    """Mean and variance of the unique theta-periodic Gaussian law at time t."""
    a, theta = oracle.a, oracle.theta
    t = wrap_time(t, theta)
    mu = oracle.mu
    m0 = _simpson(lambda s: np.exp(-a * (theta - s)) * mu(s), 0.0, theta) / -math.expm1(-a * theta)
    # e^{-at} folded into the integrand keeps it bounded for large a*t
    mean = m0 * math.exp(-a * t) + _simpson(lambda s: np.exp(-a * (t - s)) * mu(s), 0.0, t)
    return mean, oracle.sigma**2 / (2 * a)
