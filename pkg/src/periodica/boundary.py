"""Upper/lower solutions of the drift ODE, hypothesis constants and envelopes."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .core import NoiseEnsemble, PathEnsemble, SdeSpec, TimeGrid
from .integrators import IntegratorConfig, integrate_relaxation

LN2 = math.log(2.0)
CHECK_POINTS = 1024
MAX_VIOLATIONS = 20


class InvalidPairError(ValueError):
    pass


@dataclass(frozen=True)
class Curve:
    """A C^1 curve t -> R^d given with its derivative."""

    value: Callable[[float], np.ndarray]
    derivative: Callable[[float], np.ndarray]

    def __call__(self, t):
        return np.atleast_1d(np.asarray(self.value(t), dtype=float))

    def prime(self, t):
        return np.atleast_1d(np.asarray(self.derivative(t), dtype=float))

    def on(self, times):
        return np.array([self(t) for t in times])

    def prime_on(self, times):
        return np.array([self.prime(t) for t in times])

    @classmethod
    def constant(cls, c):
        c = np.atleast_1d(np.asarray(c, dtype=float))
        zero = np.zeros_like(c)
        return cls(lambda t: c, lambda t: zero)

    @classmethod
    def linear(cls, c0, slope):
        c0 = np.atleast_1d(np.asarray(c0, dtype=float))
        slope = np.broadcast_to(np.asarray(slope, dtype=float), c0.shape).copy()
        return cls(lambda t: c0 + slope * t, lambda t: slope)

    @classmethod
    def from_samples(cls, t, y):
        """Cubic spline through ``(t_k, y_k)``; the derivative comes from the spline."""
        y = np.asarray(y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        spline = CubicSpline(np.asarray(t, dtype=float), y, axis=0)
        dspline = spline.derivative()
        return cls(lambda s: spline(s), lambda s: dspline(s))


@dataclass(frozen=True)
class BoundaryPair:
    alpha: Curve
    beta: Curve
    theta: float
    xi: Optional[np.ndarray] = None

    def __post_init__(self):
        times = np.linspace(0.0, self.theta, CHECK_POINTS + 1)
        width = self.beta.on(times) - self.alpha.on(times)
        if np.any(width <= 0):
            k = int(np.argwhere(width <= 0)[0, 0])
            raise InvalidPairError(f"alpha >= beta at t={times[k]:.6g}")
        min_width = width.min(axis=0)
        xi = 0.01 * min_width.min() * np.ones_like(min_width) if self.xi is None else self.xi
        xi = np.broadcast_to(np.asarray(xi, dtype=float), min_width.shape).copy()
        if np.any(xi <= 0) or np.any(xi >= min_width / 2):
            raise InvalidPairError("xi must satisfy 0 < xi < (beta - alpha) / 2")
        object.__setattr__(self, "xi", xi)

    @property
    def dim(self):
        return self.xi.size

    def widths(self, times=None):
        times = np.linspace(0.0, self.theta, CHECK_POINTS + 1) if times is None else times
        return self.beta.on(times) - self.alpha.on(times)

    def diameter(self):
        return float(self.widths().max())

    def min_width(self):
        return float(self.widths().min())

    def clamp_box(self, fraction=0.1):
        """Time-dependent box [alpha - m, beta + m] with m = fraction * (beta - alpha)."""
        def lo(t):
            a, b = self.alpha(t), self.beta(t)
            return a - fraction * (b - a)

        def hi(t):
            a, b = self.alpha(t), self.beta(t)
            return b + fraction * (b - a)

        return lo, hi


@dataclass(frozen=True)
class BoundaryCheck:
    ok: bool
    worst_slack: float
    witness: Optional[tuple]
    endpoint_ok: bool = True

    def to_dict(self):
        return {"ok": self.ok, "worst_slack": self.worst_slack,
                "witness": None if self.witness is None else list(self.witness),
                "endpoint_ok": self.endpoint_ok}


def _slack(spec, curve, grid, sign):
    times = grid.times
    vals, primes = curve.on(times), curve.prime_on(times)
    f = np.array([spec.f(t, v[None, :])[0] for t, v in zip(times, vals)])
    return sign * (f - primes), vals


def check_lower_solution(spec: SdeSpec, alpha: Curve, grid: TimeGrid) -> BoundaryCheck:
    """alpha' < f(t, alpha) at every grid point and alpha(0) <= alpha(theta)."""
    slack, vals = _slack(spec, alpha, grid, +1.0)
    return _verdict(slack, vals, grid, endpoint_ok=bool(np.all(vals[0] <= vals[-1])))


def check_upper_solution(spec: SdeSpec, beta: Curve, grid: TimeGrid) -> BoundaryCheck:
    """beta' > f(t, beta) at every grid point and beta(0) >= beta(theta)."""
    slack, vals = _slack(spec, beta, grid, -1.0)
    return _verdict(slack, vals, grid, endpoint_ok=bool(np.all(vals[0] >= vals[-1])))


def _verdict(slack, vals, grid, endpoint_ok):
    per_point = slack.min(axis=1)
    worst = float(per_point.min())
    witness = None
    if worst <= 0:
        k = int(np.argmax(per_point <= 0))
        witness = (float(grid.t(k)), float(per_point[k]))
    elif not endpoint_ok:
        witness = (float(grid.t_end), float((vals[0] - vals[-1]).max()))
    return BoundaryCheck(worst > 0 and endpoint_ok, worst, witness, endpoint_ok)


@dataclass
class HypothesisReport:
    M: float
    L: float
    theta: float
    strict_lower_ok: bool
    strict_upper_ok: bool
    lower_slack: float
    upper_slack: float
    M_lipschitz: float
    M_one_sided: Optional[float] = None
    quasimonotone_ok: Optional[bool] = None
    violations: list = field(default_factory=list)
    n_samples: int = 0

    @property
    def margin(self):
        return self.M - self.L - LN2 / (2 * self.theta)

    @property
    def all_ok(self):
        return (self.strict_lower_ok and self.strict_upper_ok and self.margin > 0
                and self.quasimonotone_ok is not False)

    def to_dict(self):
        return {
            "M": self.M, "L": self.L, "theta": self.theta, "margin": self.margin,
            "strict_lower_ok": self.strict_lower_ok, "strict_upper_ok": self.strict_upper_ok,
            "lower_worst_slack": self.lower_slack, "upper_worst_slack": self.upper_slack,
            "M_lipschitz": self.M_lipschitz, "M_one_sided": self.M_one_sided,
            "quasimonotone_ok": self.quasimonotone_ok, "violations": self.violations,
            "n_samples": self.n_samples,
        }


def _arcsine(u):
    # U-shaped law on [0, 1]; puts mass near the box faces where extrema live
    return 0.5 * (1.0 - np.cos(np.pi * u))


def _sample_pairs(pair, grid, n_samples, seed):
    """Structured vertex pairs on every grid time plus ``n_samples`` random pairs.

    The random part is a prefix of one seeded stream, so a larger ``n_samples``
    yields a superset of pairs. Odd-indexed random pairs are infinitesimally
    close (they probe the local Lipschitz constant).
    """
    d = pair.dim
    times = grid.times
    lo_all, hi_all = pair.alpha.on(times), pair.beta.on(times)
    t_idx, xs, ys = [], [], []

    corners = np.array(np.meshgrid(*[[0.0, 1.0]] * d, indexing="ij")).reshape(d, -1).T
    h = 1e-4
    for k in range(len(times)):
        w = hi_all[k] - lo_all[k]
        x = lo_all[k] + corners * w
        y = lo_all[k] + np.abs(corners - h) * w
        t_idx.append(np.full(len(corners), k))
        xs.append(x)
        ys.append(y)

    rng = np.random.default_rng(seed)
    raw = rng.random((n_samples, 2 * d + 2))
    k = np.minimum((raw[:, 0] * len(times)).astype(int), len(times) - 1)
    w = hi_all[k] - lo_all[k]
    x = lo_all[k] + _arcsine(raw[:, 1:1 + d]) * w
    y = lo_all[k] + _arcsine(raw[:, 1 + d:1 + 2 * d]) * w
    close = (np.arange(n_samples) % 2) == 1
    direction = 2.0 * raw[:, 1 + d:1 + 2 * d] - 1.0
    y[close] = np.clip(x[close] + 1e-6 * direction[close] * w[close], lo_all[k][close], hi_all[k][close])
    t_idx.append(k)
    xs.append(x)
    ys.append(y)
    # equality mask for the quasimonotonicity probe: coordinates where x_i := y_i
    mask = raw[:, -1:] < 0.5
    return np.concatenate(t_idx), np.concatenate(xs), np.concatenate(ys), mask, times


def _eval_grouped(fn, t_idx, pts, times):
    out = None
    for k in np.unique(t_idx):
        sel = t_idx == k
        val = np.asarray(fn(times[k], pts[sel]), dtype=float)
        if out is None:
            out = np.empty((pts.shape[0],) + val.shape[1:])
        out[sel] = val
    return out


def estimate_constants(spec: SdeSpec, pair: BoundaryPair, grid: TimeGrid, n_samples=100_000, seed=0):
    """Sampled estimates of the constants M and L over the box [alpha(t), beta(t)].

    Also runs both boundary checks so the returned report is complete.
    """
    times = grid.times
    if np.any(pair.beta.on(times) <= pair.alpha.on(times)):
        raise InvalidPairError("empty box: alpha >= beta on the grid")
    d = spec.dim_state
    t_idx, x, y, mask, times = _sample_pairs(pair, grid, n_samples, seed)
    violations = []

    diff = x - y
    keep = np.linalg.norm(diff, axis=1) > 0
    t_idx, x, y, diff = t_idx[keep], x[keep], y[keep], diff[keep]
    fx = _eval_grouped(spec.f, t_idx, x, times)
    fy = _eval_grouped(spec.f, t_idx, y, times)
    gx = _eval_grouped(spec.g, t_idx, x, times)
    gy = _eval_grouped(spec.g, t_idx, y, times)

    M_lip = float(np.max(np.linalg.norm(fx - fy, axis=1) / np.linalg.norm(diff, axis=1)))

    row_sq = np.sum((gx - gy) ** 2, axis=2)  # (n, d)
    if d == 1:
        L = float(np.max(row_sq[:, 0] / diff[:, 0] ** 2))
    else:
        nz = np.abs(diff) > 0
        L = float(np.max(np.where(nz, row_sq / np.where(nz, diff**2, 1.0), 0.0)))

    M_one, quasi_ok = None, None
    if d > 1:
        M_one, quasi_ok = _one_sided(spec, pair, grid, n_samples, seed, violations)
    M = M_lip if M_one is None else max(M_lip, M_one)

    lower = check_lower_solution(spec, pair.alpha, grid)
    upper = check_upper_solution(spec, pair.beta, grid)
    for name, chk in (("lower_slack", lower), ("upper_slack", upper)):
        if not chk.ok and chk.witness is not None and len(violations) < MAX_VIOLATIONS:
            violations.append({"t": chk.witness[0], "x": None, "quantity": name, "value": chk.witness[1]})

    return HypothesisReport(
        M=M, L=L, theta=spec.period,
        strict_lower_ok=lower.ok, strict_upper_ok=upper.ok,
        lower_slack=lower.worst_slack, upper_slack=upper.worst_slack,
        M_lipschitz=M_lip, M_one_sided=M_one, quasimonotone_ok=quasi_ok,
        violations=violations, n_samples=n_samples,
    )


def _one_sided(spec, pair, grid, n_samples, seed, violations):
    """Smallest M with f_i(x) - f_i(y) >= -M (x_i - y_i) on ordered sampled pairs."""
    t_idx, x, y, _, times = _sample_pairs(pair, grid, n_samples, seed + 1)
    hi, lo = np.maximum(x, y), np.minimum(x, y)
    rng = np.random.default_rng(seed + 2)
    eq = rng.random(hi.shape) < 0.5
    hi = np.where(eq, lo, hi)
    fh = _eval_grouped(spec.f, t_idx, hi, times)
    fl = _eval_grouped(spec.f, t_idx, lo, times)
    dx = hi - lo
    df = fh - fl
    strict = dx > 0
    need = np.where(strict, -df / np.where(strict, dx, 1.0), 0.0)
    M_one = float(max(0.0, need.max()))

    scale = 1e-10 * (1.0 + np.abs(fh) + np.abs(fl))
    bad = (~strict) & (df < -scale)
    quasi_ok = not bool(bad.any())
    for p, i in np.argwhere(bad)[:MAX_VIOLATIONS]:
        violations.append({"t": float(times[t_idx[p]]), "x": hi[p].tolist(),
                           "quantity": f"quasimonotone_f{i + 1}", "value": float(df[p, i])})
    return M_one, quasi_ok


def build_envelopes(
    spec: SdeSpec,
    pair: BoundaryPair,
    noise: NoiseEnsemble,
    M: float,
    grid: TimeGrid,
    beta_drift_sign: str = "minus",
    cfg: IntegratorConfig | None = None,
) -> tuple[PathEnsemble, PathEnsemble]:
    """Stochastic envelopes started at alpha(0) + xi and beta(0) - xi on common noise.

    The lower envelope relaxes toward alpha at rate M. The upper envelope relaxes
    toward beta for ``beta_drift_sign="minus"``; ``"plus"`` uses the repelling
    form ``beta' + M (b - beta)``.
    """
    if not M > 0:
        raise ValueError("M must be positive")
    if beta_drift_sign not in ("minus", "plus"):
        raise ValueError("beta_drift_sign must be 'minus' or 'plus'")
    times = grid.times
    n = noise.n_paths
    box = None if cfg is None else cfg.clamp_box
    alpha_v, beta_v = pair.alpha.on(times), pair.beta.on(times)
    alpha_f = pair.alpha.prime_on(times) + M * alpha_v
    a0 = np.broadcast_to(alpha_v[0] + pair.xi, (n, pair.dim)).copy()
    b0 = np.broadcast_to(beta_v[0] - pair.xi, (n, pair.dim)).copy()
    a = integrate_relaxation(M, lambda t, k, u: alpha_f[k], spec.g, a0, noise, grid, box, "alpha_tilde")
    if beta_drift_sign == "minus":
        beta_f = pair.beta.prime_on(times) + M * beta_v
        b = integrate_relaxation(M, lambda t, k, u: beta_f[k], spec.g, b0, noise, grid, box, "beta_tilde")
    else:
        beta_f = pair.beta.prime_on(times) - M * beta_v
        b = integrate_relaxation(-M, lambda t, k, u: beta_f[k], spec.g, b0, noise, grid, box, "beta_tilde")
    return a, b


def order_violation_fraction(alpha_v, a, b, beta_v, atol=1e-12):
    """Share of (path, time, coordinate) entries breaking alpha <= a <= b <= beta."""
    av, bv = a.values, b.values
    tol = atol * (1.0 + np.abs(av) + np.abs(bv))
    bad = (av > bv + tol) | (av < alpha_v[None] - tol) | (bv > beta_v[None] + tol)
    return float(bad.mean())


def envelope_violation_fraction(pair: BoundaryPair, a: PathEnsemble, b: PathEnsemble):
    times = a.grid.times
    return order_violation_fraction(pair.alpha.on(times), a, b, pair.beta.on(times))
