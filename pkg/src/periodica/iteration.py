"""The relaxed operator A, its Poincare (law-level) fixed point and the monotone sweep.

Laws are carried as sample vectors attached to the paths of one common noise
ensemble. When the law at time theta is fed back as the next initial law, the
samples are re-attached to paths by a coupling that ignores the noise: rank
order in one dimension (the sorted coupling), a fixed seeded permutation in
higher dimensions. Both couplings are applied identically to every iterate, so
pathwise order between two sequences survives the re-attachment.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .boundary import LN2, BoundaryPair, build_envelopes
from .core import NoiseEnsemble, PathEnsemble, SdeSpec, TimeGrid, shift_noise
from .distribution import EmpiricalMeasure, ks_two_sample, law_distance, wasserstein2_squared_1d
from .integrators import IntegratorConfig, integrate, integrate_exponential

COUPLING_SEED = 7919
ORDER_BREAKDOWN = 1e-2
ORDER_ATOL = 1e-9


class ShapeError(ValueError):
    pass


class PoincareNonConvergence(RuntimeError):
    def __init__(self, history, message=None):
        self.history = history
        last = history[-1] if history else float("nan")
        super().__init__(message or f"Poincare iteration did not converge (last residual {last:.3g})")


class OrderBreakdownError(RuntimeError):
    def __init__(self, report, message):
        self.report = report
        super().__init__(message)


@dataclass(frozen=True)
class AOperatorConfig:
    M: float
    poincare_tol: float
    poincare_max_iter: int = 100
    scheme: IntegratorConfig = IntegratorConfig(scheme="exponential_euler")
    L: Optional[float] = None

    def __post_init__(self):
        if not self.M > 0:
            raise ValueError("M must be positive")
        if not self.poincare_tol > 0 or self.poincare_max_iter < 1:
            raise ValueError("poincare_tol must be positive and poincare_max_iter >= 1")


def couple(samples):
    """Re-attach law samples to paths independently of the noise."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape[1] == 1:
        return np.sort(samples, axis=0)
    perm = np.random.default_rng(COUPLING_SEED).permutation(samples.shape[0])
    return samples[perm]


def _check_grid(eta, noise):
    g = eta.grid
    if (eta.n_paths != noise.n_paths or g.n_steps != noise.n_steps
            or not math.isclose(g.dt, noise.grid.dt)):
        raise ShapeError(
            f"eta ({eta.n_paths} paths, {g.n_steps} steps) does not match noise "
            f"({noise.n_paths} paths, {noise.n_steps} steps)"
        )


def _clamp_fn(box):
    if box is None:
        return lambda t, x: x
    lo, hi = box

    def clamp(t, x):
        return np.clip(x, lo(t) if callable(lo) else lo, hi(t) if callable(hi) else hi)
    return clamp


def A_forcing(eta: PathEnsemble, spec: SdeSpec, cfg: AOperatorConfig):
    """f(t_k, eta_k) + M eta_k on every grid step, shape (n_steps + 1, n_paths, d)."""
    clamp = _clamp_fn(cfg.scheme.clamp_box)
    ev = eta.values
    return np.stack([spec.f(t, clamp(t, ev[:, k])) + cfg.M * ev[:, k]
                     for k, t in enumerate(eta.grid.times)])


def apply_A(eta: PathEnsemble, spec: SdeSpec, init_law, cfg: AOperatorConfig,
            noise: NoiseEnsemble, forcing_table=None) -> PathEnsemble:
    """Solve du = (f(t, eta) - M (u - eta)) dt + g(t, u) dB on the noise that produced eta.

    ``init_law`` holds one initial sample per path, used in path order.
    ``forcing_table`` is an optional precomputed :func:`A_forcing`.
    """
    _check_grid(eta, noise)
    init = init_law.samples if isinstance(init_law, EmpiricalMeasure) else np.asarray(init_law, float)
    if init.ndim == 1:
        init = init[:, None]
    if init.shape != (eta.n_paths, eta.dim):
        raise ShapeError(f"init_law has shape {init.shape}, expected {(eta.n_paths, eta.dim)}")
    M = cfg.M
    table = A_forcing(eta, spec, cfg) if forcing_table is None else forcing_table

    def forcing(t, k, u):
        return table[k]

    if cfg.scheme.scheme == "exponential_euler":
        return integrate_exponential(M, forcing, spec.g, init, noise, eta.grid, cfg.scheme, name="A")

    def relaxed_drift(t, u, k_of_t=eta.grid):
        k = int(round((t - k_of_t.t_start) / k_of_t.dt))
        return forcing(t, k, u) - M * u

    relaxed = SdeSpec(relaxed_drift, spec.diffusion, spec.dim_state, spec.dim_noise, spec.period, name="A")
    return integrate(relaxed, init, noise, eta.grid, cfg.scheme)


@dataclass
class PoincareResult:
    u: PathEnsemble
    residual: float
    n_iter: int
    w1_history: list
    w2sq_history: list
    ks_accept: bool

    def contraction_ratios(self):
        h = self.w2sq_history
        return [h[i + 1] / h[i] for i in range(len(h) - 1) if h[i] > 0]


def _w2sq(p, q):
    return float(sum(wasserstein2_squared_1d(p[:, i], q[:, i]) for i in range(p.shape[1])))


def _ks_or_degenerate(p, q, i, tol):
    # KS is meaningless between (near) point masses; W1 <= tol already decides
    if np.ptp(p[:, i]) <= tol and np.ptp(q[:, i]) <= tol:
        return True
    return ks_two_sample(p, q, i)[1]


def law_fixed_point(step: Callable[[np.ndarray], PathEnsemble], start, tol, max_iter):
    """Iterate ``law(u(0)) -> law(u(theta))`` until W1 <= tol and KS accepts.

    ``start`` is used path by path as given; only the fed-back law is re-coupled.
    """
    s = np.array(start, dtype=float)
    w1, w2 = [], []
    for it in range(1, max_iter + 1):
        u = step(s)
        end = u.final()
        res = law_distance(s, end)
        w1.append(res)
        w2.append(_w2sq(s, end))
        if res <= tol:
            accept = all(_ks_or_degenerate(s, end, i, tol) for i in range(s.shape[1]))
            if accept:
                return PoincareResult(u, res, it, w1, w2, accept)
        s = couple(end)
    raise PoincareNonConvergence(w1)


def _warn_margin(cfg, theta):
    if cfg.L is not None and cfg.M - cfg.L - LN2 / (2 * theta) <= 0:
        warnings.warn(
            f"M - L - ln2/(2 theta) = {cfg.M - cfg.L - LN2 / (2 * theta):.4g} <= 0; "
            "the Poincare map is not guaranteed to contract",
            RuntimeWarning, stacklevel=3,
        )


def poincare_fixed_point(eta: PathEnsemble, spec: SdeSpec, cfg: AOperatorConfig,
                         noise: NoiseEnsemble, init_law=None, tol=None) -> PoincareResult:
    """Fixed point of the period map of the relaxed equation driven by ``eta``.

    Starts from ``init_law`` (default: a point mass at the mean of eta(0)).
    The returned trajectory satisfies W1(law u(0), law u(theta)) <= tol.
    """
    _warn_margin(cfg, spec.period)
    if init_law is None:
        start = np.broadcast_to(eta.initial().mean(axis=0), (eta.n_paths, eta.dim)).copy()
    else:
        start = init_law.samples if isinstance(init_law, EmpiricalMeasure) else np.asarray(init_law, float)
        if start.ndim == 1:
            start = start[:, None]
    tol = cfg.poincare_tol if tol is None else tol
    _check_grid(eta, noise)
    table = A_forcing(eta, spec, cfg)
    return law_fixed_point(lambda s: apply_A(eta, spec, s, cfg, noise, table), start, tol, cfg.poincare_max_iter)


def periodic_solution(spec: SdeSpec, a: PathEnsemble, b: PathEnsemble, noise: NoiseEnsemble,
                      tol, max_iter=200, cfg: IntegratorConfig = IntegratorConfig()) -> PoincareResult:
    """Period-map fixed point of the original equation, started between a(0) and b(0)."""
    start = 0.5 * (a.initial() + b.initial())
    grid = a.grid
    return law_fixed_point(lambda s: integrate(spec, s, noise, grid, cfg), start, tol, max_iter)


def gap(lo: PathEnsemble, hi: PathEnsemble):
    """sup over t (and coordinates) of the path-mean of |hi - lo|."""
    return float(np.abs(hi.values - lo.values).mean(axis=0).max())


def chain_violation_fraction(lo_prev, lo, hi, hi_prev, atol=ORDER_ATOL):
    """Share of entries breaking lo_prev <= lo <= hi <= hi_prev."""
    a0, a1, b1, b0 = lo_prev.values, lo.values, hi.values, hi_prev.values
    tol = atol * (1.0 + np.abs(a1) + np.abs(b1))
    bad = (a0 > a1 + tol) | (a1 > b1 + tol) | (b1 > b0 + tol)
    return float(bad.mean())


def pathwise_violation_fraction(lower: PathEnsemble, upper: PathEnsemble, atol=ORDER_ATOL):
    tol = atol * (1.0 + np.abs(lower.values) + np.abs(upper.values))
    return float((lower.values > upper.values + tol).mean())


def mean_chain_ok(lo_prev, lo, hi, hi_prev, atol=ORDER_ATOL):
    m = [x.values.mean(axis=0) for x in (lo_prev, lo, hi, hi_prev)]
    tol = atol * (1.0 + np.abs(m[1]) + np.abs(m[2]))
    return bool(np.all(m[0] <= m[1] + tol) and np.all(m[1] <= m[2] + tol) and np.all(m[2] <= m[3] + tol))


@dataclass
class IterationReport:
    n_outer: int = 0
    gap_history: list = field(default_factory=list)
    poincare_history: list = field(default_factory=list)
    monotone_violation_fraction: list = field(default_factory=list)
    mean_chain_ok: list = field(default_factory=list)
    converged: bool = False
    bracket_closed: bool = False
    final_gap: float = float("nan")
    final_residual: float = float("nan")
    records: list = field(default_factory=list)

    def to_dict(self):
        return {
            "n_outer": self.n_outer,
            "gap_history": self.gap_history,
            "poincare_history": self.poincare_history,
            "monotone_violation_fraction": self.monotone_violation_fraction,
            "mean_chain_ok": self.mean_chain_ok,
            "converged": self.converged,
            "bracket_closed": self.bracket_closed,
            "final_gap": self.final_gap,
            "final_residual": self.final_residual,
        }


@dataclass
class SweepResult:
    report: IterationReport
    a: PathEnsemble
    b: PathEnsemble
    alpha_tilde: PathEnsemble
    beta_tilde: PathEnsemble
    a_fixed: Optional[PoincareResult] = None
    b_fixed: Optional[PoincareResult] = None


def monotone_sweep(spec: SdeSpec, pair: BoundaryPair, cfg: AOperatorConfig, noise: NoiseEnsemble,
                   n_outer_max=50, gap_tol=None, beta_drift_sign="minus",
                   on_iteration: Optional[Callable[[dict], None]] = None,
                   keep_history=False, order_breakdown: Optional[float] = ORDER_BREAKDOWN) -> SweepResult:
    """Iterate lo <- A(lo), hi <- A(hi) from the envelopes on common noise.

    Each application of A is resolved to its Poincare fixed point. The inner
    tolerance is tightened with the gap so that the fixed-point error cannot
    flip the pathwise order of nearby iterates.

    ``converged`` means every inner fixed point met ``poincare_tol``;
    ``bracket_closed`` additionally records whether the gap reached ``gap_tol``
    before ``n_outer_max``. Pass ``order_breakdown=None`` to record order
    violations without raising.
    """
    grid = noise.grid
    gap_tol = 1e-2 * pair.min_width() if gap_tol is None else gap_tol
    alpha_t, beta_t = build_envelopes(spec, pair, noise, cfg.M, grid, beta_drift_sign, cfg.scheme)
    lo, hi = alpha_t, beta_t
    mid = 0.5 * (alpha_t.initial() + beta_t.initial())
    lo_start, hi_start = mid, mid
    report = IterationReport(gap_history=[gap(lo, hi)])
    lo_fp = hi_fp = None
    history = [(lo, hi)] if keep_history else None
    floor = 1e-12 * (1.0 + pair.diameter())

    while report.gap_history[-1] > gap_tol and report.n_outer < n_outer_max:
        inner_tol = max(min(cfg.poincare_tol, 1e-5 * report.gap_history[-1]), floor)
        lo_fp = poincare_fixed_point(lo, spec, cfg, noise, lo_start, inner_tol)
        hi_fp = poincare_fixed_point(hi, spec, cfg, noise, hi_start, inner_tol)
        new_lo, new_hi = lo_fp.u, hi_fp.u
        viol = chain_violation_fraction(lo, new_lo, new_hi, hi)
        report.n_outer += 1
        report.gap_history.append(gap(new_lo, new_hi))
        report.poincare_history.append({"lower": lo_fp.w1_history, "upper": hi_fp.w1_history})
        report.monotone_violation_fraction.append(viol)
        report.mean_chain_ok.append(mean_chain_ok(lo, new_lo, new_hi, hi))
        report.final_residual = max(lo_fp.residual, hi_fp.residual)
        record = {"iteration": report.n_outer, "gap": report.gap_history[-1],
                  "residual_lower": lo_fp.residual, "residual_upper": hi_fp.residual,
                  "inner_iterations": [lo_fp.n_iter, hi_fp.n_iter], "violation_fraction": viol}
        report.records.append(record)
        if on_iteration is not None:
            on_iteration(record)
        if order_breakdown is not None and viol > order_breakdown:
            raise OrderBreakdownError(report, f"order violated on {viol:.3%} of entries at iteration {report.n_outer}")
        lo, hi = new_lo, new_hi
        lo_start, hi_start = lo.initial(), hi.initial()
        if keep_history:
            history.append((lo, hi))

    report.final_gap = report.gap_history[-1]
    report.bracket_closed = report.final_gap <= gap_tol
    report.converged = report.n_outer == 0 or report.final_residual <= cfg.poincare_tol
    result = SweepResult(report, lo, hi, alpha_t, beta_t, lo_fp, hi_fp)
    if keep_history:
        result.history = history
    return result


def glue_periods(u: PathEnsemble, spec: SdeSpec, noise_long: NoiseEnsemble, k_periods,
                 cfg: IntegratorConfig = IntegratorConfig()) -> PathEnsemble:
    """Run the original equation from law u(0) for ``k_periods`` periods.

    Period j is driven by block j of ``noise_long`` (re-indexed to [0, theta]).
    """
    spp = u.grid.n_steps
    dt = u.grid.dt
    grid = TimeGrid(0.0, spp * dt, spp)
    x = u.initial()
    blocks = []
    for j in range(k_periods):
        seg = integrate(spec, x, shift_noise(noise_long, j, spp), grid, cfg)
        blocks.append(seg.values if j == 0 else seg.values[:, 1:])
        x = seg.final()
    values = np.concatenate(blocks, axis=1)
    long_grid = TimeGrid(0.0, k_periods * spp * dt, k_periods * spp)
    prov = {"spec": spec.name, "seed": noise_long.seed, "stream": noise_long.stream,
            "integrator": cfg.scheme, "periods": k_periods}
    return PathEnsemble(long_grid, values, prov)


def sandwich_violation_fraction(x: PathEnsemble, a: PathEnsemble, b: PathEnsemble, tol):
    """Share of entries of x outside [a - tol, b + tol] (paths compared one to one)."""
    xv = x.values[:, : a.values.shape[1]]
    return float(((xv < a.values - tol) | (xv > b.values + tol)).mean())
