"""Run configuration and the check / solve / refine pipelines behind the CLI."""
from __future__ import annotations

import csv
import datetime as _dt
import json
import math
import platform
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.stats import norm

from .boundary import HypothesisReport, build_envelopes, envelope_violation_fraction, estimate_constants
from .core import TimeGrid, make_noise
from .distribution import ks_two_sample, ou_periodic_law, periodicity_scan
from .integrators import IntegratorConfig, integrate
from .iteration import (
    ORDER_BREAKDOWN,
    AOperatorConfig,
    OrderBreakdownError,
    PoincareNonConvergence,
    glue_periods,
    monotone_sweep,
    periodic_solution,
    poincare_fixed_point,
    sandwich_violation_fraction,
)
from .problems import BUILTINS, Problem, expression_problem, gbm

REFINE_LADDER = (64, 128, 256, 512, 1024)
GBM_PATHS = 10_000


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    problem: str = "example51"
    params: dict = field(default_factory=dict)
    steps_per_period: int = 512
    n_paths: int = 4096
    seed: int = 0
    poincare_tol: Optional[float] = None
    gap_tol: Optional[float] = None
    n_outer_max: int = 50
    poincare_max_iter: int = 100
    n_periods: int = 4
    n_probes: int = 16
    n_samples: int = 100_000
    clamp: bool = False
    beta_drift_sign: str = "minus"
    order_breakdown: Optional[float] = ORDER_BREAKDOWN
    trajectory_paths: int = 64

    def __post_init__(self):
        if self.problem not in BUILTINS and self.problem != "expr":
            raise ConfigError(f"unknown problem {self.problem!r}; choose from {sorted(BUILTINS)} or 'expr'")
        for name in ("steps_per_period", "n_paths", "n_outer_max", "poincare_max_iter",
                     "n_periods", "n_probes", "n_samples", "trajectory_paths"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.n_paths < 2:
            raise ConfigError("n_paths must be at least 2")
        for name in ("poincare_tol", "gap_tol", "order_breakdown"):
            v = getattr(self, name)
            if v is not None and not (isinstance(v, (int, float)) and v > 0):
                raise ConfigError(f"{name} must be positive, got {v!r}")
        if self.beta_drift_sign not in ("plus", "minus"):
            raise ConfigError("beta_drift_sign must be 'plus' or 'minus'")
        if not isinstance(self.params, dict):
            raise ConfigError("params must be an object")
        theta = self.params.get("theta", 1.0)
        if not isinstance(theta, (int, float)) or not theta > 0:
            raise ConfigError("theta must be a positive number")

    @property
    def theta(self):
        return float(self.params.get("theta", 1.0))

    @property
    def dt(self):
        return self.theta / self.steps_per_period

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        doc = dict(doc)
        if "dt" in doc:
            dt = doc.pop("dt")
            theta = float(doc.get("params", {}).get("theta", doc.get("theta", 1.0)))
            doc["steps_per_period"] = steps_from_dt(theta, dt)
        if "theta" in doc:
            doc.setdefault("params", {})
            doc["params"] = {**doc["params"], "theta": doc.pop("theta")}
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(doc)

    def to_dict(self):
        return asdict(self)


def steps_from_dt(theta, dt):
    try:
        dt = float(dt)
    except (TypeError, ValueError):
        raise ConfigError(f"dt must be a number, got {dt!r}") from None
    if not dt > 0:
        raise ConfigError("dt must be positive")
    n = round(theta / dt)
    if n < 1 or not math.isclose(n * dt, theta, rel_tol=1e-9):
        raise ConfigError(f"dt={dt} does not divide the period {theta}")
    return int(n)


def build_problem(cfg: RunConfig) -> Problem:
    try:
        if cfg.problem == "expr":
            return expression_problem(**cfg.params)
        return BUILTINS[cfg.problem](**cfg.params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {cfg.problem}: {exc}") from None


def _period_grid(cfg):
    return TimeGrid.over_period(cfg.theta, cfg.steps_per_period)


def run_check(cfg: RunConfig):
    """Boundary checks and hypothesis constants; exit 0 when everything holds."""
    problem = build_problem(cfg)
    report = estimate_constants(problem.spec, problem.pair, _period_grid(cfg), cfg.n_samples, cfg.seed)
    payload = {"problem": problem.name, "params": problem.params, "hypothesis": report.to_dict(),
               "all_ok": report.all_ok}
    return (0 if report.all_ok else 1), payload


def _tolerances(cfg, pair):
    tol = cfg.poincare_tol if cfg.poincare_tol is not None else 5e-3 * pair.diameter()
    gap_tol = cfg.gap_tol if cfg.gap_tol is not None else 1e-2 * pair.min_width()
    return tol, gap_tol


def _integrator(cfg, pair, scheme):
    box = pair.clamp_box() if cfg.clamp else None
    return IntegratorConfig(scheme=scheme, clamp_box=box)


def ou_comparison(oracle, paths, probe_steps):
    """W1 and moment errors of the simulated marginals against the exact periodic law."""
    n = paths.n_paths
    q = norm.ppf((np.arange(n) + 0.5) / n)
    rows = []
    for k in probe_steps:
        t = paths.grid.t(k)
        x = np.sort(paths.at(k)[:, 0])
        mean, var = ou_periodic_law(oracle, t)
        w1 = float(np.mean(np.abs(x - (mean + math.sqrt(var) * q))))
        m, v = float(x.mean()), float(x.var(ddof=1))
        rows.append({
            "t": t, "w1": w1, "mean": m, "mean_exact": mean, "mean_se": math.sqrt(var / n),
            "var": v, "var_exact": var, "var_se": var * math.sqrt(2.0 / (n - 1)),
        })
    return rows


def run_solve(cfg: RunConfig, out_dir=None, on_record=None):
    """Envelopes, monotone sweep, periodic solution, gluing and periodicity scan.

    Returns ``(exit_code, payload, artefacts)``; the payload is deterministic for
    a fixed config and seed.
    """
    problem = build_problem(cfg)
    spec, pair = problem.spec, problem.pair
    grid = _period_grid(cfg)
    hyp = estimate_constants(spec, pair, grid, cfg.n_samples, cfg.seed)
    tol, gap_tol = _tolerances(cfg, pair)
    a_cfg = AOperatorConfig(M=hyp.M, poincare_tol=tol, poincare_max_iter=cfg.poincare_max_iter,
                            scheme=_integrator(cfg, pair, "exponential_euler"), L=hyp.L)
    noise = make_noise(cfg.seed, cfg.n_paths, grid, spec.dim_noise, stream=0)
    payload = {"config": cfg.to_dict(), "problem": problem.name, "params": problem.params,
               "hypothesis": hyp.to_dict(), "poincare_tol": tol, "gap_tol": gap_tol}
    artefacts = {}
    try:
        sweep = monotone_sweep(spec, pair, a_cfg, noise, cfg.n_outer_max, gap_tol, cfg.beta_drift_sign,
                               on_iteration=on_record, order_breakdown=cfg.order_breakdown)
    except (OrderBreakdownError, PoincareNonConvergence) as exc:
        payload["error"] = {"type": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, OrderBreakdownError):
            payload["iteration"] = exc.report.to_dict()
        _write_report(out_dir, payload)
        return 1, payload, artefacts

    report = sweep.report
    payload["iteration"] = report.to_dict()
    payload["envelope_violation_fraction"] = envelope_violation_fraction(pair, sweep.alpha_tilde, sweep.beta_tilde)
    if not report.bracket_closed:
        payload["warning"] = "bracket did not close: final gap above gap_tol"

    em = _integrator(cfg, pair, "euler_maruyama")
    try:
        sol = periodic_solution(spec, sweep.a, sweep.b, noise, tol, cfg.poincare_max_iter, em)
    except PoincareNonConvergence as exc:
        payload["error"] = {"type": type(exc).__name__, "message": str(exc)}
        _write_report(out_dir, payload)
        return 1, payload, artefacts
    payload["periodic_solution"] = {"residual": sol.residual, "n_iter": sol.n_iter,
                                    "sandwich_violation_fraction":
                                        sandwich_violation_fraction(sol.u, sweep.a, sweep.b, tol)}

    long_grid = TimeGrid.over_period(cfg.theta, cfg.steps_per_period, cfg.n_periods)
    noise_long = make_noise(cfg.seed, cfg.n_paths, long_grid, spec.dim_noise, stream=1)
    glued = glue_periods(sol.u, spec, noise_long, cfg.n_periods, em)
    profile, scan_max = periodicity_scan(glued, cfg.theta, cfg.n_probes)
    spp = cfg.steps_per_period
    ks = [ks_two_sample(glued.at(0), glued.at(spp), i) for i in range(spec.dim_state)]
    payload["periodicity"] = {
        "profile": profile.tolist(), "max": scan_max, "threshold": 3 * tol,
        "ks_t0_vs_theta": [{"statistic": s, "accept_1pct": bool(a)} for s, a in ks],
    }
    if problem.oracle is not None:
        probes = [int(round(t / glued.grid.dt)) for t in profile[:, 0]]
        rows = ou_comparison(problem.oracle, glued, probes)
        payload["oracle_comparison"] = {
            "rows": rows, "w1_max": max(r["w1"] for r in rows),
            "w1_threshold": 3 / math.sqrt(cfg.n_paths) + 10 * cfg.dt,
        }
    ok = report.converged and scan_max <= 3 * tol
    payload["success"] = bool(ok)
    artefacts.update({"glued": glued, "sweep": sweep, "solution": sol})
    if out_dir is not None:
        _write_outputs(out_dir, cfg, glued, payload)
    return (0 if ok else 1), payload, artefacts


def _meta():
    return {"timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "host": platform.node(), "python": platform.python_version(),
            "numpy": np.__version__}


def dump_report(payload):
    return json.dumps({"payload": payload, "meta": _meta()}, indent=2, sort_keys=True, default=_jsonable)


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _write_report(out_dir, payload):
    if out_dir is None:
        return
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(dump_report(payload), encoding="utf-8")


def _write_outputs(out_dir, cfg, glued, payload):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    d = glued.dim
    cols = [f"x_{i + 1}" for i in range(d)]
    n_traj = min(cfg.trajectory_paths, glued.n_paths)
    with open(out / "trajectories.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "t", *cols])
        times = glued.grid.times
        for p in range(n_traj):
            for k, t in enumerate(times):
                w.writerow([p, repr(float(t)), *(repr(float(v)) for v in glued.values[p, k])])
    spp = cfg.steps_per_period
    for name, k in (("measures_t0.csv", 0), ("measures_theta.csv", spp)):
        with open(out / name, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for row in glued.at(k):
                w.writerow([repr(float(v)) for v in row])
    _write_report(out, payload)


def log2_slope(dts, errors):
    """Least-squares slope of log2(error) against log2(dt)."""
    return float(np.polyfit(np.log2(dts), np.log2(errors), 1)[0])


def run_refine(cfg: RunConfig, ladder=REFINE_LADDER, gbm_paths=GBM_PATHS):
    """dt ladder: envelope-order violation, GBM strong error, Poincare contraction ratio.

    Every rung is driven by the same Brownian paths (finest noise, coarsened).
    """
    problem = build_problem(cfg)
    spec, pair, theta = problem.spec, problem.pair, cfg.theta
    finest = max(ladder)
    fine_grid = TimeGrid.over_period(theta, finest)
    hyp = estimate_constants(spec, pair, TimeGrid.over_period(theta, cfg.steps_per_period),
                             cfg.n_samples, cfg.seed)
    tol, _ = _tolerances(cfg, pair)
    noise_fine = make_noise(cfg.seed, cfg.n_paths, fine_grid, spec.dim_noise, stream=0)
    gbm_spec, gbm_exact = gbm()
    gbm_noise = make_noise(cfg.seed, gbm_paths, TimeGrid(0.0, 1.0, finest), 1, stream=2)
    b_end = gbm_noise.increments.sum(axis=1)[:, 0]
    x_exact = gbm_exact(1.0, 1.0, b_end)

    rows = []
    for n in sorted(ladder):
        noise = noise_fine.coarsen(finest // n)
        grid = noise.grid
        box = pair.clamp_box() if cfg.clamp else None
        a, b = build_envelopes(spec, pair, noise, hyp.M, grid, cfg.beta_drift_sign,
                               IntegratorConfig("exponential_euler", box))
        viol = envelope_violation_fraction(pair, a, b)

        gn = gbm_noise.coarsen(finest // n)
        x = integrate(gbm_spec, np.ones((gbm_paths, 1)), gn, gn.grid)
        strong = float(np.mean(np.abs(x.final()[:, 0] - x_exact)))

        a_cfg = AOperatorConfig(M=hyp.M, poincare_tol=tol, poincare_max_iter=cfg.poincare_max_iter,
                                scheme=IntegratorConfig("exponential_euler", box), L=hyp.L)
        fp = poincare_fixed_point(a, spec, a_cfg, noise, tol=1e-9 * (1 + pair.diameter()))
        ratios = [r for r, h in zip(fp.contraction_ratios(), fp.w2sq_history) if h > 1e-24]
        rows.append({"dt": theta / n, "violation_fraction": viol, "strong_error": strong,
                     "contraction_ratio": max(ratios) if ratios else 0.0})
    return rows


def refine_csv(rows):
    lines = ["dt,violation_fraction,strong_error,contraction_ratio"]
    for r in rows:
        lines.append(f"{r['dt']!r},{r['violation_fraction']!r},{r['strong_error']!r},{r['contraction_ratio']!r}")
    return "\n".join(lines) + "\n"
