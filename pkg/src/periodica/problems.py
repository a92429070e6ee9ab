"""Built-in problems: the polynomial scalar SDE, the cooperative linear system,
a periodically forced OU process and config-defined expression problems."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .boundary import BoundaryPair, Curve
from .core import InvalidSpecError, SdeSpec, periodic_wrap
from .distribution import OuOracle
from .expr import state_function, time_function

VALIDATION_POINTS = 257


@dataclass
class Problem:
    name: str
    spec: SdeSpec
    pair: BoundaryPair
    oracle: Optional[OuOracle] = None
    params: dict = field(default_factory=dict)


def _tf(v):
    return time_function(v if isinstance(v, str) else repr(float(v)))


def _scalar_diffusion(scale):
    def g(t, X):
        return (scale * X)[:, :, None]
    return g


def example51(n=1, a="1", a_coeffs=None, e="sin(2*pi*t)", c=3.0, theta=1.0, noise_scale=1.0):
    """dx = (-a(t) x^{2n+1} + sum_i a_i(t) x^i + e(t)) dt + x dB with alpha, beta = -/+ c (1 - t/2)."""
    n = int(n)
    if n < 1:
        raise InvalidSpecError("n must be a positive integer")
    a_coeffs = ["0"] * (2 * n) if a_coeffs is None else list(a_coeffs)
    if len(a_coeffs) != 2 * n:
        raise InvalidSpecError(f"expected {2 * n} coefficients a_1..a_2n, got {len(a_coeffs)}")
    a_fn, e_fn = _tf(a), _tf(e)
    ai_fns = [_tf(v) for v in a_coeffs]
    ts = np.linspace(0.0, theta, VALIDATION_POINTS)
    if not np.all(a_fn(ts) > 0):
        raise InvalidSpecError("a(t) must be bounded below by a positive constant")
    # Horner coefficients, highest power first: -a, a_2n, ..., a_1, e
    coeff_fns = [lambda t: -a_fn(t), *reversed(ai_fns), e_fn]

    def drift(t, X):
        x = X[:, 0]
        cs = [float(fn(t)) for fn in coeff_fns]
        out = np.full_like(x, cs[0])
        for c_ in cs[1:]:
            out *= x
            if c_:
                out += c_
        return out[:, None]

    spec = periodic_wrap(SdeSpec(drift, _scalar_diffusion(noise_scale), 1, 1, theta, name="example51"))
    slope = c / (2.0 * theta)
    pair = BoundaryPair(Curve.linear(-c, slope), Curve.linear(c, -slope), theta)
    params = {"n": n, "a": str(a), "a_coeffs": [str(v) for v in a_coeffs], "e": str(e),
              "c": c, "theta": theta, "noise_scale": noise_scale}
    return Problem("example51", spec, pair, params=params)


def validate_cooperative(A_fn, d, theta):
    """Off-diagonal a_ij <= 0, a_ii >= sigma > 0 and a_ii >= -sum_{j != i} a_ij."""
    for t in np.linspace(0.0, theta, VALIDATION_POINTS):
        A = A_fn(t)
        off = A - np.diag(np.diag(A))
        if np.any(off > 0):
            raise InvalidSpecError(f"A(t) has a positive off-diagonal entry at t={t:.4g}")
        if np.any(np.diag(A) <= 0):
            raise InvalidSpecError(f"A(t) has a non-positive diagonal entry at t={t:.4g}")
        if np.any(np.diag(A) < -off.sum(axis=1)):
            raise InvalidSpecError(f"A(t) is not diagonally dominant at t={t:.4g}")


def example52(A=(("2", "-1"), ("-1", "2")), p=("sin(2*pi*t)", "cos(2*pi*t)"), c=2.0, theta=1.0,
              noise_scale=1.0):
    """dX = (-A(t) X + p(t)) dt + diag(X) dB with alpha = -c 1, beta = c 1."""
    d = len(p)
    if len(A) != d or any(len(row) != d for row in A):
        raise InvalidSpecError("A must be a d x d matrix matching p")
    A_fns = [[_tf(v) for v in row] for row in A]
    p_fns = [_tf(v) for v in p]

    def A_at(t):
        return np.array([[float(fn(t)) for fn in row] for row in A_fns])

    validate_cooperative(A_at, d, theta)

    def drift(t, X):
        return -X @ A_at(t).T + np.array([float(fn(t)) for fn in p_fns])

    def diffusion(t, X):
        out = np.zeros(X.shape + (d,))
        idx = np.arange(d)
        out[:, idx, idx] = noise_scale * X
        return out

    spec = periodic_wrap(SdeSpec(drift, diffusion, d, d, theta, name="example52"))
    pair = BoundaryPair(Curve.constant(-c * np.ones(d)), Curve.constant(c * np.ones(d)), theta)
    params = {"A": [[str(v) for v in row] for row in A], "p": [str(v) for v in p], "c": c,
              "theta": theta, "noise_scale": noise_scale}
    return Problem("example52", spec, pair, params=params)


def ou(a=1.0, sigma=0.5, mu="sin(2*pi*t)", c=3.0, theta=1.0):
    """dx = (mu(t) - a x) dt + sigma dB together with its exact periodic law."""
    mu_fn = _tf(mu)

    def drift(t, X):
        return mu_fn(t) - a * X

    def diffusion(t, X):
        return np.full((X.shape[0], 1, 1), float(sigma))

    spec = periodic_wrap(SdeSpec(drift, diffusion, 1, 1, theta, name="ou"))
    pair = BoundaryPair(Curve.constant(-c), Curve.constant(c), theta)
    oracle = OuOracle(a, sigma, mu_fn, theta)
    return Problem("ou", spec, pair, oracle, {"a": a, "sigma": sigma, "mu": str(mu), "c": c, "theta": theta})


def linear(a=1.0, sigma=0.3, forcing="sin(2*pi*t)", c=2.0, theta=1.0):
    """dx = (-a x + forcing(t)) dt + sigma x dB."""
    f_fn = _tf(forcing)

    def drift(t, X):
        return -a * X + f_fn(t)

    spec = periodic_wrap(SdeSpec(drift, _scalar_diffusion(sigma), 1, 1, theta, name="linear"))
    pair = BoundaryPair(Curve.constant(-c), Curve.constant(c), theta)
    return Problem("linear", spec, pair, params={"a": a, "sigma": sigma, "forcing": str(forcing),
                                                 "c": c, "theta": theta})


def gbm(mu=0.5, sigma=0.3):
    """Geometric Brownian motion and its exact solution on the same Brownian path."""
    def drift(t, X):
        return mu * X

    spec = SdeSpec(drift, _scalar_diffusion(sigma), 1, 1, 1.0, name="gbm")

    def exact(x0, t, b):
        return x0 * np.exp((mu - 0.5 * sigma**2) * t + sigma * b)

    return spec, exact


def _expression_curve(sources, theta):
    fns = [time_function(s) for s in sources]
    h = 1e-6 * max(1.0, theta)

    def value(t):
        return np.array([float(fn(t)) for fn in fns])

    def derivative(t):
        return (value(t + h) - value(t - h)) / (2 * h)

    return Curve(value, derivative)


def expression_problem(drift, diffusion, alpha=None, beta=None, theta=1.0, boundary_csv=None,
                       xi=None, name="expr"):
    """Problem from expression strings: ``drift`` has d entries, ``diffusion`` is d x r."""
    d = len(drift)
    if d < 1 or len(diffusion) != d:
        raise InvalidSpecError("diffusion must have one row per drift component")
    r = len(diffusion[0])
    if r < 1 or any(len(row) != r for row in diffusion):
        raise InvalidSpecError("diffusion rows must have equal length")
    f_fns = [state_function(s, d) for s in drift]
    g_fns = [[state_function(s, d) for s in row] for row in diffusion]

    def f(t, X):
        return np.stack([fn(t, X) for fn in f_fns], axis=1)

    def g(t, X):
        return np.stack([np.stack([fn(t, X) for fn in row], axis=1) for row in g_fns], axis=1)

    spec = periodic_wrap(SdeSpec(f, g, d, r, theta, name=name))
    if boundary_csv is not None:
        pair = load_boundary_csv(boundary_csv, d, theta, xi)
    elif alpha is not None and beta is not None:
        if len(alpha) != d or len(beta) != d:
            raise InvalidSpecError("alpha and beta need one expression per state coordinate")
        pair = BoundaryPair(_expression_curve(alpha, theta), _expression_curve(beta, theta), theta, xi)
    else:
        raise InvalidSpecError("expression problems need alpha/beta or boundary_csv")
    return Problem(name, spec, pair, params={"drift": list(drift), "diffusion": [list(r_) for r_ in diffusion],
                                             "alpha": alpha, "beta": beta, "theta": theta})


def load_boundary_csv(path, d, theta, xi=None):
    """Sampled boundary with columns ``t, alpha_1..alpha_d, beta_1..beta_d``."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != 1 + 2 * d:
        raise InvalidSpecError(f"boundary CSV needs {1 + 2 * d} columns, found {data.shape[1]}")
    t = data[:, 0]
    if not (math.isclose(t[0], 0.0, abs_tol=1e-12) and math.isclose(t[-1], theta, rel_tol=1e-9)):
        raise InvalidSpecError("boundary CSV must span [0, theta]")
    return BoundaryPair(Curve.from_samples(t, data[:, 1:1 + d]), Curve.from_samples(t, data[:, 1 + d:]), theta, xi)


BUILTINS = {"example51": example51, "example52": example52, "ou": ou, "linear": linear}
