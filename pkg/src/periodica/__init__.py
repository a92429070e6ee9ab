"""Periodic-in-distribution solutions of periodic SDEs by monotone iteration
between stochastic lower and upper envelopes."""
from .boundary import BoundaryPair, Curve, HypothesisReport, build_envelopes, estimate_constants
from .core import (
    CoverageError,
    IntegrationBlowupError,
    InvalidSpecError,
    NoiseEnsemble,
    PathEnsemble,
    SdeSpec,
    TimeGrid,
    make_noise,
    periodic_wrap,
)
from .distribution import EmpiricalMeasure, ks_two_sample, law_distance, periodicity_scan, wasserstein1
from .integrators import IntegratorConfig, integrate
from .iteration import AOperatorConfig, apply_A, monotone_sweep, periodic_solution, poincare_fixed_point
from .pipeline import RunConfig

__all__ = [
    "AOperatorConfig", "BoundaryPair", "CoverageError", "Curve", "EmpiricalMeasure", "HypothesisReport",
    "IntegrationBlowupError", "IntegratorConfig", "InvalidSpecError", "NoiseEnsemble", "PathEnsemble",
    "RunConfig", "SdeSpec", "TimeGrid", "apply_A", "build_envelopes", "estimate_constants", "integrate",
    "ks_two_sample", "law_distance", "make_noise", "monotone_sweep", "periodic_solution", "periodic_wrap",
    "periodicity_scan", "poincare_fixed_point", "wasserstein1",
]
