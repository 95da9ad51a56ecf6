"""Particle simulator and verification toolkit for measure differential equations on R^n."""

__version__ = "0.1.0"

from ._backend import BACKEND
from .afas import AfasConfig, Partition, build_afas, build_lafas, convergence_study, e_flow, f_flow
from .fields import (
    AffineField,
    AnalyticField,
    Box,
    ConstantField,
    TestFunction,
    VectorField,
    flow,
    lie,
    lie2,
    standard_test_battery,
    w2inf_norm,
)
from .measure import EmpiricalMeasure, MeasureCurve, covariance, mixture, moment, pushforward, resample
from .residual import ResidualReport, residual_suite, weak_residual
from .transport import TransportPlanReport, curve_sup_distance, w1_duality_lower_bound, wasserstein
from .vfp import (
    VectorFieldProbability,
    VfpMap,
    barycenter,
    centered_atoms,
    coefficients,
    elliptic_regularize,
    ellipticity,
    square_op,
    symmetrize,
    vfp_moment,
)

__all__ = [
    "BACKEND",
    "AfasConfig",
    "Partition",
    "build_afas",
    "build_lafas",
    "convergence_study",
    "e_flow",
    "f_flow",
    "AffineField",
    "AnalyticField",
    "Box",
    "ConstantField",
    "TestFunction",
    "VectorField",
    "flow",
    "lie",
    "lie2",
    "standard_test_battery",
    "w2inf_norm",
    "EmpiricalMeasure",
    "MeasureCurve",
    "covariance",
    "mixture",
    "moment",
    "pushforward",
    "resample",
    "ResidualReport",
    "residual_suite",
    "weak_residual",
    "TransportPlanReport",
    "curve_sup_distance",
    "w1_duality_lower_bound",
    "wasserstein",
    "VectorFieldProbability",
    "VfpMap",
    "barycenter",
    "centered_atoms",
    "coefficients",
    "elliptic_regularize",
    "ellipticity",
    "square_op",
    "symmetrize",
    "vfp_moment",
]
