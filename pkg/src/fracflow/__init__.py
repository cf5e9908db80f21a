"""Fractional Caputo calculus on nonholonomic charts and fractional Ricci flow."""

from __future__ import annotations

from .connection import (
    DConnectionCoeffs,
    Geometry,
    canonical_dconnection,
    canonical_geometry,
    dcurvature,
    dtorsion,
    levi_civita_distortion,
    metricity_residual,
    scalar_curvature,
)
from .errors import (
    ChartMismatch,
    ConfigError,
    DegenerateMetric,
    FlowSingularity,
    FracFlowError,
    GridError,
    InvalidSamples,
)
from .fraccalc import (
    AxisGrid,
    FormField,
    FractionalOrder,
    SampledCurve,
    caputo_left,
    exterior_derivative,
    frac_div,
    frac_grad,
    fundamental_theorem_residual,
    partial,
    rl_derivative_left,
    rl_integral_left,
)
from .flow import FlowConfig, FlowHistory, FlowState, StepRecord, breather_classify, evolve, solve_scalar_ivp
from .geometry import DMetric, GridChart, NConnectionField, anholonomy, frame_derivatives, vielbein
from .perelman import (
    first_variation_F,
    functional_F,
    functional_W,
    mu_mass,
    normalize_potential,
    snapshot,
    thermodynamics,
)
from .scenarios import box_chart, flat_torus, perturbed_torus, round_sphere

__version__ = "0.1.0"

__all__ = [
    "AxisGrid", "ChartMismatch", "ConfigError", "DConnectionCoeffs", "DMetric", "DegenerateMetric",
    "FlowConfig", "FlowHistory", "FlowSingularity", "FlowState", "FormField", "FracFlowError",
    "FractionalOrder", "Geometry", "GridChart", "GridError", "InvalidSamples", "NConnectionField",
    "SampledCurve", "StepRecord", "anholonomy", "box_chart", "breather_classify", "canonical_dconnection",
    "canonical_geometry", "caputo_left", "dcurvature", "dtorsion", "evolve", "exterior_derivative",
    "first_variation_F", "flat_torus", "frac_div", "frac_grad", "frame_derivatives", "functional_F", "functional_W",
    "fundamental_theorem_residual", "levi_civita_distortion", "metricity_residual", "mu_mass",
    "normalize_potential", "partial", "perturbed_torus", "rl_derivative_left", "rl_integral_left", "round_sphere", "scalar_curvature",
    "snapshot", "solve_scalar_ivp", "thermodynamics", "vielbein",
]
