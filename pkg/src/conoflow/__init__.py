"""Numerical laboratory for bicharacteristic flow and semiclassical waves
with potentials carrying a catalogued singularity along the interface x = 0.
"""

from .errors import (ConfigurationError, ConoflowError, DiagnosticError,
                     GlancingDiagnosticError, HypothesisViolationError,
                     NearGlancingError, NumericalInstabilityError,
                     OneSidedLimitWarning, PreconditionError,
                     SingularPointError, UnsupportedRegularityError)
from .flow import (Classification, ClassTag, PhasePoint, Trajectory, classify,
                   cross_interface, flow_box, glancing_modulus, hamiltonian,
                   integrate, normal_acceleration, normal_velocity,
                   step_glancing, step_smooth)
from .geometry import (CurvatureCheck, MetricModel, curvature_condition,
                       dual_metric, exp_metric, flat_metric, metric_from_name,
                       power_metric, principal_curvatures)
from .measure import (InvarianceResult, MeasureEstimate, PhaseSpaceBox,
                      box_mass, estimate, full_window_box, husimi,
                      invariance_defect, shell_concentration)
from .potentials import (ConormalPotential, PolynomialSmooth, RegularityTag,
                         SingularPart, mollify, potential, r_symbol,
                         smooth_const, smooth_linear, smooth_zero)
from .quantum import (Grid, ReflectionScanConfig, WaveState, coherent_state,
                      grid_1d, h_sweep, propagate, reflected_mass, residual,
                      transmitted_mass)

__version__ = "0.1.0"

__all__ = [
    "ConoflowError", "ConfigurationError", "UnsupportedRegularityError",
    "SingularPointError", "PreconditionError", "NearGlancingError",
    "NumericalInstabilityError", "HypothesisViolationError",
    "DiagnosticError", "GlancingDiagnosticError", "OneSidedLimitWarning",
    "MetricModel", "flat_metric", "power_metric", "exp_metric",
    "metric_from_name", "dual_metric", "principal_curvatures",
    "curvature_condition", "CurvatureCheck",
    "ConormalPotential", "PolynomialSmooth", "SingularPart", "RegularityTag",
    "potential", "smooth_zero", "smooth_const", "smooth_linear",
    "r_symbol", "mollify",
    "PhasePoint", "Trajectory", "Classification", "ClassTag",
    "hamiltonian", "normal_velocity", "normal_acceleration", "classify",
    "step_smooth", "cross_interface", "glancing_modulus", "step_glancing",
    "integrate", "flow_box",
    "Grid", "grid_1d", "WaveState", "coherent_state", "propagate",
    "residual", "reflected_mass", "transmitted_mass", "h_sweep",
    "ReflectionScanConfig",
    "PhaseSpaceBox", "MeasureEstimate", "InvarianceResult", "husimi",
    "box_mass", "estimate", "full_window_box", "invariance_defect",
    "shell_concentration",
]
