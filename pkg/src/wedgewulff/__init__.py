"""Numerical verification of integral identities for anisotropic capillary hypersurfaces in wedges."""

from .errors import ConfigError, GeometryError
from .norms import (
    Custom,
    Ellipsoidal,
    Isotropic,
    NormSpec,
    Shifted,
    SuperquadricBlend,
    norm_from_dict,
    shift_norm,
)
from .scenario import load_scenario_file, scenario_from_dict
from .suites import run_scenario, run_suite
from .surfaces import QuadratureSpec, SphereBump, perturb, wulff_patch
from .verify import Report, Verdict, VerificationScenario
from .wedge import Wedge, solve_k_vector

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "Custom",
    "Ellipsoidal",
    "GeometryError",
    "Isotropic",
    "NormSpec",
    "QuadratureSpec",
    "Report",
    "Shifted",
    "SphereBump",
    "SuperquadricBlend",
    "Verdict",
    "VerificationScenario",
    "Wedge",
    "load_scenario_file",
    "norm_from_dict",
    "perturb",
    "run_scenario",
    "run_suite",
    "scenario_from_dict",
    "shift_norm",
    "solve_k_vector",
    "wulff_patch",
]
