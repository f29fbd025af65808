"""spdelab: a numerical laboratory for semilinear parabolic SPDEs.

Simulates mild solutions of  dX = [A X + F(X)] dt + G(X) dW  on a discretized
interval and statistically verifies that solutions depend continuously on the
generator, the nonlinearities, the driving noise, the initial datum and the
spatial domain, each approximated along a schedule.
"""

__version__ = "0.1.0"

from .grids import SpatialGrid, TimeGrid, build_grid
from .operators import (
    CoefficientField,
    SectorialGenerator,
    SemigroupEvaluator,
    assemble_divergence_form,
    estimate_sectoriality,
    resolvent,
    restrict_to_subdomain,
    semigroup_apply,
    trotter_kato_check,
    yosida,
)

__all__ = [
    "SpatialGrid",
    "TimeGrid",
    "build_grid",
    "CoefficientField",
    "SectorialGenerator",
    "SemigroupEvaluator",
    "assemble_divergence_form",
    "estimate_sectoriality",
    "resolvent",
    "restrict_to_subdomain",
    "semigroup_apply",
    "trotter_kato_check",
    "yosida",
]
