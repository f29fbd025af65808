import numpy as np
import pytest

from spdelab.grids import build_grid
from spdelab.operators import CoefficientField, assemble_divergence_form


@pytest.fixture
def heat_grid():
    return build_grid(0.0, 1.0, 3, 2.0)


@pytest.fixture
def unit_coeffs():
    return CoefficientField(a=lambda x: np.ones_like(np.asarray(x, dtype=float)),
                            b=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
                            kappa=0.5, c_bound=2.0)


@pytest.fixture
def heat_gen(heat_grid, unit_coeffs):
    return assemble_divergence_form(heat_grid, unit_coeffs)


def drift_coeffs():
    """Nonsymmetric shipped configuration: variable diffusion plus drift."""
    return CoefficientField(a=lambda x: 1.0 + 0.25 * np.sin(np.pi * np.asarray(x)),
                            b=lambda x: 0.5 * np.asarray(x),
                            kappa=0.5, c_bound=2.0)


def scalar_generator(value, r=2.0, M=1.0, w=0.0):
    """1x1 generator with a hand-certified sector, for closed-form oracles."""
    from spdelab.operators import SectorialGenerator

    grid = build_grid(0.0, 1.0, 1, r)
    return SectorialGenerator(np.array([[float(value)]]), (M, w), grid)


def mild_heat_generator(m=6, diffusivity=0.02):
    """Slow heat flow: keeps time-discretization bias far below MC noise."""
    grid = build_grid(0.0, 1.0, m, 2.0)
    coeffs = CoefficientField(a=lambda x: diffusivity * np.ones_like(np.asarray(x)),
                              b=lambda x: 0.0 * np.asarray(x),
                              kappa=diffusivity / 2, c_bound=1.0)
    return assemble_divergence_form(grid, coeffs)
