"""Spatial and temporal grids.

The state space is the discretization of L^r over an open interval: values at
m uniformly spaced interior nodes, with the boundary values eliminated by the
homogeneous Dirichlet condition.  The L^r integral uses the open composite
midpoint rule, one weight h per interior node, so the weights sum to m*h
rather than to the interval length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform interior mesh of (x_lo, x_hi) carrying the L^r quadrature."""

    x_lo: float
    x_hi: float
    m: int
    r: float

    @property
    def h(self) -> float:
        return (self.x_hi - self.x_lo) / (self.m + 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        """Interior nodes x_i = x_lo + i*h, i = 1..m."""
        return self.x_lo + self.h * np.arange(1, self.m + 1)

    @cached_property
    def half_nodes(self) -> np.ndarray:
        """Flux points x_{i+1/2}, i = 0..m, where the diffusion coefficient is sampled."""
        return self.x_lo + self.h * (np.arange(0, self.m + 1) + 0.5)

    @cached_property
    def weights(self) -> np.ndarray:
        return np.full(self.m, self.h)

    def lr_norm(self, values) -> np.ndarray | float:
        """Quadrature L^r norm over the last axis: (sum_i h |v_i|^r)^(1/r)."""
        values = np.asarray(values)
        if self.r == 2.0:
            out = np.sqrt(self.h) * np.linalg.norm(values, axis=-1)
        else:
            out = (self.h * np.sum(np.abs(values) ** self.r, axis=-1)) ** (1.0 / self.r)
        return float(out) if out.ndim == 0 else out

    def l2_inner(self, u, v) -> float:
        return float(self.h * np.dot(np.asarray(u), np.asarray(v)))


def build_grid(x_lo: float, x_hi: float, m: int, r: float) -> SpatialGrid:
    """Validated SpatialGrid constructor."""
    if not (math.isfinite(x_lo) and math.isfinite(x_hi)):
        raise ValidationError(f"interval endpoints must be finite: ({x_lo}, {x_hi})")
    if not x_lo < x_hi:
        raise ValidationError(f"need x_lo < x_hi, got ({x_lo}, {x_hi})")
    if int(m) != m or m < 1:
        raise ValidationError(f"node count m must be a positive integer, got {m}")
    if not (math.isfinite(r) and r > 1.0):
        raise ValidationError(f"Lebesgue exponent r must satisfy r > 1, got {r}")
    return SpatialGrid(float(x_lo), float(x_hi), int(m), float(r))


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of [0, T] into `steps` cells."""

    T: float
    steps: int

    def __post_init__(self):
        if not (math.isfinite(self.T) and self.T > 0):
            raise ValidationError(f"horizon T must be positive and finite, got {self.T}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValidationError(f"steps must be a positive integer, got {self.steps}")

    @property
    def dt(self) -> float:
        return self.T / self.steps

    @cached_property
    def nodes(self) -> np.ndarray:
        # linspace pins the last node to T exactly
        return np.linspace(0.0, self.T, self.steps + 1)
