"""Pointwise (Nemytskii) nonlinearities and initial data.

A scalar function f lifts to state vectors by acting on each node value;
per-channel functions g_k do the same for the noise operator, column k of
G(u) being g_k applied nodewise.  Lipschitz and linear-growth claims are not
trusted: `audit` checks them on a dense probe lattice and reports the worst
witnesses, and the experiment layer refuses to run on failed audits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .rng import INITIAL_DATUM_SPACE, normal_draws

AUDIT_RANGE = (-50.0, 50.0)
AUDIT_POINTS = 10_000
_AUDIT_SLACK = 1e-9


@dataclass(frozen=True)
class BoundAudit:
    """Outcome of a Lipschitz/growth audit on the probe lattice."""

    passed: bool
    max_slope: float
    max_growth_ratio: float
    witness: float  # lattice point of the worst violation (or worst slope)

    @property
    def lipschitz_ok(self) -> bool:
        return self.max_slope <= 1.0 + _AUDIT_SLACK

    @property
    def growth_ok(self) -> bool:
        return self.max_growth_ratio <= 1.0 + _AUDIT_SLACK


def _lattice():
    return np.linspace(AUDIT_RANGE[0], AUDIT_RANGE[1], AUDIT_POINTS)


def _audit_scalar(fn, lip, growth) -> BoundAudit:
    u = _lattice()
    values = np.asarray(fn(u), dtype=float)
    if values.shape != u.shape:
        values = np.broadcast_to(values, u.shape)
    slopes = np.abs(np.diff(values)) / np.diff(u)
    max_slope = float(np.max(slopes))
    rel_slope = 0.0 if max_slope == 0.0 else (max_slope / lip if lip > 0 else np.inf)
    with np.errstate(divide="ignore"):
        growth_ratio = np.abs(values) / (growth * (1.0 + np.abs(u))) if growth > 0 else np.where(values == 0.0, 0.0, np.inf)
    rel_growth = float(np.max(growth_ratio))
    if rel_slope > 1.0 + _AUDIT_SLACK:
        witness = float(u[int(np.argmax(np.abs(np.diff(values)) / np.diff(u)))])
    else:
        witness = float(u[int(np.argmax(growth_ratio))])
    passed = rel_slope <= 1.0 + _AUDIT_SLACK and rel_growth <= 1.0 + _AUDIT_SLACK
    return BoundAudit(passed, rel_slope, rel_growth, witness)


@dataclass(frozen=True)
class NonlinearityF:
    """Drift nonlinearity u -> f(u) with claimed Lipschitz/growth constants."""

    fn: object
    lip: float
    growth: float
    source: str = ""

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        out = np.asarray(self.fn(u), dtype=float)
        return np.broadcast_to(out, u.shape) if out.shape != u.shape else out

    def audit(self) -> BoundAudit:
        return _audit_scalar(self.fn, self.lip, self.growth)

    @classmethod
    def zero(cls) -> "NonlinearityF":
        return cls(fn=lambda u: np.zeros_like(u), lip=0.0, growth=0.0, source="0")


@dataclass(frozen=True)
class NonlinearityG:
    """Noise nonlinearity: channel k acts as u -> g_k(u) nodewise."""

    channels: tuple
    lip: float
    growth: float
    sources: tuple = ()

    @property
    def K(self) -> int:
        return len(self.channels)

    def __call__(self, u):
        """Stack channel values along a trailing axis: shape u.shape + (K,)."""
        u = np.asarray(u, dtype=float)
        cols = []
        for g in self.channels:
            out = np.asarray(g(u), dtype=float)
            cols.append(np.broadcast_to(out, u.shape) if out.shape != u.shape else out)
        return np.stack(cols, axis=-1)

    def audit(self) -> list[BoundAudit]:
        return [_audit_scalar(g, self.lip, self.growth) for g in self.channels]

    @classmethod
    def zero(cls, K: int) -> "NonlinearityG":
        return cls(channels=tuple(lambda u: np.zeros_like(u) for _ in range(K)),
                   lip=0.0, growth=0.0, sources=("0",) * K)


@dataclass(frozen=True)
class InitialDatum:
    """Initial state sampler keyed by (seed, stream_id).

    Samples are drawn from the initial-datum key space, which is disjoint
    from the Brownian key space, so the datum is independent of the driving
    noise by construction.  The deterministic case ignores the stream.
    """

    sampler: object
    deterministic: bool

    def sample(self, seed: int, stream_id: int) -> np.ndarray:
        return np.asarray(self.sampler(seed, stream_id), dtype=float)

    @classmethod
    def from_vector(cls, vector) -> "InitialDatum":
        vector = np.asarray(vector, dtype=float).copy()
        vector.setflags(write=False)
        return cls(sampler=lambda seed, stream: vector, deterministic=True)

    @classmethod
    def gaussian_nodes(cls, mean, std: float) -> "InitialDatum":
        """Nodewise independent Gaussian perturbation of a mean profile."""
        mean = np.asarray(mean, dtype=float).copy()
        if std < 0:
            raise ValidationError(f"standard deviation must be nonnegative, got {std}")

        def sampler(seed, stream, _mean=mean, _std=float(std)):
            return _mean + _std * normal_draws(seed, INITIAL_DATUM_SPACE, stream, _mean.shape)

        return cls(sampler=sampler, deterministic=std == 0.0)
