"""K-channel Brownian increments with stateless, replayable sampling.

A path is identified by (seed, stream_id) and its grid; the increment array
is regenerated from the key on demand and never needs to be stored.  Channel
projections realize the finite-rank noise approximation G P_n: channels above
the cutoff are zeroed while the identifying metadata stays intact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError
from .grids import TimeGrid
from .rng import BROWNIAN_SPACE, normal_draws

_RECORD = struct.Struct("<QQQQd")  # seed, stream_id, N, K, dt


@dataclass(frozen=True)
class BrownianPath:
    """Increments of K independent standard Brownian motions on a time grid."""

    grid: TimeGrid
    K: int
    increments: np.ndarray  # (steps, K), entry (m, k) = W_k(t_{m+1}) - W_k(t_m)
    seed: int
    stream_id: int
    active: int  # channels above this index are projected away

    def endpoint(self) -> np.ndarray:
        """W(T) per channel."""
        return self.increments.sum(axis=0)


def sample_path(grid: TimeGrid, K: int, seed: int, stream_id: int) -> BrownianPath:
    """Draw the path keyed by (seed, stream_id); bitwise reproducible."""
    if K < 1:
        raise ValidationError(f"channel count K must be positive, got {K}")
    draws = normal_draws(seed, BROWNIAN_SPACE, stream_id, (grid.steps, K))
    increments = np.sqrt(grid.dt) * draws
    increments.setflags(write=False)
    return BrownianPath(grid, K, increments, int(seed), int(stream_id), K)


def project(path: BrownianPath, n: int) -> BrownianPath:
    """Coordinate projection P_n: zero every channel with index > n."""
    if not 1 <= n <= path.K:
        raise ValidationError(f"projection rank n must satisfy 1 <= n <= K={path.K}, got {n}")
    if n == path.active:
        return path
    increments = path.increments.copy()
    increments[:, n:] = 0.0
    increments.setflags(write=False)
    return replace(path, increments=increments, active=min(n, path.active))


def pair_with_step(path: BrownianPath, f: np.ndarray) -> float:
    """Discrete pairing sum_m f(t_m) . dW_m for a cellwise-constant f."""
    f = np.asarray(f, dtype=float)
    if f.shape != path.increments.shape:
        raise ValidationError(
            f"step function must have shape (steps, K) = {path.increments.shape}, got {f.shape}"
        )
    return float(np.sum(f * path.increments))


def export_path(path: BrownianPath) -> bytes:
    """Flat binary record (seed, stream_id, N, K, dt); increments are regenerated.

    Projected paths are derived views without a slot in the record; export
    the base path and re-apply the projection.
    """
    if path.active != path.K:
        raise ValidationError("projected paths cannot be exported; export the base path")
    return _RECORD.pack(path.seed, path.stream_id, path.grid.steps, path.K, path.grid.dt)


def import_path(record: bytes) -> BrownianPath:
    if len(record) != _RECORD.size:
        raise ValidationError(f"path record must be {_RECORD.size} bytes, got {len(record)}")
    seed, stream_id, steps, K, dt = _RECORD.unpack(record)
    grid = TimeGrid(T=dt * steps, steps=steps)
    return sample_path(grid, K, seed, stream_id)
