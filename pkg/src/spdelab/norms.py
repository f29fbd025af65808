"""Pathwise norms of discrete trajectories and their ensemble aggregation.

Three pathwise functionals feed the convergence studies: the sup of the
spatial L^r norm over time nodes, the Holder seminorm over all node pairs,
and the weighted-measure seminorm

    v(X) = ( int_0^T || s -> (t-s)^(-alpha) X(s) ||_{gamma(L^2(0,t), E)}^p dt )^(1/p),

whose inner norm is realized through the square function against
mu_t^alpha(ds) = (t-s)^(-2 alpha) ds (exact at r = 2).  Ensemble reduction
returns (mean of v^q)^(1/q) with a delta-method standard error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .grids import SpatialGrid
from .operators import SemigroupEvaluator
from .solver import PathProcess, semigroup_orbit

HOLDER_EXACT_CAP = 4096


@dataclass(frozen=True)
class NormSpec:
    """A metric request with its exponent window checks.

    kind: one of 'sup_C', 'holder_C_lambda', 'v_alpha_p'.
    """

    kind: str
    lam: float = 0.25
    alpha: float = 0.3
    p: float = 8.0
    q: float = 2.0

    def validate(self, r: float) -> None:
        if self.kind not in ("sup_C", "holder_C_lambda", "v_alpha_p"):
            raise ValidationError(f"unknown norm kind {self.kind!r}")
        if not self.q < self.p:
            raise ValidationError(f"integrability window violated: q must be < p, got q={self.q}, p={self.p}")
        if self.kind == "v_alpha_p" and not (1.0 / self.p < self.alpha < 0.5):
            raise ValidationError(
                f"alpha must satisfy 1/p < alpha < 1/2, got alpha={self.alpha} with 1/p={1.0 / self.p}"
            )
        if self.kind == "holder_C_lambda":
            ceiling = 0.5 - 1.0 / self.p
            if not 0.0 <= self.lam < ceiling:
                raise ValidationError(
                    f"lambda must be < 1/2 - 1/p = {ceiling}, got lambda={self.lam}"
                )
            tau = min(r, 2.0)
            floor = 1.0 / tau - 0.5
            if self.lam <= floor:
                raise ValidationError(
                    f"lambda must exceed 1/tau - 1/2 = {floor} for r = {r}, got lambda={self.lam}"
                )


@dataclass(frozen=True)
class EnsembleEstimate:
    value: float  # (mean of v^q)^(1/q)
    std_error: float
    samples: int
    q: float
    rejected: int = 0


def sup_norm(X: PathProcess) -> float:
    """max_m || X(t_m, .) ||_{L^r}."""
    return float(np.max(X.sgrid.lr_norm(X.values)))


def holder_seminorm(X: PathProcess, lam: float, mode: str = "exact") -> float:
    """max over node pairs of ||X(t') - X(t)|| / (t' - t)^lam.

    The exact all-pairs scan is O(N^2) and capped at N = 4096 nodes; the
    'dyadic_bound' mode scans only lags 2^k and multiplies by the chaining
    constant 1/(1 - 2^(-lam)), giving an O(N log N) upper bound on the exact
    value (labeled as such by the mode name).
    """
    if not 0.0 <= lam <= 1.0:
        raise ValidationError(f"Holder exponent must lie in [0, 1], got {lam}")
    values = X.values
    n_nodes = values.shape[0]
    dt = X.tgrid.dt
    grid = X.sgrid
    if mode == "exact":
        if n_nodes > HOLDER_EXACT_CAP:
            raise ValidationError(
                f"{n_nodes} nodes exceed the exact-scan cap {HOLDER_EXACT_CAP}; "
                "use mode='dyadic_bound'"
            )
        lags = range(1, n_nodes)
        chaining = 1.0
    elif mode == "dyadic_bound":
        if lam == 0.0:
            raise ValidationError("the dyadic bound needs lambda > 0")
        lags = [1 << b for b in range(int(np.log2(max(n_nodes - 1, 1))) + 1) if (1 << b) < n_nodes]
        chaining = 1.0 / (1.0 - 2.0 ** (-lam))
    else:
        raise ValidationError(f"unknown mode {mode!r}")

    best = 0.0
    if grid.r == 2.0:
        gram = grid.h * (values @ values.T)
        diag = np.diagonal(gram)
        for lag in lags:
            cross = np.diagonal(gram, offset=lag)
            dist_sq = np.maximum(diag[lag:] + diag[:-lag] - 2.0 * cross, 0.0)
            best = max(best, float(np.max(dist_sq)) ** 0.5 / (lag * dt) ** lam)
    else:
        for lag in lags:
            dist = grid.lr_norm(values[lag:] - values[:-lag])
            best = max(best, float(np.max(dist)) / (lag * dt) ** lam)
    return best * chaining


_WEIGHT_CACHE: dict = {}


def _measure_weight_matrix(steps: int, dt: float, alpha: float) -> np.ndarray:
    """W[j, i] = exact mass of cell [s_i, s_{i+1}) under (t_j - s)^(-2 alpha) ds.

    Lower-triangular (cells left of t_j); row 0 is empty.  Cached per
    (steps, dt, alpha) since every trajectory of a study shares it.
    """
    key = (steps, dt, alpha)
    if key not in _WEIGHT_CACHE:
        power = 1.0 - 2.0 * alpha
        nodes = dt * np.arange(steps + 1)
        gaps = nodes[:, None] - nodes[None, :]  # t_j - s_i
        with np.errstate(invalid="ignore"):
            tails = np.where(gaps > 0, gaps, 0.0) ** power
        weights = (tails[:, :-1] - tails[:, 1:]) / power
        _WEIGHT_CACHE[key] = np.tril(np.maximum(weights, 0.0))
    return _WEIGHT_CACHE[key]


def v_alpha_seminorm(X: PathProcess, alpha: float, p: float) -> float:
    """Outer-in-t, inner-square-function realization of the weighted seminorm."""
    if not 0.0 < alpha < 0.5:
        raise ValidationError(f"alpha must lie in (0, 1/2), got {alpha}")
    if p < 1.0:
        raise ValidationError(f"p must be at least 1, got {p}")
    return _v_alpha(X.values, X.tgrid.dt, alpha, p, X.sgrid)


def _v_alpha(values: np.ndarray, dt: float, alpha: float, p: float, grid: SpatialGrid) -> float:
    steps = values.shape[0] - 1
    if steps == 0:
        return 0.0
    weights = _measure_weight_matrix(steps, dt, alpha)
    density = weights @ (values[:-1] ** 2)  # (steps+1, m): row j = sum_i w_ji X(s_i)^2
    inner = grid.lr_norm(np.sqrt(density))
    return float(np.trapezoid(inner**p, dx=dt) ** (1.0 / p))


def v_alpha_window(X: PathProcess, alpha: float, p: float, start: int, stop: int) -> float:
    """Seminorm of the trajectory restricted to nodes [start, stop]."""
    if not 0 <= start < stop <= X.tgrid.steps:
        raise ValidationError(f"invalid window [{start}, {stop}] for {X.tgrid.steps} steps")
    return _v_alpha(X.values[start : stop + 1], X.tgrid.dt, alpha, p, X.sgrid)


def ensemble_norm(samples, q: float) -> EnsembleEstimate:
    """(mean of v^q)^(1/q) over ensemble samples with a delta-method error bar.

    Non-finite samples are excluded and tallied; a nonzero tally fails
    strict-mode studies upstream.
    """
    arr = np.asarray(list(samples), dtype=float)
    if arr.size < 2:
        raise ValidationError(f"ensemble aggregation needs at least 2 samples, got {arr.size}")
    finite = np.isfinite(arr)
    rejected = int(arr.size - finite.sum())
    arr = arr[finite]
    if arr.size < 2:
        raise ValidationError("fewer than 2 finite samples after exclusion")
    powered = arr**q
    mean = float(np.mean(powered))
    se_mean = float(np.std(powered, ddof=1) / np.sqrt(arr.size))
    if mean <= 0.0:
        return EnsembleEstimate(0.0, 0.0, int(arr.size), q, rejected)
    value = mean ** (1.0 / q)
    std_error = se_mean * value / (q * mean)
    return EnsembleEstimate(float(value), float(std_error), int(arr.size), q, rejected)


def compensate(X: PathProcess, ev: SemigroupEvaluator, xi: np.ndarray) -> PathProcess:
    """t_m -> X(t_m) - S(t_m) xi, the object with datum-independent regularity."""
    if ev.generator.grid != X.sgrid:
        raise ValidationError("evaluator and trajectory must share the spatial grid")
    orbit = semigroup_orbit(ev, xi, X.tgrid)
    return PathProcess(X.tgrid, X.sgrid, X.values - orbit, driving=X.driving)
