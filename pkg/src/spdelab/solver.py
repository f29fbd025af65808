"""Mild-solution machinery: convolutions, exponential Euler, Picard oracle.

The integral equation X(t) = S(t) xi + int S(t-s) F(X(s)) ds
+ int S(t-s) G(X(s)) dW(s) is discretized by freezing the integrands at the
left endpoint of each cell while applying the semigroup exactly:

    X_{m+1} = S(dt) (X_m + dt F(X_m) + G(X_m) dW_m).

The fixed point of the discrete solution map
Lambda(phi) = S(.) xi + S*F(phi) + S<>G(phi), built from the same
convolutions, coincides with this recursion; iterating Lambda is therefore an
independent route to the same object and serves as a cross-validation oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractionError, GridMismatchError, SolverBlowupError, ValidationError
from .grids import SpatialGrid, TimeGrid
from .noise import BrownianPath, project, sample_path
from .nonlinearity import InitialDatum, NonlinearityF, NonlinearityG
from .operators import SectorialGenerator, SemigroupEvaluator


@dataclass
class PathProcess:
    """One sample trajectory: values[m] is the state at time node t_m."""

    tgrid: TimeGrid
    sgrid: SpatialGrid
    values: np.ndarray  # (steps + 1, m)
    driving: tuple | None = None  # (seed, stream_id) of the Brownian path

    def __post_init__(self):
        expected = (self.tgrid.steps + 1, self.sgrid.m)
        if self.values.shape != expected:
            raise ValidationError(f"trajectory must have shape {expected}, got {self.values.shape}")


def _evaluator(g: SectorialGenerator, ev: SemigroupEvaluator | None) -> SemigroupEvaluator:
    if ev is None:
        return SemigroupEvaluator(g)
    if ev.generator is not g:
        raise ValidationError("evaluator does not belong to the supplied generator")
    return ev


def det_convolution(ev: SemigroupEvaluator, f_path: np.ndarray, tgrid: TimeGrid) -> PathProcess:
    """Recursive exponential quadrature of int_0^t S(t-s) f(s) ds.

    Y_0 = 0, Y_{m+1} = S(dt)(Y_m + dt f(t_m)): the left-endpoint rule with
    exact semigroup weights.
    """
    grid = ev.generator.grid
    f_path = np.asarray(f_path, dtype=float)
    if f_path.shape[0] not in (tgrid.steps, tgrid.steps + 1) or f_path.shape[1] != grid.m:
        raise ValidationError(
            f"forcing must be sampled on the time grid: expected ({tgrid.steps}[+1], {grid.m}),"
            f" got {f_path.shape}"
        )
    prop = ev.propagator(tgrid.dt)
    out = np.zeros((tgrid.steps + 1, grid.m))
    state = np.zeros(grid.m)
    dt = tgrid.dt
    for step in range(tgrid.steps):
        state = prop @ (state + dt * f_path[step])
        out[step + 1] = state
    return PathProcess(tgrid, grid, out)


def stoch_convolution(ev: SemigroupEvaluator, phi_path: np.ndarray, path: BrownianPath) -> PathProcess:
    """Ito left-point rule for int_0^t S(t-s) Phi(s) dW(s).

    Z_0 = 0, Z_{m+1} = S(dt)(Z_m + Phi(t_m) dW_m).  Adaptedness is the
    caller's contract: phi_path[m] may depend only on data up to t_m.
    """
    grid = ev.generator.grid
    tgrid = path.grid
    phi_path = np.asarray(phi_path, dtype=float)
    expected = (tgrid.steps, grid.m, path.K)
    if phi_path.shape not in (expected, (tgrid.steps + 1, grid.m, path.K)):
        raise ValidationError(f"operator path must have shape {expected}, got {phi_path.shape}")
    prop = ev.propagator(tgrid.dt)
    out = np.zeros((tgrid.steps + 1, grid.m))
    state = np.zeros(grid.m)
    for step in range(tgrid.steps):
        state = prop @ (state + phi_path[step] @ path.increments[step])
        out[step + 1] = state
    return PathProcess(tgrid, grid, out)


def _initial_state(g: SectorialGenerator, xi: InitialDatum, path: BrownianPath) -> np.ndarray:
    x0 = xi.sample(path.seed, path.stream_id)
    if x0.shape != (g.grid.m,):
        raise ValidationError(f"initial datum has shape {x0.shape}, expected ({g.grid.m},)")
    if g.mask is not None:
        x0 = x0 * g.mask
    return x0


def solve_exponential_euler(
    g: SectorialGenerator,
    F: NonlinearityF,
    G: NonlinearityG,
    xi: InitialDatum,
    path: BrownianPath,
    ev: SemigroupEvaluator | None = None,
) -> PathProcess:
    """One trajectory of the exponential Euler scheme."""
    if G.K != path.K:
        raise ValidationError(f"noise has {path.K} channels but G supplies {G.K}")
    ev = _evaluator(g, ev)
    tgrid = path.grid
    dt = tgrid.dt
    prop = ev.propagator(dt)
    values = np.empty((tgrid.steps + 1, g.grid.m))
    state = _initial_state(g, xi, path)
    values[0] = state
    for step in range(tgrid.steps):
        forced = state + dt * F(state) + G(state) @ path.increments[step]
        state = prop @ forced
        if not np.all(np.isfinite(state)):
            raise SolverBlowupError(step + 1)
        values[step + 1] = state
    return PathProcess(tgrid, g.grid, values, driving=(path.seed, path.stream_id))


def semigroup_orbit(ev: SemigroupEvaluator, x0: np.ndarray, tgrid: TimeGrid) -> np.ndarray:
    """S(t_m) x0 on the grid nodes, computed by repeated exact steps."""
    g = ev.generator
    orbit = np.empty((tgrid.steps + 1, g.grid.m))
    state = np.asarray(x0, dtype=float)
    if g.mask is not None:
        state = state * g.mask
    orbit[0] = state
    prop = ev.propagator(tgrid.dt)
    for step in range(tgrid.steps):
        state = prop @ state
        orbit[step + 1] = state
    return orbit


@dataclass
class PicardResult:
    process: PathProcess
    iterations: int
    increments: list
    contraction_ratio: float
    converged: bool


def picard_solve(
    g: SectorialGenerator,
    F: NonlinearityF,
    G: NonlinearityG,
    xi: InitialDatum,
    path: BrownianPath,
    iterations: int = 32,
    tol: float = 1e-10,
    ev: SemigroupEvaluator | None = None,
) -> PicardResult:
    """Iterate the solution map Lambda from phi_0 = S(.) xi.

    Stops when the sup-norm increment drops to tol or the iteration budget
    runs out; three consecutive non-contracting sweeps abort with advice to
    shorten the horizon.
    """
    if iterations < 1:
        raise ValidationError(f"need at least one iteration, got {iterations}")
    ev = _evaluator(g, ev)
    tgrid = path.grid
    grid = g.grid
    orbit = semigroup_orbit(ev, xi.sample(path.seed, path.stream_id), tgrid)
    current = orbit.copy()
    increments: list[float] = []
    expanding_streak = 0
    converged = False
    runs = 0
    for _ in range(iterations):
        runs += 1
        drift = det_convolution(ev, F(current[:-1]), tgrid).values
        noise = stoch_convolution(ev, G(current[:-1]), path).values
        updated = orbit + drift + noise
        step_size = float(np.max(grid.lr_norm(updated - current)))
        increments.append(step_size)
        current = updated
        if len(increments) >= 2 and increments[-2] > 0:
            if increments[-1] >= increments[-2]:
                expanding_streak += 1
                if expanding_streak >= 3:
                    raise ContractionError(
                        "solution map failed to contract for three consecutive sweeps "
                        f"(last ratio {increments[-1] / increments[-2]:.3g}); "
                        "shorten the horizon T or reduce the nonlinearity constants"
                    )
            else:
                expanding_streak = 0
        if step_size <= tol:
            converged = True
            break
    ratio = (
        increments[-1] / increments[-2]
        if len(increments) >= 2 and increments[-2] > 0
        else float("nan")
    )
    process = PathProcess(tgrid, grid, current, driving=(path.seed, path.stream_id))
    return PicardResult(process, runs, increments, ratio, converged)


def solve_coupled(
    g_a: SectorialGenerator,
    problem_a: tuple,
    g_b: SectorialGenerator,
    problem_b: tuple,
    path: BrownianPath,
) -> tuple[PathProcess, PathProcess]:
    """Solve two problems driven by the same increments and the same xi stream.

    problem_* is an (F, G, xi) triple.  Sharing the realization is what turns
    L^q(Omega) distances between solutions into low-variance Monte Carlo
    estimands.
    """
    if g_a.grid != g_b.grid:
        raise GridMismatchError("coupled solves require a shared spatial grid")
    f_a, gg_a, xi_a = problem_a
    f_b, gg_b, xi_b = problem_b
    out_a = solve_exponential_euler(g_a, f_a, gg_a, xi_a, path)
    out_b = solve_exponential_euler(g_b, f_b, gg_b, xi_b, path)
    return out_a, out_b


def solve_ensemble(
    g: SectorialGenerator,
    F: NonlinearityF,
    G: NonlinearityG,
    xi: InitialDatum,
    tgrid: TimeGrid,
    K: int,
    seed: int,
    streams: range,
    ev: SemigroupEvaluator | None = None,
    project_to: int | None = None,
) -> np.ndarray:
    """Vectorized exponential Euler over a block of streams.

    Returns values of shape (len(streams), steps + 1, m).  Stream s of the
    output is the same trajectory a per-path solve would produce (up to
    floating-point summation order inside the batched matrix products).
    """
    if G.K != K:
        raise ValidationError(f"noise has {K} channels but G supplies {G.K}")
    ev = _evaluator(g, ev)
    grid = g.grid
    n_streams = len(streams)
    increments = np.empty((n_streams, tgrid.steps, K))
    states = np.empty((n_streams, grid.m))
    for row, stream in enumerate(streams):
        path = sample_path(tgrid, K, seed, stream)
        if project_to is not None:
            path = project(path, project_to)
        increments[row] = path.increments
        states[row] = xi.sample(seed, stream)
    if g.mask is not None:
        states = states * g.mask
    prop_t = ev.propagator(tgrid.dt).T
    dt = tgrid.dt
    values = np.empty((n_streams, tgrid.steps + 1, grid.m))
    values[:, 0, :] = states
    for step in range(tgrid.steps):
        forced = states + dt * F(states) + np.einsum(
            "smk,sk->sm", G(states), increments[:, step, :]
        )
        states = forced @ prop_t
        if not np.all(np.isfinite(states)):
            bad = np.flatnonzero(~np.all(np.isfinite(states), axis=1))[0]
            raise SolverBlowupError(step + 1, detail=f"stream {streams[int(bad)]}")
        values[:, step + 1, :] = states
    return values
