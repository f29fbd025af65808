"""Divergence-form generators and their semigroup/resolvent machinery.

The operator d/dx(a(x) du/dx) + b(x) du/dx with homogeneous Dirichlet
conditions is discretized by second-order centered differences, sampling the
diffusion coefficient at flux points x_{i+1/2}.  With b = 0 the matrix is
symmetric negative definite and the matrix exponential goes through an exact
eigendecomposition; otherwise a 13/13 Pade scaling-and-squaring kernel is
used.  Sectoriality is certified empirically: deterministic probes of
|lambda - w| * ||R(lambda, A)|| over the half-plane Re lambda > w.

A generator may carry a 0/1 diagonal mask.  Masked generators model dynamics
confined to a sub-interval inside the full grid: the matrix is the Dirichlet
operator of the sub-interval on the active nodes and zero elsewhere, and the
associated operator family satisfies S(0) = mask instead of S(0) = I.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import (
    ConditioningError,
    EllipticityError,
    GridMismatchError,
    NumericalMethodError,
    SectorialityError,
    ValidationError,
)
from .grids import SpatialGrid

SECTOR_TOL = 1e-6
_SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class CoefficientField:
    """Scalar diffusion and drift coefficients with their certified bounds.

    `a` and `b` are vectorized callables of the space variable.  `kappa` is
    the claimed ellipticity floor for a, `c_bound` the claimed sup bound for
    both; `validate_on` audits the claims on the nodes and flux points of a
    grid and raises naming the violated hypothesis.
    """

    a: object
    b: object
    kappa: float
    c_bound: float
    source: tuple = ()

    def validate_on(self, grid: SpatialGrid) -> None:
        points = np.concatenate([grid.half_nodes, grid.nodes])
        a_vals = np.broadcast_to(np.asarray(self.a(points), dtype=float), points.shape)
        worst = int(np.argmin(a_vals))
        if a_vals[worst] < self.kappa:
            raise EllipticityError(points[worst], a_vals[worst], self.kappa)
        if np.max(np.abs(a_vals)) > self.c_bound * (1 + 1e-12):
            bad = int(np.argmax(np.abs(a_vals)))
            raise ValidationError(
                f"hypothesis (ii) violated: |a({points[bad]:.6g})| = "
                f"{abs(a_vals[bad]):.6g} > C = {self.c_bound:.6g}"
            )
        b_vals = np.broadcast_to(np.asarray(self.b(grid.nodes), dtype=float), grid.nodes.shape)
        if np.max(np.abs(b_vals)) > self.c_bound * (1 + 1e-12):
            bad = int(np.argmax(np.abs(b_vals)))
            raise ValidationError(
                f"hypothesis (ii) violated: |b({grid.nodes[bad]:.6g})| = "
                f"{abs(b_vals[bad]):.6g} > C = {self.c_bound:.6g}"
            )


@dataclass
class SectorialGenerator:
    """Square matrix with a probe-certified sector and optional degeneracy mask."""

    matrix: np.ndarray
    sector: tuple  # (M, w)
    grid: SpatialGrid
    mask: np.ndarray | None = None
    coeffs: CoefficientField | None = None

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        m = self.matrix.shape[0]
        if self.matrix.shape != (m, m) or m != self.grid.m:
            raise ValidationError(
                f"matrix shape {self.matrix.shape} does not match grid with m={self.grid.m}"
            )
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=float)
            if not np.all((self.mask == 0.0) | (self.mask == 1.0)):
                raise ValidationError("mask must be a 0/1 diagonal projection")
            p = np.diag(self.mask)
            if not (np.allclose(p @ self.matrix, self.matrix) and np.allclose(self.matrix @ p, self.matrix)):
                raise ValidationError("mask must commute with the matrix: need P A = A P = A")

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    @property
    def active(self) -> np.ndarray:
        """Indices of nodes the dynamics lives on."""
        if self.mask is None:
            return np.arange(self.m)
        return np.flatnonzero(self.mask == 1.0)

    @cached_property
    def block(self) -> np.ndarray:
        """Restriction of the matrix to the active nodes."""
        if self.mask is None:
            return self.matrix
        idx = self.active
        return self.matrix[np.ix_(idx, idx)]

    @cached_property
    def symmetric(self) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.block)))) if self.block.size else 1.0
        return bool(np.max(np.abs(self.block - self.block.T)) <= _SYMMETRY_TOL * scale)

    @cached_property
    def spectral(self):
        """Eigendecomposition (w, Q) of the active block; symmetric case only."""
        if not self.symmetric:
            raise NumericalMethodError("eigendecomposition cache is only kept for symmetric generators")
        return np.linalg.eigh(self.block)

    def embed(self, values: np.ndarray) -> np.ndarray:
        """Zero-extend active-block values (..., k) back to the full grid."""
        if self.mask is None:
            return values
        out_shape = values.shape[:-1] + (self.m,)
        out = np.zeros(out_shape, dtype=values.dtype)
        out[..., self.active] = values
        return out

    def restrict(self, x: np.ndarray) -> np.ndarray:
        return x if self.mask is None else np.asarray(x)[..., self.active]

    def apply(self, x: np.ndarray) -> np.ndarray:
        """A x for x of shape (m,) or (batch, m); masked coordinates map to zero.

        No explicit masking is needed: a masked matrix equals P A P, which
        both ignores and annihilates the off-domain coordinates.
        """
        return np.asarray(x) @ self.matrix.T


def lr_operator_norm(mat: np.ndarray, r: float) -> float:
    """Operator norm of a matrix acting on the discretized L^r space.

    Uniform quadrature weights cancel, so the L^2 case is the spectral norm.
    For other exponents the exact norm is not computable and the
    Riesz-Thorin bound ||T||_1^(1/r) ||T||_inf^(1-1/r) is returned instead;
    it is an upper estimate, which is the conservative direction for
    sectoriality certificates.
    """
    if r == 2.0:
        return float(np.linalg.norm(mat, 2))
    n1 = float(np.max(np.sum(np.abs(mat), axis=0)))
    ninf = float(np.max(np.sum(np.abs(mat), axis=1)))
    if n1 == 0.0 or ninf == 0.0:
        return 0.0
    return n1 ** (1.0 / r) * ninf ** (1.0 - 1.0 / r)


def assemble_divergence_form(
    grid: SpatialGrid,
    coeffs: CoefficientField,
    w_candidate: float | None = None,
    probe_count: int = 64,
) -> SectorialGenerator:
    """Second-order stencil for d/dx(a du/dx) + b du/dx with Dirichlet BC."""
    coeffs.validate_on(grid)
    h = grid.h
    a_half = np.broadcast_to(np.asarray(coeffs.a(grid.half_nodes), dtype=float), grid.half_nodes.shape)
    b_node = np.broadcast_to(np.asarray(coeffs.b(grid.nodes), dtype=float), grid.nodes.shape)
    m = grid.m
    matrix = np.zeros((m, m))
    diag = -(a_half[:-1] + a_half[1:]) / h**2
    lower = a_half[1:-1] / h**2 - b_node[1:] / (2 * h)
    upper = a_half[1:-1] / h**2 + b_node[:-1] / (2 * h)
    matrix[np.arange(m), np.arange(m)] = diag
    matrix[np.arange(1, m), np.arange(m - 1)] = lower
    matrix[np.arange(m - 1), np.arange(1, m)] = upper
    gen = SectorialGenerator(matrix, (np.nan, 0.0), grid, coeffs=coeffs)
    if w_candidate is None:
        w_candidate = _default_shift(matrix)
    gen.sector = estimate_sectoriality(gen, w_candidate, probe_count)
    return gen


def _default_shift(matrix: np.ndarray) -> float:
    max_re = float(np.max(np.linalg.eigvals(matrix).real)) if matrix.size else -1.0
    if max_re < 0.0:
        return 0.0
    return max_re + max(1.0, 0.05 * abs(max_re))


def estimate_sectoriality(g: SectorialGenerator, w_candidate: float, probe_count: int = 64) -> tuple:
    """Empirical sector certificate (M, w).

    Probes |lambda - w| * ||R(lambda, A)|| at deterministic points of the
    half-plane Re lambda > w: five rays with log-spaced moduli from 1e-2 to
    1e6 plus three arcs.  Spectrum reaching into the probed half-plane means
    the sup cannot be finite, which probing alone can miss between probe
    points, so the eigenvalues are checked first.
    """
    if probe_count < 16:
        raise ValidationError(f"probe_count must be at least 16, got {probe_count}")
    block = g.block
    w = float(w_candidate)
    eigs = np.linalg.eigvals(block)
    scale = max(1.0, float(np.max(np.abs(eigs))) if eigs.size else 1.0)
    if float(np.max(eigs.real)) > w - 1e-12 * scale and float(np.max(eigs.real)) > w:
        raise SectorialityError(
            f"not certifiably sectorial at w = {w:.6g}: spectrum reaches "
            f"Re = {float(np.max(eigs.real)):.6g}; retry with a larger w"
        )
    n_mod = max(8, -(-probe_count // 8))
    moduli = np.logspace(-2.0, 6.0, n_mod)
    ray_angles = np.array([0.0, np.pi / 4, -np.pi / 4, np.pi / 2 - 1e-3, -(np.pi / 2 - 1e-3)])
    probes = [w + rho * np.exp(1j * th) for rho in moduli for th in ray_angles]
    arc_angles = np.linspace(-np.pi / 2 + 1e-3, np.pi / 2 - 1e-3, 9)
    probes += [w + rho * np.exp(1j * th) for rho in (0.1, 10.0, 1e3) for th in arc_angles]
    eye = np.eye(block.shape[0])
    best = 0.0
    for lam in probes:
        shifted = lam * eye - block
        try:
            if g.grid.r == 2.0:
                smallest = np.linalg.svd(shifted, compute_uv=False)[-1]
                if smallest <= 0.0 or not np.isfinite(smallest):
                    raise SectorialityError(f"resolvent singular near lambda = {lam:.6g}")
                value = abs(lam - w) / smallest
            else:
                value = abs(lam - w) * lr_operator_norm(np.linalg.inv(shifted), g.grid.r)
        except np.linalg.LinAlgError as exc:
            raise SectorialityError(f"resolvent solve failed at lambda = {lam:.6g}") from exc
        if not np.isfinite(value):
            raise SectorialityError(
                f"resolvent sup diverges near lambda = {lam:.6g}; retry with a larger w"
            )
        best = max(best, float(value))
    return (best, w)


def resolvent(g: SectorialGenerator, lam: complex, x: np.ndarray) -> np.ndarray:
    """R(lambda, A) x; for masked generators the pseudo-resolvent (zero off-domain)."""
    M, w = g.sector
    if not np.isfinite(complex(lam).real) or complex(lam).real <= w:
        raise ValidationError(
            f"lambda = {lam} lies outside the certified half-plane Re > {w:.6g}"
        )
    lam = complex(lam)
    x = np.asarray(x)
    xb = g.restrict(x)
    real_path = lam.imag == 0.0 and not np.iscomplexobj(x)
    shift = (lam.real if real_path else lam) * np.eye(g.block.shape[0]) - g.block
    try:
        sol = np.linalg.solve(shift, xb.T if xb.ndim > 1 else xb)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError(f"resolvent solve singular at lambda = {lam}") from exc
    if not np.all(np.isfinite(sol)):
        raise ConditioningError(f"resolvent solve ill-conditioned at lambda = {lam}")
    if xb.ndim > 1:
        sol = sol.T
    return g.embed(sol)


def yosida(g: SectorialGenerator, n: float) -> SectorialGenerator:
    """Bounded approximant n^2 R(n, A) - n I, keeping the parent certificate.

    Masked generators are approximated on their active block, so the result
    carries the same mask (the approximant of the off-domain zero action is
    zero again).
    """
    M, w = g.sector
    if not n > w:
        raise ValidationError(f"Yosida index n = {n} must exceed the sector shift w = {w:.6g}")
    block = g.block
    eye = np.eye(block.shape[0])
    try:
        resv = np.linalg.solve(float(n) * eye - block, eye)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError(f"Yosida resolvent solve failed at n = {n}") from exc
    approx_block = float(n) ** 2 * resv - float(n) * eye
    if g.mask is None:
        matrix = approx_block
    else:
        idx = g.active
        matrix = np.zeros_like(g.matrix)
        matrix[np.ix_(idx, idx)] = approx_block
    return SectorialGenerator(matrix, (M, w), g.grid, mask=None if g.mask is None else g.mask.copy())


_PADE13_THETA = 5.371920351148152
_PADE13_B = (
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
)


def expm_pade13(a: np.ndarray) -> np.ndarray:
    """Matrix exponential by 13/13 Pade approximation with scaling and squaring."""
    a = np.asarray(a, dtype=float)
    norm = float(np.linalg.norm(a, 1))
    if not np.isfinite(norm):
        raise NumericalMethodError("matrix exponential of a non-finite matrix")
    squarings = 0
    if norm > _PADE13_THETA:
        squarings = int(np.ceil(np.log2(norm / _PADE13_THETA)))
        a = a / 2.0**squarings
    b = _PADE13_B
    eye = np.eye(a.shape[0])
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a4 @ a2
    u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * eye)
    v = a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * eye
    try:
        result = np.linalg.solve(v - u, u + v)
    except np.linalg.LinAlgError as exc:
        raise NumericalMethodError("Pade denominator solve failed") from exc
    for _ in range(squarings):
        result = result @ result
    return result


class SemigroupEvaluator:
    """Evaluates S(t) = e^{tA}, caching per-t propagators.

    Symmetric generators go through their eigendecomposition; the rest
    through the Pade kernel.  For masked generators the propagator is the
    zero extension iota e^{t A~} pi, so S(0) equals the mask projection.

    Instances are safe to share across workers: cache fills are idempotent
    (same key always maps to the same matrix), so concurrent misses at worst
    duplicate work.
    """

    def __init__(self, generator: SectorialGenerator, method: str = "auto"):
        if method == "auto":
            method = "eig" if generator.symmetric else "pade"
        if method == "eig" and not generator.symmetric:
            raise NumericalMethodError("eigendecomposition method requires a symmetric generator")
        if method not in ("eig", "pade"):
            raise ValidationError(f"unknown semigroup method {method!r}")
        self.generator = generator
        self.method = method
        self._cache: dict[float, np.ndarray] = {}

    def propagator(self, t: float) -> np.ndarray:
        """Full-grid matrix of S(t)."""
        self._check_time(t)
        t = float(t)
        if t not in self._cache:
            g = self.generator
            if self.method == "eig":
                mu, q = g.spectral
                block = (q * np.exp(t * mu)) @ q.T
            else:
                block = expm_pade13(t * g.block)
            if g.mask is None:
                full = block
            else:
                idx = g.active
                full = np.zeros((g.m, g.m))
                full[np.ix_(idx, idx)] = block
            self._cache[t] = full
        return self._cache[t]

    def apply(self, t: float, x: np.ndarray) -> np.ndarray:
        """S(t) x for x of shape (m,) or (batch, m)."""
        self._check_time(t)
        g = self.generator
        t = float(t)
        x = np.asarray(x, dtype=float)
        if self.method == "eig" and t not in self._cache:
            mu, q = g.spectral
            out = ((g.restrict(x) @ q) * np.exp(t * mu)) @ q.T
            return g.embed(out)
        prop = self.propagator(t)
        return x @ prop.T if x.ndim > 1 else prop @ x

    @staticmethod
    def _check_time(t):
        if not np.isfinite(t):
            raise ValidationError(f"time must be finite, got {t}")
        if t < 0:
            raise ValidationError(f"semigroup time must be nonnegative, got {t}")


def semigroup_apply(ev: SemigroupEvaluator, t: float, x: np.ndarray) -> np.ndarray:
    return ev.apply(t, x)


def restrict_to_subdomain(g: SectorialGenerator, sub_lo: float, sub_hi: float) -> SectorialGenerator:
    """Degenerate generator of the sub-interval dynamics, zero off-domain.

    Sub-interval endpoints snap to the nearest grid node (Dirichlet values
    get eliminated there), so the active block is exactly the assembly of
    the same coefficients on the snapped sub-interval.
    """
    grid = g.grid
    if sub_lo < grid.x_lo - 1e-12 or sub_hi > grid.x_hi + 1e-12 or not sub_lo < sub_hi:
        raise ValidationError(
            f"sub-interval ({sub_lo}, {sub_hi}) must sit inside ({grid.x_lo}, {grid.x_hi})"
        )
    h = grid.h
    i_lo = int(round((sub_lo - grid.x_lo) / h))
    i_hi = int(round((sub_hi - grid.x_lo) / h))
    i_lo = max(0, min(i_lo, grid.m + 1))
    i_hi = max(0, min(i_hi, grid.m + 1))
    mask = np.zeros(grid.m)
    inside = (np.arange(1, grid.m + 1) > i_lo) & (np.arange(1, grid.m + 1) < i_hi)
    if g.mask is not None:
        inside &= g.mask == 1.0
    mask[inside] = 1.0
    if not np.any(mask):
        raise ValidationError(
            f"sub-interval ({sub_lo}, {sub_hi}) snapped to ({i_lo}, {i_hi}) contains no interior node"
        )
    idx = np.flatnonzero(mask == 1.0)
    matrix = np.zeros_like(g.matrix)
    matrix[np.ix_(idx, idx)] = g.matrix[np.ix_(idx, idx)]
    restricted = SectorialGenerator(matrix, (np.nan, g.sector[1]), grid, mask=mask, coeffs=g.coeffs)
    restricted.sector = estimate_sectoriality(restricted, g.sector[1])
    return restricted


@dataclass
class TrotterKatoResult:
    """Per-(n, probe) approximation errors for a generator family."""

    resolvent_errors: np.ndarray  # (n_family, n_probes)
    semigroup_sup: np.ndarray  # (n_family, n_probes), sup over t in [0, T]
    generator_sup: np.ndarray  # (n_family, n_probes), sup over t in [t_min, T]
    times: np.ndarray
    t_min: float

    def max_resolvent_error(self) -> np.ndarray:
        return self.resolvent_errors.max(axis=1)

    def max_semigroup_error(self) -> np.ndarray:
        return self.semigroup_sup.max(axis=1)


def trotter_kato_check(
    family: list,
    limit: SectorialGenerator,
    lam: complex,
    probes: list,
    T: float = 1.0,
    t_min: float | None = None,
    time_points: int = 16,
) -> TrotterKatoResult:
    """Resolvent and locally-uniform semigroup errors of a generator family."""
    for member in family:
        if member.grid != limit.grid:
            raise GridMismatchError("family and limit generators must share the spatial grid")
    w_shared = max([limit.sector[1]] + [member.sector[1] for member in family])
    if complex(lam).real <= w_shared:
        raise ValidationError(f"need Re lambda > shared w = {w_shared:.6g}, got {lam}")
    if t_min is None:
        t_min = T / 16.0
    if not 0 < t_min <= T:
        raise ValidationError(f"need 0 < t_min <= T, got t_min={t_min}, T={T}")
    probes = [np.asarray(p, dtype=float) for p in probes]
    grid = limit.grid
    times_s = np.linspace(0.0, T, time_points)
    times_a = np.linspace(t_min, T, time_points)
    ev_limit = SemigroupEvaluator(limit)
    res_limit = np.stack([resolvent(limit, lam, x) for x in probes])
    sg_limit = {t: np.stack([ev_limit.apply(t, x) for x in probes]) for t in times_s}
    gen_limit = {t: np.stack([limit.apply(ev_limit.apply(t, x)) for x in probes]) for t in times_a}

    n_fam, n_probe = len(family), len(probes)
    res_err = np.zeros((n_fam, n_probe))
    sg_err = np.zeros((n_fam, n_probe))
    gen_err = np.zeros((n_fam, n_probe))
    for i, member in enumerate(family):
        ev = SemigroupEvaluator(member)
        res_member = np.stack([resolvent(member, lam, x) for x in probes])
        res_err[i] = grid.lr_norm(np.abs(res_member - res_limit))
        for t in times_s:
            vals = np.stack([ev.apply(t, x) for x in probes])
            sg_err[i] = np.maximum(sg_err[i], grid.lr_norm(vals - sg_limit[t]))
        for t in times_a:
            vals = np.stack([member.apply(ev.apply(t, x)) for x in probes])
            gen_err[i] = np.maximum(gen_err[i], grid.lr_norm(vals - gen_limit[t]))
    return TrotterKatoResult(res_err, sg_err, gen_err, times_s, t_min)
