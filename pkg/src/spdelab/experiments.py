"""Convergence studies for approximating sequences of problem data.

A study fixes a base problem (generator, drift and noise nonlinearities,
initial datum) and a mode describing how instance n perturbs it:

  coefficients      a_n, b_n, f_n, g_{k,n}, xi_n from expression templates in n
  yosida            the generator is replaced by its bounded approximant
  noise_projection  the noise map is composed with the channel projection P_n
  domain_mosco      the generator is restricted to a sub-interval, the datum
                    zero-extended

Base and instance are solved with the same Brownian and datum streams, so the
pathwise difference is a low-variance estimator of the solution distance.
Estimates are aggregated to (E ||.||^q)^(1/q) per n, fitted on log-log axes,
and a trend verdict is attached per metric.  Everything downstream of
(config, seed) is deterministic: reductions run in fixed stream order.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EllipticityError,
    HypothesisViolation,
    SolverBlowupError,
    ValidationError,
)
from .expressions import Expression
from .grids import SpatialGrid, TimeGrid
from .nonlinearity import InitialDatum, NonlinearityF, NonlinearityG
from .norms import NormSpec, ensemble_norm, holder_seminorm, v_alpha_seminorm
from .operators import (
    CoefficientField,
    SectorialGenerator,
    SemigroupEvaluator,
    assemble_divergence_form,
    estimate_sectoriality,
    resolvent,
    restrict_to_subdomain,
    yosida,
)
from .solver import PathProcess, solve_ensemble

VERDICTS = (
    "monotone_decreasing",
    "decreasing_with_noise",
    "non_decreasing",
    "converged_below_noise_floor",
)
PASSING_VERDICTS = ("monotone_decreasing", "decreasing_with_noise", "converged_below_noise_floor")


class StudyError(RuntimeError):
    """A study could not produce a trustworthy report."""


@dataclass(frozen=True)
class SharedBounds:
    """Uniform constants every member of an approximating family must respect."""

    kappa: float
    c_bound: float
    lip_f: float
    growth_f: float
    lip_g: float
    growth_g: float


@dataclass
class BaseProblem:
    sgrid: SpatialGrid
    tgrid: TimeGrid
    K: int
    coeffs: CoefficientField
    F: NonlinearityF
    G: NonlinearityG
    xi: InitialDatum
    bounds: SharedBounds
    generator: SectorialGenerator = None
    evaluator: SemigroupEvaluator = None

    def __post_init__(self):
        if self.generator is None:
            self.generator = assemble_divergence_form(self.sgrid, self.coeffs)
        if self.evaluator is None:
            self.evaluator = SemigroupEvaluator(self.generator)


@dataclass
class ProblemInstance:
    n: int | None  # None marks the limit problem
    generator: SectorialGenerator
    evaluator: SemigroupEvaluator
    F: NonlinearityF
    G: NonlinearityG
    xi: InitialDatum
    coeffs: CoefficientField | None = None
    digests: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ApproximationMode:
    """Which data the schedule approximates, plus the templates doing it."""

    variant: str
    schedule: tuple
    templates: dict = field(default_factory=dict)
    direction: str = "increasing"  # domain_mosco only

    def __post_init__(self):
        if self.variant not in ("coefficients", "yosida", "noise_projection", "domain_mosco"):
            raise ValidationError(f"unknown approximation variant {self.variant!r}")
        schedule = tuple(int(n) for n in self.schedule)
        if len(schedule) < 1 or any(b <= a for a, b in zip(schedule, schedule[1:])):
            raise ValidationError(f"schedule must be strictly increasing, got {schedule}")
        object.__setattr__(self, "schedule", schedule)
        if self.direction not in ("increasing", "decreasing"):
            raise ValidationError(f"mosco direction must be increasing or decreasing, got {self.direction}")


def _digest(*parts) -> str:
    sha = hashlib.sha256()
    for part in parts:
        if isinstance(part, np.ndarray):
            sha.update(np.ascontiguousarray(part).tobytes())
        else:
            sha.update(repr(part).encode())
    return sha.hexdigest()[:16]


def _instance_digests(gen: SectorialGenerator, F, G, xi, seed_probe: int = 1) -> dict:
    return {
        "A": _digest(gen.matrix, gen.mask if gen.mask is not None else "none"),
        "F": _digest(F.source, F.lip, F.growth),
        "G": _digest(G.sources, G.lip, G.growth),
        "xi": _digest(xi.sample(seed_probe, 0)),
    }


def _expr_coefficient(expr: Expression, **fixed):
    bound = expr.bind(**fixed) if fixed else expr
    return lambda x, _e=bound: _e(x=np.asarray(x, dtype=float))


def _expr_scalar_fn(expr: Expression, **fixed):
    bound = expr.bind(**fixed) if fixed else expr
    return lambda u, _e=bound: _e(u=np.asarray(u, dtype=float))


def instance_from_templates(base: BaseProblem, mode: ApproximationMode, n: int) -> ProblemInstance:
    """Materialize instance n of the approximating sequence."""
    t = mode.templates
    bounds = base.bounds
    if mode.variant == "coefficients":
        coeffs = CoefficientField(
            a=_expr_coefficient(t["a"], n=n),
            b=_expr_coefficient(t["b"], n=n),
            kappa=bounds.kappa,
            c_bound=bounds.c_bound,
            source=(t["a"].source, t["b"].source, n),
        )
        gen = assemble_divergence_form(base.sgrid, coeffs)
        F = NonlinearityF(
            fn=_expr_scalar_fn(t["f"], n=n), lip=bounds.lip_f, growth=bounds.growth_f,
            source=f"{t['f'].source} @ n={n}",
        )
        G = NonlinearityG(
            channels=tuple(_expr_scalar_fn(e, n=n) for e in t["g"]),
            lip=bounds.lip_g, growth=bounds.growth_g,
            sources=tuple(f"{e.source} @ n={n}" for e in t["g"]),
        )
        xi_expr = t["xi"].bind(n=n)
        vector = np.broadcast_to(
            np.asarray(xi_expr(x=base.sgrid.nodes), dtype=float), (base.sgrid.m,)
        )
        xi = InitialDatum.from_vector(vector)
        _audit_or_raise(F, G)
        return ProblemInstance(n, gen, SemigroupEvaluator(gen), F, G, xi, coeffs,
                               _instance_digests(gen, F, G, xi))
    if mode.variant == "yosida":
        gen = yosida(base.generator, n)
        return ProblemInstance(n, gen, SemigroupEvaluator(gen), base.F, base.G, base.xi,
                               base.coeffs, _instance_digests(gen, base.F, base.G, base.xi))
    if mode.variant == "noise_projection":
        if not 1 <= n <= base.K:
            raise HypothesisViolation("(G1)", f"projection rank n={n} outside 1..K={base.K}")
        zero = lambda u: np.zeros_like(np.asarray(u, dtype=float))
        channels = tuple(
            base.G.channels[k] if k < n else zero for k in range(base.K)
        )
        sources = tuple(
            (base.G.sources[k] if k < len(base.G.sources) else "?") if k < n else "0"
            for k in range(base.K)
        )
        G = NonlinearityG(channels=channels, lip=base.G.lip, growth=base.G.growth, sources=sources)
        return ProblemInstance(n, base.generator, base.evaluator, base.F, G, base.xi,
                               base.coeffs, _instance_digests(base.generator, base.F, G, base.xi))
    # domain_mosco
    lo = float(t["sub_lo"].bind(n=n)())
    hi = float(t["sub_hi"].bind(n=n)())
    gen = restrict_to_subdomain(base.generator, lo, hi)
    mask = gen.mask.copy()
    base_xi = base.xi

    def masked_sampler(seed, stream, _xi=base_xi, _mask=mask):
        return _xi.sample(seed, stream) * _mask

    xi = InitialDatum(sampler=masked_sampler, deterministic=base_xi.deterministic)
    return ProblemInstance(n, gen, SemigroupEvaluator(gen), base.F, base.G, xi,
                           base.coeffs, _instance_digests(gen, base.F, base.G, xi))


def _audit_or_raise(F: NonlinearityF, G: NonlinearityG) -> None:
    audit_f = F.audit()
    if not audit_f.passed:
        raise HypothesisViolation(
            "(iii)",
            f"f violates the shared Lipschitz/growth bounds at u = {audit_f.witness:.4g} "
            f"(slope ratio {audit_f.max_slope:.3g}, growth ratio {audit_f.max_growth_ratio:.3g})",
        )
    for k, audit_g in enumerate(G.audit()):
        if not audit_g.passed:
            raise HypothesisViolation(
                "(iii)",
                f"g_{k + 1} violates the shared Lipschitz/growth bounds at u = {audit_g.witness:.4g}",
            )


def build_sequence(mode: ApproximationMode, base: BaseProblem) -> tuple[ProblemInstance, list]:
    """The limit instance and the approximating instances, bounds enforced.

    Raises HypothesisViolation (or the assembler's ellipticity/bound errors)
    when any member breaks the shared constants.
    """
    _audit_or_raise(base.F, base.G)
    limit = ProblemInstance(None, base.generator, base.evaluator, base.F, base.G, base.xi,
                            base.coeffs, _instance_digests(base.generator, base.F, base.G, base.xi))
    instances = [instance_from_templates(base, mode, n) for n in mode.schedule]
    if mode.variant == "domain_mosco":
        masks = [inst.generator.mask for inst in instances]
        for a, b in zip(masks, masks[1:]):
            nested = np.all(a <= b) if mode.direction == "increasing" else np.all(b <= a)
            if not nested:
                raise HypothesisViolation(
                    "(A2')", f"domains are not nested in the {mode.direction} direction"
                )
    return limit, instances


@dataclass(frozen=True)
class HypothesisCheck:
    status: str  # pass | fail | skipped
    witness: str


@dataclass
class AuditRecord:
    checks: dict

    @property
    def failed(self) -> list:
        return [name for name, check in self.checks.items() if check.status == "fail"]

    @property
    def passed(self) -> bool:
        return not self.failed

    def lines(self) -> list:
        return [
            f"{'PASS' if c.status == 'pass' else c.status.upper():7s} {name}: {c.witness}"
            for name, c in self.checks.items()
        ]


def _trend_ok(errors) -> bool:
    errors = list(errors)
    tiny = 1e-10 * max(max(errors), 1.0)
    return errors[-1] <= max(errors[0], tiny) and (errors[-1] <= errors[0] + 1e-12 or errors[-1] <= tiny)


def hypothesis_audit(mode: ApproximationMode, base: BaseProblem) -> AuditRecord:
    """Pass/fail per hypothesis with witnesses; reports, never raises."""
    checks: dict[str, HypothesisCheck] = {}

    try:
        limit, instances = build_sequence(mode, base)
    except (HypothesisViolation, EllipticityError, ValidationError) as exc:
        name = getattr(exc, "hypothesis", None)
        if name is None:
            text = str(exc)
            name = "(i)" if "(i)" in text and "(ii)" not in text else ("(ii)" if "(ii)" in text else "(build)")
        checks[name] = HypothesisCheck("fail", str(exc))
        for other in ("(A1)", "(A2)", "(F1)", "(F2)", "(G1)", "(G2)"):
            checks.setdefault(other, HypothesisCheck("skipped", "blocked by failed construction"))
        return AuditRecord(checks)

    if mode.variant == "coefficients":
        checks["(i)"] = HypothesisCheck("pass", f"a_n >= kappa = {base.bounds.kappa:.4g} at every flux point")
        checks["(ii)"] = HypothesisCheck("pass", f"|a_n|, |b_n| <= C = {base.bounds.c_bound:.4g}")

    # (A1): every member certifies at the shared shift without inflating M
    w_shared = limit.generator.sector[1]
    m_base = estimate_sectoriality(limit.generator, w_shared)[0]
    m_values = []
    a1_ok = True
    witness_a1 = f"M_base = {m_base:.4g}"
    for inst in instances:
        try:
            m_n = estimate_sectoriality(inst.generator, w_shared)[0]
        except Exception as exc:  # divergence at the shared shift
            a1_ok = False
            witness_a1 = f"n = {inst.n}: {exc}"
            break
        m_values.append(m_n)
        if m_n > max(2.0 * m_base, m_base + 1.0):
            a1_ok = False
            witness_a1 = f"n = {inst.n}: M_n = {m_n:.4g} inflates past M_base = {m_base:.4g}"
            break
    if a1_ok:
        witness_a1 = (
            f"shared (M, w) = ({max([m_base] + m_values):.4g}, {w_shared:.4g}) "
            f"certified for the whole family"
        )
    checks["(A1)"] = HypothesisCheck("pass" if a1_ok else "fail", witness_a1)

    # (A2): strong resolvent convergence on probe vectors
    lam = w_shared + 1.0
    rng = np.random.default_rng(12)
    probes = [np.sin(np.pi * base.sgrid.nodes), rng.normal(size=base.sgrid.m)]
    res_limit = np.stack([resolvent(limit.generator, lam, x) for x in probes])
    errors = []
    for inst in instances:
        res_n = np.stack([resolvent(inst.generator, lam, x) for x in probes])
        errors.append(float(np.max(base.sgrid.lr_norm(np.abs(res_n - res_limit)))))
    a2_ok = _trend_ok(errors)
    checks["(A2)"] = HypothesisCheck(
        "pass" if a2_ok else "fail",
        "resolvent errors per n: " + ", ".join(f"{e:.3g}" for e in errors),
    )

    # (F1)/(G1): shared Lipschitz/growth constants hold on the probe lattice
    f_ok = base.F.audit().passed and all(inst.F.audit().passed for inst in instances)
    checks["(F1)"] = HypothesisCheck(
        "pass" if f_ok else "fail",
        f"lattice audit against (L_F, C_F) = ({base.bounds.lip_f:.4g}, {base.bounds.growth_f:.4g})",
    )
    g_ok = all(a.passed for a in base.G.audit()) and all(
        a.passed for inst in instances for a in inst.G.audit()
    )
    checks["(G1)"] = HypothesisCheck(
        "pass" if g_ok else "fail",
        f"lattice audit against (L_G, C_G) = ({base.bounds.lip_g:.4g}, {base.bounds.growth_g:.4g})",
    )
    if mode.variant == "coefficients":
        checks["(iii)"] = HypothesisCheck("pass" if f_ok and g_ok else "fail",
                                          "Lipschitz bounds for f_n and g_{k,n}")

    # (F2)/(G2): pointwise convergence spot checks on 64 probe points
    u_probes = np.linspace(-4.0, 4.0, 64)
    f_errors = [float(np.max(np.abs(inst.F(u_probes) - base.F(u_probes)))) for inst in instances]
    checks["(F2)"] = HypothesisCheck(
        "pass" if _trend_ok(f_errors) else "fail",
        "spot-check errors per n: " + ", ".join(f"{e:.3g}" for e in f_errors),
    )
    g_errors = [
        float(np.max(np.abs(inst.G(u_probes) - base.G(u_probes)))) for inst in instances
    ]
    checks["(G2)"] = HypothesisCheck(
        "pass" if _trend_ok(g_errors) else "fail",
        "spot-check errors per n: " + ", ".join(f"{e:.3g}" for e in g_errors),
    )

    if mode.variant == "coefficients":
        x_probes = np.linspace(base.sgrid.x_lo, base.sgrid.x_hi, 66)[1:-1]
        coeff_errors = []
        for inst in instances:
            da = np.max(np.abs(np.asarray(inst.coeffs.a(x_probes)) - np.asarray(base.coeffs.a(x_probes))))
            db = np.max(np.abs(np.asarray(inst.coeffs.b(x_probes)) - np.asarray(base.coeffs.b(x_probes))))
            coeff_errors.append(float(max(da, db)))
        checks["(iv)"] = HypothesisCheck(
            "pass" if _trend_ok(coeff_errors) else "fail",
            "coefficient spot-check errors per n: " + ", ".join(f"{e:.3g}" for e in coeff_errors),
        )
        xi_errors = [
            float(base.sgrid.lr_norm(inst.xi.sample(1, 0) - base.xi.sample(1, 0)))
            for inst in instances
        ]
        checks["(v)"] = HypothesisCheck(
            "pass" if _trend_ok(f_errors) and _trend_ok(g_errors) and _trend_ok(xi_errors) else "fail",
            "datum errors per n: " + ", ".join(f"{e:.3g}" for e in xi_errors),
        )
    return AuditRecord(checks)


@dataclass(frozen=True)
class RateFit:
    slope: float
    r_squared: float
    verdict: str


def fit_rate(rows) -> RateFit:
    """Least-squares log-log trend with a noise-floor-aware verdict.

    rows: iterable of (n, estimate, std_error), ordered by n.  Rows whose
    estimate sits below 10 standard errors (or at exact zero) count as noise
    floor: they are excluded from the slope fit but support the best verdict
    when the tail of the schedule reaches them.
    """
    rows = [(int(n), float(e), float(se)) for n, e, se in rows]
    if len(rows) < 3:
        raise ValidationError(f"rate fitting needs at least 3 rows, got {len(rows)}")
    estimates = np.array([e for _, e, _ in rows])
    errors = np.array([se for _, _, se in rows])
    floor = (estimates == 0.0) | (estimates < 10.0 * errors)
    pooled = float(np.sqrt(np.mean(errors**2)))
    if np.all(floor):
        return RateFit(float("nan"), float("nan"), "converged_below_noise_floor")
    alive = ~floor
    slope, r_squared = float("nan"), float("nan")
    if alive.sum() >= 2:
        logs_n = np.log([n for (n, _, _), keep in zip(rows, alive) if keep])
        logs_e = np.log(estimates[alive])
        coeffs = np.polyfit(logs_n, logs_e, 1)
        slope = float(coeffs[0])
        fitted = np.polyval(coeffs, logs_n)
        ss_res = float(np.sum((logs_e - fitted) ** 2))
        ss_tot = float(np.sum((logs_e - logs_e.mean()) ** 2))
        r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    stepwise = bool(np.all(np.diff(estimates) <= 2.0 * pooled))
    net = estimates[-1] < estimates[0] and (estimates[0] - estimates[-1]) > 2.0 * pooled
    if stepwise and net:
        verdict = "monotone_decreasing"
    elif net:
        verdict = "decreasing_with_noise"
    else:
        verdict = "non_decreasing"
    return RateFit(slope, r_squared, verdict)


@dataclass(frozen=True)
class MetricRow:
    mode: str
    n: int
    metric: str
    lambda_or_alpha: float
    q: float
    estimate: float
    std_error: float
    samples: int


@dataclass
class ConvergenceReport:
    mode: str
    rows: list
    fits: dict
    config_digest: str
    seed: int
    audit: AuditRecord | None = None

    @property
    def verdicts(self) -> dict:
        return {metric: fit.verdict for metric, fit in self.fits.items()}

    def all_passing(self) -> bool:
        return all(v in PASSING_VERDICTS for v in self.verdicts.values())

    def to_csv_text(self) -> str:
        lines = ["mode,n,metric,lambda_or_alpha,q,estimate,std_error,samples"]
        for row in self.rows:
            lines.append(
                f"{row.mode},{row.n},{row.metric},{float(row.lambda_or_alpha)!r},"
                f"{float(row.q)!r},{float(row.estimate)!r},{float(row.std_error)!r},{row.samples}"
            )
        return "\n".join(lines) + "\n"

    def to_json_dict(self) -> dict:
        return {
            "mode": self.mode,
            "config_digest": self.config_digest,
            "seed": self.seed,
            "verdicts": self.verdicts,
            "slopes": {m: fit.slope for m, fit in self.fits.items()},
            "r_squared": {m: fit.r_squared for m, fit in self.fits.items()},
            "rows": [
                {
                    "n": row.n,
                    "metric": row.metric,
                    "lambda_or_alpha": row.lambda_or_alpha,
                    "q": row.q,
                    "estimate": row.estimate,
                    "std_error": row.std_error,
                    "samples": row.samples,
                }
                for row in self.rows
            ],
            "audit": None
            if self.audit is None
            else {name: [c.status, c.witness] for name, c in self.audit.checks.items()},
        }

    def to_json_text(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n"


def _orbit_ensemble(ev: SemigroupEvaluator, xi: InitialDatum, tgrid: TimeGrid,
                    seed: int, streams: range) -> np.ndarray:
    states = np.stack([xi.sample(seed, s) for s in streams])
    if ev.generator.mask is not None:
        states = states * ev.generator.mask
    prop_t = ev.propagator(tgrid.dt).T
    orbit = np.empty((states.shape[0], tgrid.steps + 1, states.shape[1]))
    orbit[:, 0, :] = states
    for step in range(tgrid.steps):
        states = states @ prop_t
        orbit[:, step + 1, :] = states
    return orbit


def run_convergence_study(
    mode: ApproximationMode,
    base: BaseProblem,
    ensemble: int,
    norm_specs: list,
    seed: int,
    strict: bool = True,
    threads: int = 1,
    config_digest: str = "",
) -> ConvergenceReport:
    """Coupled-ensemble estimates of solution distances along the schedule."""
    if ensemble < 2:
        raise ValidationError(f"ensemble size must be at least 2, got {ensemble}")
    for spec in norm_specs:
        spec.validate(base.sgrid.r)

    audit = hypothesis_audit(mode, base)
    if not audit.passed:
        raise StudyError(
            "hypothesis audit failed: " + ", ".join(audit.failed)
            + "; run the audit for witnesses"
        )
    limit, instances = build_sequence(mode, base)

    tgrid, grid, K = base.tgrid, base.sgrid, base.K
    streams = range(ensemble)
    need_comp = any(s.kind == "holder_C_lambda" for s in norm_specs)
    try:
        base_values = solve_ensemble(limit.generator, limit.F, limit.G, limit.xi,
                                     tgrid, K, seed, streams, ev=limit.evaluator)
    except SolverBlowupError as exc:
        raise StudyError(f"limit solve aborted: {exc}") from exc
    base_comp = None
    if need_comp:
        base_comp = base_values - _orbit_ensemble(limit.evaluator, limit.xi, tgrid, seed, streams)

    rows: list[MetricRow] = []
    samples_by_metric: dict[NormSpec, dict] = {spec: {} for spec in norm_specs}

    def holder_chunk(task):
        lam, comp_diff, start = task
        out = np.empty(comp_diff.shape[0])
        for i in range(comp_diff.shape[0]):
            proc = PathProcess(tgrid, grid, comp_diff[i])
            out[i] = holder_seminorm(proc, lam)
        return start, out

    for inst in instances:
        try:
            inst_values = solve_ensemble(inst.generator, inst.F, inst.G, inst.xi,
                                         tgrid, K, seed, streams, ev=inst.evaluator)
        except SolverBlowupError as exc:
            raise StudyError(f"instance n = {inst.n} aborted: {exc}") from exc
        diff = inst_values - base_values
        comp_diff = None
        if need_comp:
            inst_comp = inst_values - _orbit_ensemble(inst.evaluator, inst.xi, tgrid, seed, streams)
            comp_diff = inst_comp - base_comp
        for spec in norm_specs:
            if spec.kind == "sup_C":
                values = np.max(grid.lr_norm(diff), axis=1)
            elif spec.kind == "holder_C_lambda":
                values = np.empty(ensemble)
                chunk = max(1, ensemble // max(threads, 1))
                tasks = [
                    (spec.lam, comp_diff[start : start + chunk], start)
                    for start in range(0, ensemble, chunk)
                ]
                if threads > 1:
                    with ThreadPoolExecutor(max_workers=threads) as pool:
                        results = list(pool.map(holder_chunk, tasks))
                else:
                    results = [holder_chunk(t) for t in tasks]
                for start, out in results:
                    values[start : start + out.shape[0]] = out
            else:  # v_alpha_p
                values = np.empty(ensemble)
                for i in range(ensemble):
                    proc = PathProcess(tgrid, grid, diff[i])
                    values[i] = v_alpha_seminorm(proc, spec.alpha, spec.p)
            samples_by_metric[spec][inst.n] = values

    metric_labels = {
        "sup_C": ("sup_C", lambda s: 0.0),
        "holder_C_lambda": ("compensated_holder", lambda s: s.lam),
        "v_alpha_p": ("v_alpha", lambda s: s.alpha),
    }
    fits: dict[str, RateFit] = {}
    for spec in norm_specs:
        label, param = metric_labels[spec.kind]
        fit_rows = []
        for inst in instances:
            values = samples_by_metric[spec][inst.n]
            est = ensemble_norm(values, q=spec.q)
            if strict and est.rejected:
                raise StudyError(
                    f"{est.rejected} non-finite samples for metric {label} at n = {inst.n}"
                )
            rows.append(
                MetricRow(mode.variant, inst.n, label, param(spec), spec.q,
                          est.value, est.std_error, est.samples)
            )
            fit_rows.append((inst.n, est.value, est.std_error))
        fits[label] = fit_rate(fit_rows)
    return ConvergenceReport(mode.variant, rows, fits, config_digest, seed, audit)
