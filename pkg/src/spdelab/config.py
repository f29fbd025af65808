"""Declarative experiment configuration.

One TOML file describes a study: the [problem] block fixes the limit problem,
[approximation] the mode and its templates, [norms] the metrics, [run] the
ensemble.  Parsing is strict: unknown keys, missing fields and exponent
windows are all reported with the offending field named, before anything is
solved.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError, ValidationError
from .expressions import Expression, ExpressionError
from .experiments import ApproximationMode, BaseProblem, SharedBounds
from .grids import TimeGrid, build_grid
from .nonlinearity import InitialDatum, NonlinearityF, NonlinearityG
from .norms import NormSpec
from .operators import CoefficientField

_PROBLEM_KEYS = {
    "x_lo", "x_hi", "m", "r", "a", "b", "f", "g", "xi", "T", "steps", "K",
    "kappa", "c_bound", "lip_f", "growth_f", "lip_g", "growth_g",
}
_APPROX_KEYS = {"mode", "schedule", "a_n", "b_n", "f_n", "g_n", "xi_n",
                "sub_lo", "sub_hi", "direction"}
_NORM_KEYS = {"metrics", "lambda", "alpha", "p", "q"}
_RUN_KEYS = {"ensemble", "seed", "strict", "threads"}
_METRIC_NAMES = {"sup_C": "sup_C", "compensated_holder": "holder_C_lambda", "v_alpha": "v_alpha_p"}


@dataclass
class StudyConfig:
    base: BaseProblem
    mode: ApproximationMode
    norm_specs: list
    ensemble: int
    seed: int
    strict: bool
    threads: int
    digest: str
    raw: dict


def config_digest(raw: dict) -> str:
    """Stable hash of the canonicalized configuration."""
    return hashlib.sha256(json.dumps(raw, sort_keys=True).encode()).hexdigest()[:16]


def load_raw(path) -> dict:
    try:
        with open(path, "rb") as handle:
            return tomllib.load(handle)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid TOML: {exc}") from exc


def _section(raw, name, allowed) -> dict:
    section = raw.get(name)
    if not isinstance(section, dict):
        raise ConfigError(f"missing [{name}] section")
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in [{name}]: {sorted(unknown)}")
    return section


def _require(section, block, key):
    if key not in section:
        raise ConfigError(f"[{block}] is missing required key {key!r}")
    return section[key]


def _compile(block, key, source, variables) -> Expression:
    if not isinstance(source, str):
        raise ConfigError(f"[{block}].{key} must be an expression string, got {type(source).__name__}")
    try:
        return Expression(source, variables)
    except ExpressionError as exc:
        raise ConfigError(f"[{block}].{key}: {exc}") from exc


def parse_study(raw: dict, seed_override=None, strict_override=None, threads_override=None) -> StudyConfig:
    problem = _section(raw, "problem", _PROBLEM_KEYS)
    approx = _section(raw, "approximation", _APPROX_KEYS)
    norms = _section(raw, "norms", _NORM_KEYS)
    run = _section(raw, "run", _RUN_KEYS)

    try:
        sgrid = build_grid(
            float(_require(problem, "problem", "x_lo")),
            float(_require(problem, "problem", "x_hi")),
            int(_require(problem, "problem", "m")),
            float(_require(problem, "problem", "r")),
        )
        tgrid = TimeGrid(T=float(_require(problem, "problem", "T")),
                         steps=int(_require(problem, "problem", "steps")))
    except ValidationError as exc:
        raise ConfigError(f"[problem]: {exc}") from exc

    g_sources = _require(problem, "problem", "g")
    if not isinstance(g_sources, list) or not g_sources:
        raise ConfigError("[problem].g must be a nonempty list of channel expressions")
    K = int(problem.get("K", len(g_sources)))
    if K != len(g_sources):
        raise ConfigError(f"[problem].K = {K} does not match the {len(g_sources)} entries of g")

    bounds = SharedBounds(
        kappa=float(_require(problem, "problem", "kappa")),
        c_bound=float(_require(problem, "problem", "c_bound")),
        lip_f=float(_require(problem, "problem", "lip_f")),
        growth_f=float(_require(problem, "problem", "growth_f")),
        lip_g=float(_require(problem, "problem", "lip_g")),
        growth_g=float(_require(problem, "problem", "growth_g")),
    )

    a_expr = _compile("problem", "a", _require(problem, "problem", "a"), ("x",))
    b_expr = _compile("problem", "b", _require(problem, "problem", "b"), ("x",))
    coeffs = CoefficientField(
        a=lambda x, _e=a_expr: _e(x=np.asarray(x, dtype=float)),
        b=lambda x, _e=b_expr: _e(x=np.asarray(x, dtype=float)),
        kappa=bounds.kappa,
        c_bound=bounds.c_bound,
        source=(a_expr.source, b_expr.source),
    )
    f_expr = _compile("problem", "f", _require(problem, "problem", "f"), ("u",))
    F = NonlinearityF(
        fn=lambda u, _e=f_expr: _e(u=np.asarray(u, dtype=float)),
        lip=bounds.lip_f, growth=bounds.growth_f, source=f_expr.source,
    )
    g_exprs = [_compile("problem", f"g[{k}]", src, ("u",)) for k, src in enumerate(g_sources)]
    G = NonlinearityG(
        channels=tuple((lambda u, _e=e: _e(u=np.asarray(u, dtype=float))) for e in g_exprs),
        lip=bounds.lip_g, growth=bounds.growth_g,
        sources=tuple(e.source for e in g_exprs),
    )
    xi = _parse_xi(problem, sgrid)

    try:
        base = BaseProblem(sgrid, tgrid, K, coeffs, F, G, xi, bounds)
    except ValidationError as exc:
        raise ConfigError(f"[problem]: {exc}") from exc

    mode = _parse_mode(approx, problem)
    norm_specs = _parse_norms(norms, sgrid.r)

    ensemble = int(_require(run, "run", "ensemble"))
    seed = int(run.get("seed", 0)) if seed_override is None else int(seed_override)
    strict = bool(run.get("strict", True)) if strict_override is None else bool(strict_override)
    threads = int(run.get("threads", 1)) if threads_override is None else int(threads_override)
    if ensemble < 2:
        raise ConfigError(f"[run].ensemble must be at least 2, got {ensemble}")
    if threads < 1:
        raise ConfigError(f"[run].threads must be at least 1, got {threads}")
    return StudyConfig(base, mode, norm_specs, ensemble, seed, strict, threads,
                       config_digest(raw), raw)


def _parse_xi(problem, sgrid) -> InitialDatum:
    spec = _require(problem, "problem", "xi")
    if isinstance(spec, str):
        expr = _compile("problem", "xi", spec, ("x",))
        vector = np.broadcast_to(np.asarray(expr(x=sgrid.nodes), dtype=float), (sgrid.m,))
        return InitialDatum.from_vector(vector)
    if isinstance(spec, dict):
        if spec.get("kind") != "gaussian":
            raise ConfigError("[problem].xi tables must set kind = 'gaussian'")
        mean_expr = _compile("problem", "xi.mean", spec.get("mean", "0"), ("x",))
        mean = np.broadcast_to(np.asarray(mean_expr(x=sgrid.nodes), dtype=float), (sgrid.m,))
        return InitialDatum.gaussian_nodes(mean, float(spec.get("std", 0.0)))
    raise ConfigError("[problem].xi must be an expression string or a gaussian table")


def _parse_mode(approx, problem) -> ApproximationMode:
    variant = _require(approx, "approximation", "mode")
    schedule = _require(approx, "approximation", "schedule")
    if not isinstance(schedule, list) or len(schedule) < 3:
        raise ConfigError("[approximation].schedule must list at least 3 indices (rate fits need 3 rows)")
    templates: dict = {}
    direction = approx.get("direction", "increasing")
    if variant == "coefficients":
        templates["a"] = _compile("approximation", "a_n", approx.get("a_n", problem["a"]), ("x", "n"))
        templates["b"] = _compile("approximation", "b_n", approx.get("b_n", problem["b"]), ("x", "n"))
        templates["f"] = _compile("approximation", "f_n", approx.get("f_n", problem["f"]), ("u", "n"))
        g_n = approx.get("g_n", problem["g"])
        if not isinstance(g_n, list) or len(g_n) != len(problem["g"]):
            raise ConfigError("[approximation].g_n must list one expression per channel of g")
        templates["g"] = [_compile("approximation", f"g_n[{k}]", src, ("u", "n")) for k, src in enumerate(g_n)]
        templates["xi"] = _compile("approximation", "xi_n", approx.get("xi_n", problem["xi"]), ("x", "n"))
    elif variant == "domain_mosco":
        templates["sub_lo"] = _compile("approximation", "sub_lo",
                                       _require(approx, "approximation", "sub_lo"), ("n",))
        templates["sub_hi"] = _compile("approximation", "sub_hi",
                                       _require(approx, "approximation", "sub_hi"), ("n",))
    elif variant not in ("yosida", "noise_projection"):
        raise ConfigError(
            f"[approximation].mode must be one of coefficients, yosida, noise_projection,"
            f" domain_mosco; got {variant!r}"
        )
    try:
        return ApproximationMode(variant, tuple(int(n) for n in schedule), templates, direction)
    except ValidationError as exc:
        raise ConfigError(f"[approximation]: {exc}") from exc


def _parse_norms(norms, r) -> list:
    metrics = _require(norms, "norms", "metrics")
    if not isinstance(metrics, list) or not metrics:
        raise ConfigError("[norms].metrics must be a nonempty list")
    specs = []
    for name in metrics:
        if name not in _METRIC_NAMES:
            raise ConfigError(f"unknown metric {name!r}; choose from {sorted(_METRIC_NAMES)}")
        spec = NormSpec(
            kind=_METRIC_NAMES[name],
            lam=float(norms.get("lambda", 0.25)),
            alpha=float(norms.get("alpha", 0.3)),
            p=float(norms.get("p", 8.0)),
            q=float(norms.get("q", 2.0)),
        )
        try:
            spec.validate(r)
        except ValidationError as exc:
            raise ConfigError(f"[norms] ({name}): {exc}") from exc
        specs.append(spec)
    return specs
