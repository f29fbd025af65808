import numpy as np
import pytest

from spdelab.errors import ValidationError
from spdelab.expressions import Expression
from spdelab.experiments import (
    ApproximationMode,
    BaseProblem,
    ConvergenceReport,
    SharedBounds,
    StudyError,
    build_sequence,
    fit_rate,
    hypothesis_audit,
    run_convergence_study,
)
from spdelab.grids import TimeGrid, build_grid
from spdelab.nonlinearity import InitialDatum, NonlinearityF, NonlinearityG
from spdelab.norms import NormSpec
from spdelab.operators import CoefficientField


def coeff_expr(src):
    return Expression(src, ("x", "n"))


def fn_expr(src):
    return Expression(src, ("u", "n"))


def small_base(m=12, steps=48, T=0.25, K=2):
    sgrid = build_grid(0.0, 1.0, m, 2.0)
    tgrid = TimeGrid(T=T, steps=steps)
    coeffs = CoefficientField(
        a=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        b=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        kappa=0.5,
        c_bound=2.0,
        source=("1", "0"),
    )
    F = NonlinearityF(fn=lambda u: u / (1.0 + np.abs(u)), lip=1.6, growth=1.6,
                      source="u/(1+abs(u))")
    G = NonlinearityG(
        channels=(lambda u: 0.2 * np.cos(u), lambda u: 0.1 * np.sin(u)),
        lip=0.5, growth=1.0, sources=("0.2*cos(u)", "0.1*sin(u)"),
    )
    xi = InitialDatum.from_vector(np.sin(np.pi * sgrid.nodes))
    bounds = SharedBounds(kappa=0.5, c_bound=2.0, lip_f=1.6, growth_f=1.6, lip_g=0.5, growth_g=1.0)
    return BaseProblem(sgrid, tgrid, K, coeffs, F, G, xi, bounds)


def theorem_templates():
    return {
        "a": coeff_expr("1 + sin(n * pi * x) / n"),
        "b": coeff_expr("x / n"),
        "f": fn_expr("(u / (1 + abs(u))) * (1 + 1 / n)"),
        "g": [fn_expr("0.2 * cos(u) + 1 / n"), fn_expr("0.1 * sin(u) + 1 / n")],
        "xi": coeff_expr("sin(pi * x) + sin(pi * x) / n"),
    }


def trivial_templates():
    return {
        "a": coeff_expr("1"),
        "b": coeff_expr("0"),
        "f": fn_expr("u / (1 + abs(u))"),
        "g": [fn_expr("0.2 * cos(u)"), fn_expr("0.1 * sin(u)")],
        "xi": coeff_expr("sin(pi * x)"),
    }


class TestBuildSequence:
    def test_coefficient_mode_materializes_templates(self):
        base = small_base()
        mode = ApproximationMode("coefficients", (2, 4, 8), theorem_templates())
        limit, instances = build_sequence(mode, base)
        assert limit.n is None and [i.n for i in instances] == [2, 4, 8]
        inst = instances[0]
        x = np.array([0.3])
        np.testing.assert_allclose(
            inst.coeffs.a(x), 1 + np.sin(2 * np.pi * 0.3) / 2, rtol=1e-12
        )
        assert inst.digests["A"] != limit.digests["A"]
        assert inst.digests["xi"] != limit.digests["xi"]

    def test_yosida_mode_touches_only_the_generator(self):
        base = small_base()
        mode = ApproximationMode("yosida", (10, 100, 1000))
        limit, instances = build_sequence(mode, base)
        for inst in instances:
            assert inst.digests["A"] != limit.digests["A"]
            for key in ("F", "G", "xi"):
                assert inst.digests[key] == limit.digests[key]

    def test_projection_mode_touches_only_the_noise_map(self):
        base = small_base()
        mode = ApproximationMode("noise_projection", (1, 2))
        limit, instances = build_sequence(mode, base)
        for inst in instances:
            for key in ("A", "F", "xi"):
                assert inst.digests[key] == limit.digests[key]
        assert instances[0].digests["G"] != limit.digests["G"]
        u = np.linspace(-1, 1, 5)
        assert np.all(instances[0].G(u)[..., 1] == 0.0)  # channel 2 projected away
        np.testing.assert_array_equal(instances[1].G(u), base.G(u))

    def test_mosco_mode_masks_nest(self):
        base = small_base(m=15)
        mode = ApproximationMode(
            "domain_mosco",
            (2, 4, 8),
            {"sub_lo": Expression("1/(2*n)", ("n",)), "sub_hi": Expression("1 - 1/(2*n)", ("n",))},
        )
        limit, instances = build_sequence(mode, base)
        masks = [inst.generator.mask for inst in instances]
        assert all(np.all(a <= b) for a, b in zip(masks, masks[1:]))
        assert masks[0].sum() < masks[-1].sum() <= base.sgrid.m
        sample = instances[0].xi.sample(1, 0)
        assert np.all(sample[masks[0] == 0.0] == 0.0)

    def test_schedule_must_increase(self):
        with pytest.raises(ValidationError, match="strictly increasing"):
            ApproximationMode("yosida", (8, 8))


class TestHypothesisAudit:
    def test_self_audit_passes_with_zero_errors(self):
        base = small_base()
        mode = ApproximationMode("coefficients", (2, 4, 8), trivial_templates())
        record = hypothesis_audit(mode, base)
        assert record.passed, record.lines()
        assert "0" in record.checks["(A2)"].witness

    def test_theorem_family_passes(self):
        base = small_base()
        mode = ApproximationMode("coefficients", (2, 4, 8, 16), theorem_templates())
        record = hypothesis_audit(mode, base)
        assert record.passed, record.lines()

    def test_constant_shift_spot_errors_are_one_over_n(self):
        base = small_base()
        templates = trivial_templates()
        templates["f"] = fn_expr("u / (1 + abs(u)) + 1 / n")
        mode = ApproximationMode("coefficients", (2, 4, 8), templates)
        _, instances = build_sequence(mode, base)
        u = np.linspace(-3, 3, 64)
        for inst in instances:
            gap = np.abs(inst.F(u) - base.F(u))
            np.testing.assert_allclose(gap, 1.0 / inst.n, rtol=1e-12)
        assert hypothesis_audit(mode, base).passed

    def test_kappa_breach_names_hypothesis_i(self):
        base = small_base()
        templates = trivial_templates()
        templates["a"] = coeff_expr("0.5 - x / (1 + 0 * n)")
        mode = ApproximationMode("coefficients", (2, 4, 8), templates)
        record = hypothesis_audit(mode, base)
        assert record.failed == ["(i)"]
        assert "kappa" in record.checks["(i)"].witness

    def test_non_lipschitz_f_names_hypothesis_iii(self):
        base = small_base()
        templates = trivial_templates()
        templates["f"] = fn_expr("u * u / (1 + 0 * n)")
        mode = ApproximationMode("coefficients", (2, 4, 8), templates)
        record = hypothesis_audit(mode, base)
        assert record.failed == ["(iii)"]
        assert "Lipschitz" in record.checks["(iii)"].witness


class TestFitRate:
    def test_exact_geometric_sequence(self):
        fit = fit_rate([(1, 1.0, 0.0), (2, 0.5, 0.0), (4, 0.25, 0.0), (8, 0.125, 0.0)])
        assert fit.slope == pytest.approx(-1.0, abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
        assert fit.verdict == "monotone_decreasing"

    def test_constant_above_noise(self):
        fit = fit_rate([(1, 1.0, 0.01), (2, 1.0, 0.01), (4, 1.0, 0.01)])
        assert fit.verdict == "non_decreasing"

    def test_noisy_slope_recovery(self):
        rng = np.random.default_rng(3)
        rows = []
        for n in (1, 2, 4, 8, 16, 32):
            noise = 1.0 + 0.01 * rng.normal()
            rows.append((n, noise / n, 0.01 / n))
        fit = fit_rate(rows)
        assert -1.15 <= fit.slope <= -0.85

    def test_all_rows_at_noise_floor(self):
        fit = fit_rate([(1, 1e-14, 1e-3), (2, 0.0, 1e-3), (4, 5e-15, 1e-3)])
        assert fit.verdict == "converged_below_noise_floor"
        assert np.isnan(fit.slope)

    def test_zero_tail_counts_as_convergence(self):
        fit = fit_rate([(1, 1.0, 1e-4), (2, 0.5, 1e-4), (4, 0.0, 0.0)])
        assert fit.verdict == "monotone_decreasing"

    def test_needs_three_rows(self):
        with pytest.raises(ValidationError):
            fit_rate([(1, 1.0, 0.0), (2, 0.5, 0.0)])


class TestRunStudy:
    def specs(self):
        return [
            NormSpec(kind="sup_C", p=8.0, q=2.0),
            NormSpec(kind="holder_C_lambda", lam=0.25, p=8.0, q=2.0),
        ]

    def test_trivial_sequence_is_exactly_zero(self):
        base = small_base()
        mode = ApproximationMode("coefficients", (2, 4, 8), trivial_templates())
        report = run_convergence_study(mode, base, ensemble=8, norm_specs=self.specs(),
                                       seed=101, strict=True)
        for row in report.rows:
            assert row.estimate == 0.0
        assert all(v == "converged_below_noise_floor" for v in report.verdicts.values())
        assert report.all_passing()

    def test_datum_shift_has_slope_minus_one(self):
        base = small_base()
        templates = trivial_templates()
        templates["xi"] = coeff_expr("sin(pi * x) + sin(pi * x) / n")
        mode = ApproximationMode("coefficients", (2, 4, 8, 16, 32), templates)
        report = run_convergence_study(
            mode, base, ensemble=64,
            norm_specs=[NormSpec(kind="sup_C", p=8.0, q=2.0)],
            seed=77, strict=True,
        )
        fit = report.fits["sup_C"]
        assert fit.verdict in ("monotone_decreasing", "decreasing_with_noise")
        assert -1.3 <= fit.slope <= -0.7

    def test_reports_are_deterministic(self):
        base = small_base()
        mode = ApproximationMode("yosida", (4, 16, 64))
        kwargs = dict(ensemble=16, norm_specs=self.specs(), seed=5, strict=True)
        first = run_convergence_study(mode, base, **kwargs)
        second = run_convergence_study(mode, base, **kwargs)
        assert first.to_csv_text() == second.to_csv_text()
        assert first.to_json_text() == second.to_json_text()

    def test_threads_do_not_change_results(self):
        base = small_base()
        mode = ApproximationMode("yosida", (4, 16, 64))
        serial = run_convergence_study(mode, base, ensemble=12, norm_specs=self.specs(),
                                       seed=5, strict=True, threads=1)
        threaded = run_convergence_study(mode, base, ensemble=12, norm_specs=self.specs(),
                                         seed=5, strict=True, threads=4)
        assert serial.to_csv_text() == threaded.to_csv_text()

    def test_yosida_study_converges(self):
        base = small_base()
        mode = ApproximationMode("yosida", (8, 32, 128, 512))
        report = run_convergence_study(mode, base, ensemble=32, norm_specs=self.specs(),
                                       seed=11, strict=True)
        assert report.all_passing(), report.verdicts

    def test_projection_study_hits_zero_at_full_rank(self):
        base = small_base(K=4)
        amplitudes = (0.2, 0.1, 0.05, 0.025)
        base.G = NonlinearityG(
            channels=tuple((lambda u, a=a: a * np.cos(u)) for a in amplitudes),
            lip=0.5, growth=1.0,
            sources=tuple(f"{a}*cos(u)" for a in amplitudes),
        )
        mode = ApproximationMode("noise_projection", (1, 2, 3, 4))
        report = run_convergence_study(
            mode, base, ensemble=16,
            norm_specs=[NormSpec(kind="sup_C", p=8.0, q=2.0)], seed=19, strict=True,
        )
        by_n = {row.n: row.estimate for row in report.rows}
        assert by_n[4] == 0.0
        assert by_n[1] > by_n[2] > by_n[3] > 0.0
        assert report.fits["sup_C"].verdict == "monotone_decreasing"

    def test_failed_audit_aborts_strict_study(self):
        base = small_base()
        templates = trivial_templates()
        templates["f"] = fn_expr("u * u / (1 + 0 * n)")
        mode = ApproximationMode("coefficients", (2, 4, 8), templates)
        with pytest.raises(StudyError, match="audit"):
            run_convergence_study(mode, base, ensemble=8, norm_specs=self.specs(),
                                  seed=1, strict=True)

    def test_csv_header_and_shape(self):
        base = small_base()
        mode = ApproximationMode("yosida", (4, 16, 64))
        report = run_convergence_study(mode, base, ensemble=8, norm_specs=self.specs(),
                                       seed=2, strict=True)
        lines = report.to_csv_text().strip().split("\n")
        assert lines[0] == "mode,n,metric,lambda_or_alpha,q,estimate,std_error,samples"
        assert len(lines) == 1 + 2 * 3  # two metrics, three schedule points
