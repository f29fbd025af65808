from pathlib import Path

import numpy as np
import pytest

from spdelab.config import config_digest, load_raw, parse_study
from spdelab.errors import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def minimal_raw(**overrides):
    raw = {
        "problem": {
            "x_lo": 0.0, "x_hi": 1.0, "m": 8, "r": 2.0,
            "a": "1", "b": "0",
            "f": "u / (1 + abs(u))",
            "g": ["0.2 * cos(u)"],
            "xi": "sin(pi * x)",
            "T": 0.25, "steps": 32,
            "kappa": 0.5, "c_bound": 2.0,
            "lip_f": 1.1, "growth_f": 1.1, "lip_g": 0.5, "growth_g": 1.0,
        },
        "approximation": {"mode": "yosida", "schedule": [4, 8, 16]},
        "norms": {"metrics": ["sup_C"], "p": 8.0, "q": 2.0},
        "run": {"ensemble": 4, "seed": 1},
    }
    for section, values in overrides.items():
        raw[section] = {**raw[section], **values}
    return raw


class TestParsing:
    def test_shipped_configs_parse(self):
        for name in ("theorem11", "yosida", "projection", "mosco", "trivial", "valpha_demo"):
            raw = load_raw(CONFIGS / f"{name}.toml")
            study = parse_study(raw)
            assert study.ensemble >= 2
            assert len(study.digest) == 16

    def test_channel_count_inferred_from_g(self):
        study = parse_study(minimal_raw())
        assert study.base.K == 1
        assert study.base.G.K == 1

    def test_digest_stable_under_key_order(self):
        a = minimal_raw()
        b = {k: a[k] for k in reversed(list(a))}
        assert config_digest(a) == config_digest(b)

    def test_seed_override(self):
        study = parse_study(minimal_raw(), seed_override=99)
        assert study.seed == 99

    def test_gaussian_datum_table(self):
        raw = minimal_raw(problem={"xi": {"kind": "gaussian", "mean": "sin(pi * x)", "std": 0.1}})
        study = parse_study(raw)
        assert not study.base.xi.deterministic
        s0 = study.base.xi.sample(1, 0)
        s1 = study.base.xi.sample(1, 1)
        assert s0.shape == (8,)
        assert not np.array_equal(s0, s1)


class TestValidation:
    def test_unknown_key_named(self):
        with pytest.raises(ConfigError, match="typo"):
            parse_study(minimal_raw(problem={"typo": 1}))

    def test_missing_section(self):
        raw = minimal_raw()
        del raw["norms"]
        with pytest.raises(ConfigError, match=r"\[norms\]"):
            parse_study(raw)

    def test_k_mismatch(self):
        with pytest.raises(ConfigError, match="does not match"):
            parse_study(minimal_raw(problem={"K": 3}))

    def test_short_schedule_rejected(self):
        with pytest.raises(ConfigError, match="at least 3"):
            parse_study(minimal_raw(approximation={"schedule": [4, 8]}))

    def test_unknown_metric(self):
        with pytest.raises(ConfigError, match="unknown metric"):
            parse_study(minimal_raw(norms={"metrics": ["what"]}))

    def test_lambda_window_cited(self):
        raw = minimal_raw(norms={"metrics": ["compensated_holder"], "lambda": 0.6})
        with pytest.raises(ConfigError, match="1/2 - 1/p"):
            parse_study(raw)

    def test_expression_error_cites_field(self):
        with pytest.raises(ConfigError, match=r"\[problem\].a"):
            parse_study(minimal_raw(problem={"a": "1 +"}))

    def test_mosco_requires_bounds(self):
        raw = minimal_raw(approximation={"mode": "domain_mosco", "schedule": [2, 4, 8]})
        with pytest.raises(ConfigError, match="sub_lo"):
            parse_study(raw)

    def test_bad_toml_reported(self, tmp_path):
        bad = tmp_path / "bad.toml"
        bad.write_text("[problem\nx_lo = 0")
        with pytest.raises(ConfigError, match="TOML"):
            load_raw(bad)
