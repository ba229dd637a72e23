"""
pressure-lab - 实验配置解析与构建单元测试
"""

from fractions import Fraction

import numpy as np
import pytest

from app.core.errors import ConfigError, UnsupportedGroup
from app.experiments.config import (
    build_family,
    build_functionals,
    build_representation,
    config_hash,
    load_config,
    parse_config,
    parse_exact,
    parse_word_pair,
    representation_hash,
)
from app.families.family import ConjugatedFamily, SymmetricPowerFamily, evaluate_family

SCHOTTKY_TEXT = """\
group:
  rank: 2
representations:
  - label: schottky
    generators:
      - [["3", "0"], ["0", "1/3"]]
      - [["5/3", "4/3"], ["4/3", "5/3"]]
  - label: tau3
    symmetric_power: {of: schottky, m: 3}
run:
  max_len: 8
  threads: 1
outputs:
  dir: out/a
"""


class TestParseExact:
    def test_rational_forms(self):
        assert parse_exact("3") == 3
        assert parse_exact("-5/4") == Fraction(-5, 4)
        assert parse_exact("0.75") == Fraction(3, 4)
        assert parse_exact(2) == 2

    def test_complex_pair(self):
        assert parse_exact(["1", "-1/2"]) == complex(1, -0.5)

    @pytest.mark.parametrize("value", ["abc", "1/0", True, ["1"], [["1", "2"], "3"]])
    def test_rejected(self, value):
        with pytest.raises(ValueError):
            parse_exact(value)


# ═══════════════════════════════════════════════════════════════════════════
# 解析与报错定位
# ═══════════════════════════════════════════════════════════════════════════


class TestParseConfig:
    @pytest.mark.parametrize(
        "name",
        [
            "schottky.yaml",
            "punctured_torus.yaml",
            "tau3.yaml",
            "multiplier_family.yaml",
            "schottky3.yaml",
            "complex_multiplier.yaml",
            "conjugation.yaml",
            "scaled_family.yaml",
        ],
    )
    def test_shipped_configs_load(self, config_dir, name):
        config = load_config(config_dir / name)
        assert config.group.rank == 2

    def test_defaults(self):
        config = parse_config("group:\n  rank: 2\n")
        assert config.run.max_len == 10
        assert config.outputs.dir == "out"

    def test_unknown_key_located(self):
        with pytest.raises(ConfigError) as exc:
            parse_config("run:\n  max_lenn: 3\n")
        assert "line 2" in str(exc.value)
        assert "run.max_lenn" in str(exc.value)

    def test_bad_entry_located(self):
        text = SCHOTTKY_TEXT.replace('["0", "1/3"]', '["0", "x"]')
        with pytest.raises(ConfigError) as exc:
            parse_config(text)
        assert "line 6" in str(exc.value)

    def test_yaml_syntax_error(self):
        with pytest.raises(ConfigError) as exc:
            parse_config("run: [1, 2\n")
        assert "YAML syntax error" in str(exc.value)

    def test_root_must_be_mapping(self):
        with pytest.raises(ConfigError):
            parse_config("- 1\n- 2\n")

    def test_relators_unsupported(self):
        with pytest.raises(UnsupportedGroup):
            parse_config("group:\n  rank: 2\n  relators: [abAB]\n")

    def test_duplicate_labels(self):
        text = SCHOTTKY_TEXT.replace("label: tau3", "label: schottky")
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_two_sources_rejected(self):
        text = SCHOTTKY_TEXT.replace(
            "    symmetric_power: {of: schottky, m: 3}",
            "    symmetric_power: {of: schottky, m: 3}\n    generators: [[[\"1\"]]]",
        )
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_non_positive_scale(self):
        with pytest.raises(ConfigError):
            parse_config(SCHOTTKY_TEXT + "functionals:\n  - {label: f, representation: schottky, scale: \"-1\"}\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.yaml")


class TestConfigHash:
    def test_stable(self):
        assert config_hash(parse_config(SCHOTTKY_TEXT)) == config_hash(parse_config(SCHOTTKY_TEXT))

    def test_outputs_and_threads_ignored(self):
        moved = SCHOTTKY_TEXT.replace("dir: out/a", "dir: elsewhere").replace("threads: 1", "threads: 8")
        assert config_hash(parse_config(moved)) == config_hash(parse_config(SCHOTTKY_TEXT))

    def test_parameters_counted(self):
        longer = SCHOTTKY_TEXT.replace("max_len: 8", "max_len: 9")
        assert config_hash(parse_config(longer)) != config_hash(parse_config(SCHOTTKY_TEXT))

    def test_representation_hash_follows_base(self):
        base = parse_config(SCHOTTKY_TEXT)
        changed = parse_config(SCHOTTKY_TEXT.replace('"5/3", "4/3"], ["4/3", "5/3"', '"5/4", "3/4"], ["3/4", "5/4"'))
        assert representation_hash(base, "tau3") != representation_hash(changed, "tau3")
        assert representation_hash(base, "schottky") == representation_hash(base, "schottky")


# ═══════════════════════════════════════════════════════════════════════════
# 构建
# ═══════════════════════════════════════════════════════════════════════════


class TestBuilders:
    def test_representation(self, schottky):
        config = parse_config(SCHOTTKY_TEXT)
        rep = build_representation(config, "schottky")
        assert np.allclose(rep.generators[1], schottky.generators[1])
        assert build_representation(config, "tau3").dimension == 3

    def test_generator_count(self):
        text = SCHOTTKY_TEXT.replace('      - [["5/3", "4/3"], ["4/3", "5/3"]]\n', "")
        with pytest.raises(ConfigError):
            build_representation(parse_config(text), "schottky")

    def test_unknown_representation(self):
        with pytest.raises(ConfigError):
            build_representation(parse_config(SCHOTTKY_TEXT), "missing")

    def test_complex_entries(self):
        text = SCHOTTKY_TEXT.replace('["3", "0"]', '[["3", "1"], "0"]')
        rep = build_representation(parse_config(text), "schottky")
        assert rep.is_complex

    def test_selected_functionals(self, config_dir):
        config = load_config(config_dir / "schottky.yaml")
        assert [f.label for f in build_functionals(config)] == ["schottky", "word"]
        assert len(build_functionals(config, selected_only=False)) == 4

    def test_default_functionals(self, config_dir):
        config = load_config(config_dir / "punctured_torus.yaml")
        assert [f.label for f in build_functionals(config)] == ["punctured_torus"]

    def test_family_base_point(self, config_dir, schottky):
        fam = build_family(load_config(config_dir / "schottky3.yaml"), "schottky3")
        assert fam.dimension == 3
        rep = evaluate_family(fam, fam.base_point)
        for g, h in zip(rep.generators, schottky.generators):
            assert np.allclose(g, h)

    def test_gauged_family(self, config_dir):
        fam = build_family(load_config(config_dir / "schottky3.yaml"), "schottky3_gauged")
        assert isinstance(fam, ConjugatedFamily)
        assert fam.dimension == 6
        assert fam.box[-1] == (-0.25, 0.25)

    def test_symmetric_power_family(self, config_dir):
        config = load_config(config_dir / "multiplier_family.yaml")
        power = config.families[0].model_copy(
            update={"label": "tau3", "kind": "symmetric_power", "of": "multiplier", "m": 3}
        )
        extended = config.model_copy(update={"families": [*config.families, power]})
        fam = build_family(extended, "tau3")
        assert isinstance(fam, SymmetricPowerFamily)
        assert fam.matrix_dimension == 3

    def test_unknown_family(self, config_dir):
        with pytest.raises(ConfigError):
            build_family(load_config(config_dir / "multiplier_family.yaml"), "missing")

    def test_word_pair(self):
        a, b = parse_word_pair(("ab", "aB"))
        assert str(a) == "ab" and str(b) == "aB"
        with pytest.raises(ConfigError):
            parse_word_pair(("a1", "b"))
