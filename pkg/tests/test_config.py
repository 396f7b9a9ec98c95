"""Configuration parsing, canonical serialization, and hashing tests."""

import pytest

from latentscope.config import (
    PipelineConfig,
    canonical_lines,
    config_hash,
    load_config,
    parse_comparison,
    parse_config_text,
    write_config,
)
from latentscope.errors import ConfigError


class TestParseComparison:
    def test_standard_pairs(self):
        assert parse_comparison("NOR_AD") == (0, 3)
        assert parse_comparison("NOR_MCI") == (0, 1)
        assert parse_comparison("NOR_MCIc") == (0, 2)
        assert parse_comparison("MCI_AD") == (1, 3)

    def test_unknown_class(self):
        with pytest.raises(ConfigError):
            parse_comparison("NOR_XYZ")

    def test_multi_class_rejected(self):
        with pytest.raises(ConfigError):
            parse_comparison("NOR_MCI_AD")
        with pytest.raises(ConfigError):
            parse_comparison("NOR")

    def test_repeated_class_rejected(self):
        with pytest.raises(ConfigError):
            parse_comparison("AD_AD")


class TestRoundTrip:
    def test_default_round_trip(self):
        config = PipelineConfig()
        text = "\n".join(canonical_lines(config)) + "\n"
        parsed = parse_config_text(text)
        assert canonical_lines(parsed) == canonical_lines(config)
        assert config_hash(parsed) == config_hash(config)

    def test_file_round_trip(self, tmp_path):
        config = PipelineConfig()
        config.seed = 42
        config.top_n = 7
        path = tmp_path / "run.cfg"
        write_config(config, path)
        loaded = load_config(path)
        assert loaded.seed == 42
        assert loaded.top_n == 7
        assert config_hash(loaded) == config_hash(config)

    def test_comments_and_blanks_ignored(self):
        text = (
            "# a comment line\n"
            "\n"
            "seed=9\n"
            "   \n"
            "# another\n"
            "correlate.top_n=4\n"
        )
        config = parse_config_text(text)
        assert config.seed == 9
        assert config.top_n == 4

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            parse_config_text("phantom.shape=1,2,3\n")

    def test_malformed_line_rejected(self):
        with pytest.raises(ConfigError, match="key=value"):
            parse_config_text("just some words\n")

    def test_typed_value_errors(self):
        with pytest.raises(ConfigError):
            parse_config_text("seed=twelve\n")
        with pytest.raises(ConfigError):
            parse_config_text("train.lr=fast\n")
        with pytest.raises(ConfigError):
            parse_config_text("correlate.stratify=yes\n")

    def test_class_counts_parsing(self):
        config = parse_config_text(
            "phantom.class_counts=NOR:10,AD:5\ncomparisons=NOR_AD\n")
        assert config.phantom.class_counts == {0: 10, 3: 5}
        with pytest.raises(ConfigError):
            parse_config_text("phantom.class_counts=BAD:10\n")

    def test_effects_parsing(self):
        config = parse_config_text(
            "phantom.effects=5:AD:0.3,7:MCI:0.1\n"
            "phantom.class_counts=NOR:10,AD:5,MCI:5\n"
            "comparisons=NOR_AD\n")
        assert config.phantom.effect_spec == [(5, 3, 0.3), (7, 1, 0.1)]
        with pytest.raises(ConfigError):
            parse_config_text("phantom.effects=5:AD\n")

    def test_comparison_against_absent_class(self):
        with pytest.raises(ConfigError, match="absent"):
            parse_config_text(
                "phantom.class_counts=NOR:10,AD:10\ncomparisons=NOR_MCI\n")

    def test_float_formatting_survives(self):
        # repr-based serialization must reproduce the exact float
        config = PipelineConfig()
        config.phantom.noise_sigma = 0.1 + 0.2  # 0.30000000000000004
        text = "\n".join(canonical_lines(config)) + "\n"
        parsed = parse_config_text(text)
        assert parsed.phantom.noise_sigma == config.phantom.noise_sigma


class TestHash:
    def test_stable_across_instances(self):
        assert config_hash(PipelineConfig()) == config_hash(PipelineConfig())

    def test_sensitive_to_computation_fields(self):
        a = PipelineConfig()
        b = PipelineConfig()
        b.seed = 1
        assert config_hash(a) != config_hash(b)
        c = PipelineConfig()
        c.embed.components = 2
        assert config_hash(a) != config_hash(c)

    def test_out_dir_excluded(self):
        # the output directory is a location, not an experiment parameter
        a = PipelineConfig()
        b = PipelineConfig()
        b.out_dir = "/somewhere/else"
        assert config_hash(a) == config_hash(b)
        assert not any("out" == line.split("=")[0]
                       for line in canonical_lines(a))

    def test_default_cohort_size(self):
        counts = PipelineConfig().phantom.class_counts
        assert sum(counts.values()) == 229 + 252 + 149 + 188

    def test_missing_file_raises(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "absent.cfg")
