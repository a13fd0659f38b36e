import json

import numpy as np
import pytest

from glprofile.experiment import (
    ConfigError,
    InterestSpec,
    config_hash,
    load_config,
    parse_config,
)
from glprofile.space import ProfileGrid


def cmp_doc(**overrides):
    doc = {
        "model": "cmp",
        "true_params": [4.0, 2.0],
        "sample_sizes": {"n": 60},
        "interest": [
            {
                "name": "lambda",
                "index": 0,
                "grid": {"lower": 2.0, "upper": 8.0, "points": 7},
            }
        ],
        "seed": 3,
        "out_dir": "runs/demo",
    }
    doc.update(overrides)
    return doc


def walk_doc(**overrides):
    doc = {
        "model": "randomwalk",
        "true_params": [0.005, 0.5],
        "sample_sizes": {"m": 30},
        "model_options": {"lattice_sites": 15, "positions": [8]},
        "interest": [
            {
                "name": "p_d",
                "index": 0,
                "grid": {"lower": 0.001, "upper": 0.01, "points": 5},
            }
        ],
        "seed": 2,
        "out_dir": "runs/walk",
    }
    doc.update(overrides)
    return doc


class TestParseConfig:
    def test_resolves_cmp_document(self):
        cfg = parse_config(cmp_doc())
        assert cfg.model_name == "cmp"
        assert np.array_equal(cfg.true_params, [4.0, 2.0])
        spec = cfg.interest[0]
        assert spec.name == "lambda" and spec.index == 0
        assert np.array_equal(spec.grid.values, np.linspace(2.0, 8.0, 7))
        # defaults fill in everything not mentioned
        assert cfg.calibration.K == 100
        assert cfg.calibration.alpha == 0.05
        assert cfg.coverage_B == 200
        assert cfg.coverage_alphas == (0.05,)
        assert cfg.coverage_true_params == ((4.0, 2.0),)
        assert cfg.optimizer.restarts == 2

    def test_section_values_are_mapped(self):
        doc = cmp_doc(
            calibration={"K": 7, "alpha": 0.3, "delta_step": 0.2, "seed": 5},
            coverage={"B": 11, "alphas": [0.1, 0.4], "seed": 9},
            optimizer={"max_evals": 123, "restarts": 1},
        )
        cfg = parse_config(doc)
        assert cfg.calibration.K == 7
        assert cfg.calibration.alpha == 0.3
        assert cfg.calibration.delta_step == 0.2
        assert cfg.calibration.seed == 5
        assert cfg.coverage_B == 11
        assert cfg.coverage_alphas == (0.1, 0.4)
        assert cfg.coverage_seed == 9
        assert cfg.optimizer.max_evals == 123
        assert cfg.optimizer.restarts == 1

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            parse_config(cmp_doc(extra_knob=1))

    def test_missing_required_field_rejected(self):
        doc = cmp_doc()
        del doc["interest"]
        with pytest.raises(ConfigError):
            parse_config(doc)

    def test_unknown_model_rejected(self):
        with pytest.raises(ConfigError):
            parse_config(cmp_doc(model="gaussian"))

    def test_interest_index_out_of_range(self):
        doc = cmp_doc()
        doc["interest"][0]["index"] = 2
        with pytest.raises(ConfigError):
            parse_config(doc)

    def test_grid_must_stay_inside_parameter_bounds(self):
        doc = cmp_doc()
        doc["interest"][0]["grid"]["upper"] = 25.0
        with pytest.raises(ConfigError):
            parse_config(doc)

    def test_duplicate_interest_names_rejected(self):
        doc = cmp_doc()
        doc["interest"] = [doc["interest"][0], dict(doc["interest"][0])]
        with pytest.raises(ConfigError):
            parse_config(doc)

    def test_true_params_must_be_in_space(self):
        with pytest.raises(ConfigError):
            parse_config(cmp_doc(true_params=[0.5, 2.0]))

    def test_cmp_rejects_model_options(self):
        with pytest.raises(ConfigError):
            parse_config(cmp_doc(model_options={"p_m": 0.5}))

    def test_cmp_requires_count_sample_size(self):
        doc = cmp_doc()
        del doc["sample_sizes"]
        with pytest.raises(ConfigError):
            parse_config(doc)
        with pytest.raises(ConfigError):
            parse_config(cmp_doc(sample_sizes={"m": 60}))

    def test_randomwalk_rejects_count_sample_size(self):
        with pytest.raises(ConfigError):
            parse_config(walk_doc(sample_sizes={"n": 30}))

    def test_randomwalk_positions_must_fit_the_lattice(self):
        doc = walk_doc()
        doc["model_options"]["positions"] = [8, 200]
        with pytest.raises(ConfigError):
            parse_config(doc)

    def test_coverage_delta_star_names_are_checked(self):
        doc = cmp_doc(coverage={"delta_star": {"nu": 3.0}})
        with pytest.raises(ConfigError):
            parse_config(doc)

    def test_coverage_truths_must_be_in_space(self):
        doc = cmp_doc(coverage={"true_params": [[0.1, 2.0]]})
        with pytest.raises(ConfigError):
            parse_config(doc)


class TestBuildModel:
    def test_cmp_sample_size_becomes_default_size(self):
        model = parse_config(cmp_doc()).build_model()
        assert model.name == "cmp"
        assert model.default_size == 60

    def test_randomwalk_options_are_honoured(self):
        cfg = parse_config(walk_doc())
        model = cfg.build_model()
        assert model.name == "randomwalk"
        assert model.default_size == ((8,), 30)
        # options are copied, not consumed: a second build works
        assert cfg.build_model().default_size == ((8,), 30)

    def test_dataset_filenames(self):
        assert parse_config(cmp_doc()).dataset_filename() == "counts.txt"
        assert parse_config(walk_doc()).dataset_filename() == "lifetimes.csv"


class TestInterestSpec:
    def test_partition_separates_interest_from_nuisance(self):
        grid = ProfileGrid.regular(0.0, 1.0, 3)
        part = InterestSpec("x", 1, grid).partition(2)
        assert part.interest == (1,)
        assert part.nuisance == (0,)


class TestLoadConfig:
    def test_round_trip_through_a_file(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(cmp_doc()))
        cfg = load_config(path)
        assert cfg.model_name == "cmp"
        assert cfg.raw == cmp_doc()

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_non_object_root(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("[1, 2]")
        with pytest.raises(ConfigError):
            load_config(path)


class TestConfigHash:
    def test_key_order_does_not_matter(self):
        a = {"model": "cmp", "seed": 3, "nested": {"x": 1, "y": 2}}
        b = {"nested": {"y": 2, "x": 1}, "seed": 3, "model": "cmp"}
        assert config_hash(a) == config_hash(b)

    def test_value_changes_do_matter(self):
        assert config_hash(cmp_doc()) != config_hash(cmp_doc(seed=4))
