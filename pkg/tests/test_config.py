import json

import pytest

from mcte_lab import ConfigError, build_config, build_surface, load_config
from mcte_lab.config import _apply_set


def base_invariant(**extra):
    raw = {
        "scenario": "invariant",
        "surface": {"kind": "toy-granular", "params": {"c": 0.3}},
        "q0": [0.78, 0.1],
        "span": [0.1, 0.6],
    }
    raw.update(extra)
    return raw


def test_load_valid_config(tmp_path):
    f = tmp_path / "c.json"
    f.write_text(json.dumps(base_invariant(seed=3, output_dir="out")))
    cfg = load_config(f)
    assert cfg.scenario == "invariant"
    assert cfg.seed == 3
    assert cfg.output_dir == "out"
    assert cfg.opts["param_channel"] == 1  # default
    assert cfg.surface.kind == "toy-granular"


def test_missing_file_and_bad_json(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.json")
    f = tmp_path / "broken.json"
    f.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(f)


def test_unknown_key_named_in_error():
    with pytest.raises(ConfigError, match="wrongkey"):
        build_config(base_invariant(wrongkey=1))


def test_unknown_surface_key_named():
    raw = base_invariant()
    raw["surface"]["typo"] = 1
    with pytest.raises(ConfigError, match="typo"):
        build_config(raw)


def test_unknown_param_key_named():
    raw = base_invariant()
    raw["surface"]["params"]["cc"] = 0.1
    with pytest.raises(ConfigError, match="cc"):
        build_config(raw)


def test_scenario_cli_mismatch():
    with pytest.raises(ConfigError, match="sweep"):
        build_config(base_invariant(), scenario_cli="sweep")


def test_scenario_from_cli_when_config_silent():
    raw = base_invariant()
    del raw["scenario"]
    cfg = build_config(raw, scenario_cli="invariant")
    assert cfg.scenario == "invariant"
    with pytest.raises(ConfigError):
        build_config(dict(raw))  # no scenario anywhere


def test_unknown_scenario():
    with pytest.raises(ConfigError):
        build_config(base_invariant(scenario="warp"))


def test_seed_must_be_integer():
    with pytest.raises(ConfigError):
        build_config(base_invariant(seed=True))
    with pytest.raises(ConfigError):
        build_config(base_invariant(seed="7"))


def test_invalid_surface_params_wrapped():
    raw = base_invariant()
    raw["surface"]["params"]["c"] = -0.5
    with pytest.raises(ConfigError):
        build_config(raw)


def test_unknown_surface_kind():
    with pytest.raises(ConfigError, match="kind"):
        build_surface({"kind": "mystery"})


def test_vector_length_checked():
    with pytest.raises(ConfigError, match="q0"):
        build_config(base_invariant(q0=[0.78]))


class TestApplySet:

    def test_json_values(self):
        raw = {"a": 1}
        _apply_set(raw, "a=2.5")
        _apply_set(raw, "flag=true")
        _apply_set(raw, "name=plain string")
        assert raw == {"a": 2.5, "flag": True, "name": "plain string"}

    def test_dotted_path_creates_objects(self):
        raw = {}
        _apply_set(raw, "surface.params.c=0.6")
        assert raw == {"surface": {"params": {"c": 0.6}}}

    def test_list_value(self):
        raw = {}
        _apply_set(raw, "span=[0.1, 0.4]")
        assert raw["span"] == [0.1, 0.4]

    def test_descending_into_scalar_rejected(self):
        with pytest.raises(ConfigError):
            _apply_set({"a": 3}, "a.b=1")

    def test_requires_equals(self):
        with pytest.raises(ConfigError):
            _apply_set({}, "novalue")


def test_set_then_strict_validation_catches_typo(tmp_path):
    f = tmp_path / "c.json"
    f.write_text(json.dumps(base_invariant()))
    with pytest.raises(ConfigError, match="spam"):
        load_config(f, sets=["spam=1"])


def test_config_hash_ignores_output_dir():
    a = build_config(base_invariant(output_dir="x"))
    b = build_config(base_invariant(output_dir="y"))
    assert a.config_hash == b.config_hash


def test_config_hash_sees_overrides():
    a = build_config(base_invariant())
    b = build_config(base_invariant(span=[0.1, 0.5]))
    c = build_config(base_invariant(), seed_cli=99)
    assert a.config_hash != b.config_hash
    assert a.config_hash != c.config_hash


def test_cli_seed_and_out_materialized():
    cfg = build_config(base_invariant(), out_cli="elsewhere", seed_cli=5)
    assert cfg.output_dir == "elsewhere"
    assert cfg.seed == 5


def test_sweep_requires_toy_surface():
    raw = {
        "scenario": "sweep",
        "surface": {"kind": "quadratic-diagonal"},
        "c_values": [0.0, 0.3],
        "V0_values": [0.8],
        "sigma0": 0.1,
        "sigma_end": 0.6,
    }
    with pytest.raises(ConfigError, match="toy-granular"):
        build_config(raw)


def test_sweep_value_validation():
    raw = {
        "scenario": "sweep",
        "surface": {"kind": "toy-granular", "params": {}},
        "c_values": [],
        "V0_values": [0.8],
        "sigma0": 0.1,
        "sigma_end": 0.6,
    }
    with pytest.raises(ConfigError):
        build_config(raw)
    raw["c_values"] = [-0.1]
    with pytest.raises(ConfigError):
        build_config(raw)


def test_holonomy_needs_exactly_one_loop_form():
    base = {
        "scenario": "holonomy",
        "surface": {"kind": "toy-granular", "params": {"c": 0.3}},
    }
    with pytest.raises(ConfigError):
        build_config(dict(base))
    both = dict(base, rect=[0.78, 0.82, 0.1, 0.3],
                vertices=[[0.78, 0.1], [0.8, 0.1], [0.8, 0.3]])
    with pytest.raises(ConfigError):
        build_config(both)
    verts = dict(base, vertices=[[0.78, 0.1], [0.8, 0.1]])
    with pytest.raises(ConfigError):
        build_config(verts)


def test_holonomy_stokes_needs_rectangle():
    raw = {
        "scenario": "holonomy",
        "surface": {"kind": "toy-granular", "params": {"c": 0.3}},
        "vertices": [[0.78, 0.1], [0.8, 0.1], [0.8, 0.3]],
        "stokes": True,
    }
    with pytest.raises(ConfigError):
        build_config(raw)


def test_tabulated_surface_requires_file():
    with pytest.raises(ConfigError, match="file"):
        build_surface({"kind": "external-tabulated"})


def test_fluctuation_sampler_keys_strict():
    raw = {
        "scenario": "fluctuation-check",
        "surface": {"kind": "quadratic-diagonal", "k": [2.0, 3.0]},
        "sampler": {"q_center": [0.0, 0.0], "box": [1.0, 1.0],
                    "walkers": 4},
    }
    with pytest.raises(ConfigError, match="walkers"):
        build_config(raw)
