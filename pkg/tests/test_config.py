from pathlib import Path

import numpy as np
import pytest

from xxladder.config import ConfigError, dump_spec, load_spec, parse_spec

SPECS = Path(__file__).resolve().parents[1] / "specs"


def test_defaults():
    spec = parse_spec({})
    assert spec.topology == "chain" and spec.size == 12
    assert spec.time_grid()[-1] == 300.0
    assert parse_spec({"topology": "ladder"}).time_grid()[-1] == 200.0


@pytest.mark.parametrize("name", ["chain", "ladder", "tmi_chain", "tmi_ladder"])
def test_shipped_specs_load(name):
    spec = load_spec(SPECS / f"{name}.yaml")
    assert spec.size == 12


def test_time_grid():
    spec = parse_spec({"times": {"start_ns": 0, "stop_ns": 10, "step_ns": 2.5},
                       "observables": {"density_window_ns": 5, "entropy_window_ns": 5}})
    np.testing.assert_allclose(spec.time_grid(), [0, 2.5, 5, 7.5, 10])


@pytest.mark.parametrize(
    "data",
    [
        {"size": 1},
        {"topology": "ladder", "size": 7},
        {"unknown_key": 1},
        {"noise": {"mode": "loud"}},
        {"initial_state": {"bits": "10x"}},
        {"size": 4, "initial_state": {"bits": "101"}},
        {"size": 6, "observables": {"entropy_subsystems": [7]}},
        {"observables": {"tmi": {"A": [0], "B": [0], "C": [2, 3, 4]}}},
        {"observables": {"tmi": {"A": [], "B": [1], "C": [2, 3, 4]}}},
        {"observables": {"tmi": {"subset": [0, 1, 2], "A": [0], "B": [1], "C": [2, 3]}}},
        {"times": {"start_ns": 10, "stop_ns": 5}},
        {"seed": -1},
        {"times": {"stop_ns": 40}},
        {"size": 13},
        {"couplings": {"source": "uniform"}, "size": 30},
        {"calibration": {"s_values_mhz": [0.0]}},
        {"benchmark": {"cycles": [1, 1, 2]}},
        {"noise": {"t2star_us": [1.0, 2.0]}},
        {"initial_state": {"pair": [3, 3]}},
    ],
)
def test_rejects(data):
    with pytest.raises(ConfigError) as info:
        parse_spec(data)
    assert info.value.details


def test_non_mapping():
    with pytest.raises(ConfigError):
        parse_spec([1, 2])


def test_bad_yaml(tmp_path):
    p = tmp_path / "x.yaml"
    p.write_text("topology: [chain\n")
    with pytest.raises(ConfigError):
        load_spec(p)
    with pytest.raises(ConfigError):
        load_spec(tmp_path / "missing.yaml")


def test_round_trip_and_hash(tmp_path):
    spec = load_spec(SPECS / "ladder.yaml")
    p = tmp_path / "copy.yaml"
    p.write_text(dump_spec(spec))
    again = load_spec(p)
    assert again == spec and again.spec_hash() == spec.spec_hash()
    assert parse_spec({"seed": 1}).spec_hash() != parse_spec({"seed": 2}).spec_hash()


def test_entropy_sizes_follow_system_size():
    assert parse_spec({"size": 4}).entropy_sizes() == [1, 2, 3, 4]
    assert parse_spec({}).entropy_sizes() == [1, 2, 3, 4, 5, 6]
    assert parse_spec({"observables": {"entropy_subsystems": [3, 1, 3]}}).entropy_sizes() == [1, 3]


def test_bare_off_in_yaml(tmp_path):
    p = tmp_path / "off.yaml"
    p.write_text("noise:\n  mode: off\n")
    assert load_spec(p).noise.mode == "off"
    with pytest.raises(ConfigError):
        parse_spec({"noise": {"mode": True}})
