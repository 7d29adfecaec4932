import os

import pytest

from vlio.config import (PRESETS, RunConfig, ScenarioConfig, config_to_dict, load_run_config,
                         load_scenario_config, run_config_from_dict, save_config, scenario_from_preset)
from vlio.errors import ConfigError


def write(tmp_path, text, name='cfg.yaml'):
    path = os.path.join(tmp_path, name)
    with open(path, 'w') as f:
        f.write(text)
    return path


def test_run_defaults():
    cfg = RunConfig().validate()
    assert cfg.gamma == 0.1
    assert cfg.k_neighbors == 5
    assert cfg.map_resolution == 0.5
    assert cfg.max_iterations == 4
    assert cfg.ikf_config().k_candidates == 10
    assert cfg.uncertainty_config().enabled
    assert cfg.workers == -1


def test_empty_file_gives_defaults(tmp_path):
    cfg = load_run_config(write(tmp_path, ''))
    assert cfg == RunConfig().validate()


def test_unknown_key_reports_line(tmp_path):
    path = write(tmp_path, "gamma: 0.2\nk_neighbors: 5\nkneighbours: 7\n")
    with pytest.raises(ConfigError) as e:
        load_run_config(path)
    assert e.value.line == 3
    assert e.value.field == 'kneighbours'
    assert '%s:3:' % path in str(e.value)


@pytest.mark.parametrize("text,field,line", [
    ("gamma: -1.\n", 'gamma', 1),
    ("max_iterations: 2\nk_neighbors: 2.5\n", 'k_neighbors', 2),
    ("deviation_mode: MEDIAN\n", 'deviation_mode', 1),
    ("\n\nuncertainty_enabled: maybe\n", 'uncertainty_enabled', 3),
    ("extrinsic_translation: [0., 1.]\n", 'extrinsic_translation', 1),
    ("workers: 0\n", 'workers', 1),
])
def test_bad_values(tmp_path, text, field, line):
    with pytest.raises(ConfigError) as e:
        load_run_config(write(tmp_path, text))
    assert e.value.field == field
    assert e.value.line == line


def test_invalid_yaml(tmp_path):
    with pytest.raises(ConfigError) as e:
        load_run_config(write(tmp_path, "gamma: [0.1\n"))
    assert e.value.line is not None


def test_not_a_mapping(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(write(tmp_path, "- 1\n- 2\n"))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(os.path.join(tmp_path, 'nope.yaml'))


def test_int_promoted_to_float():
    cfg = run_config_from_dict({'gamma': 1})
    assert isinstance(cfg.gamma, float)


def test_run_config_round_trip(tmp_path):
    cfg = run_config_from_dict({'gamma': 0.05, 'deviation_mode': 'LLS', 'guided_matching_enabled': False,
                                'extrinsic_rotation': [0., 0., 0.1]})
    path = os.path.join(tmp_path, 'out.yaml')
    save_config(cfg, path)
    assert load_run_config(path) == cfg


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_build(name):
    sc = scenario_from_preset(name)
    assert sc.preset == name
    profile = sc.profile()
    assert profile.duration == pytest.approx(sc.duration)
    assert len(sc.world()) > 0
    assert sc.rig().channels == sc.channels


def test_preset_values():
    assert scenario_from_preset('static').duration == pytest.approx(10.)
    assert scenario_from_preset('constant_velocity').noiseless
    vib = scenario_from_preset('z_linear_1hz').profile().terms
    assert len(vib) == 1 and vib[0].axis == 'z' and vib[0].amplitude == pytest.approx(0.03)
    assert scenario_from_preset('z_linear_1hz').duration == pytest.approx(36.)


def test_preset_overrides():
    sc = scenario_from_preset('static', channels=4, columns=50, episode=2.)
    assert sc.rig().columns == 50
    assert sc.duration == pytest.approx(2.)


def test_unknown_preset():
    with pytest.raises(ConfigError):
        scenario_from_preset('earthquake')


def test_scenario_file_merges_preset(tmp_path):
    path = write(tmp_path, "preset: pitch_2hz\nepisode: 4.\nchannels: 8\n")
    sc = load_scenario_config(path)
    assert sc.episode == 4.
    assert sc.channels == 8
    assert sc.profile().terms[0].axis == 'pitch'


def test_scenario_bad_vibration(tmp_path):
    path = write(tmp_path, "vibrations:\n  - {axis: w, amplitude: 0.1, frequency: 1.}\n")
    with pytest.raises(ConfigError):
        load_scenario_config(path)


def test_scenario_round_trip(tmp_path):
    sc = scenario_from_preset('hybrid', episode=5.)
    path = os.path.join(tmp_path, 'scenario.yaml')
    save_config(sc, path)
    again = load_scenario_config(path)
    assert config_to_dict(again) == config_to_dict(sc)


def test_scenario_defaults_validate():
    sc = ScenarioConfig().validate()
    assert sc.rig().imu_rate == 200.
