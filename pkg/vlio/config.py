# run and scenario configuration: dataclasses with defaults, yaml load/save,
# field validation with file:line diagnostics, and the scenario presets

import copy
import dataclasses
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import yaml

from vlio.errors import ConfigError, DataError
from vlio.ikf import IkfConfig
from vlio.manifold import RigidTransform, so3_exp
from vlio.propagation import NoiseParams
from vlio.sim import SensorRig, SimWorld, VibrationProfile, VibrationTerm
from vlio.uncertainty import BeamNoiseModel, DeviationMode, UncertaintyConfig

logger = logging.getLogger(__name__)

EXTRINSIC_TRANSLATION = [0.05, 0., 0.1]  # m, lidar origin in the imu frame


@dataclass
class RunConfig:
    gamma: float = 0.1
    k_neighbors: int = 5
    k_candidates: Optional[int] = None      # None -> 2 * k_neighbors
    map_resolution: float = 0.5
    max_iterations: int = 4
    eps_rot: float = 1.e-3
    eps_pos: float = 1.e-3
    downsample_stride: int = 4
    deviation_mode: str = 'MAD'
    uncertainty_enabled: bool = True
    guided_matching_enabled: bool = True
    plane_threshold: float = 0.1
    max_neighbor_distance: float = 2.
    min_observations: int = 10
    cov_floor: float = 1.e-8
    scan_period: float = 0.1
    init_duration: float = 1.
    beam_sigma_range: float = 0.02
    beam_sigma_bearing: float = 0.001
    imu_sigma_gyro: float = 0.01
    imu_sigma_accel: float = 0.1
    imu_sigma_bias_gyro: float = 1.e-4
    imu_sigma_bias_accel: float = 1.e-3
    extrinsic_rotation: List[float] = field(default_factory=lambda: [0., 0., 0.])  # rotation vector, rad
    extrinsic_translation: List[float] = field(default_factory=lambda: list(EXTRINSIC_TRANSLATION))
    dump_covariances: bool = False
    workers: int = -1

    def validate(self):
        _check_number(self, 'gamma', positive=True)
        _check_int(self, 'k_neighbors', lo=3)
        if self.k_candidates is not None:
            _check_int(self, 'k_candidates', lo=self.k_neighbors)
        _check_number(self, 'map_resolution', positive=True)
        _check_int(self, 'max_iterations', lo=1)
        _check_number(self, 'eps_rot', positive=True)
        _check_number(self, 'eps_pos', positive=True)
        _check_int(self, 'downsample_stride', lo=1)
        if self.deviation_mode not in [m.value for m in DeviationMode]:
            raise ConfigError("should be one of MAD, STD, LLS", field='deviation_mode')
        _check_bool(self, 'uncertainty_enabled')
        _check_bool(self, 'guided_matching_enabled')
        _check_number(self, 'plane_threshold', positive=True)
        _check_number(self, 'max_neighbor_distance', positive=True)
        _check_int(self, 'min_observations', lo=1)
        _check_number(self, 'cov_floor', positive=True)
        _check_number(self, 'scan_period', positive=True)
        _check_number(self, 'init_duration', positive=True)
        for name in ('beam_sigma_range', 'beam_sigma_bearing', 'imu_sigma_gyro', 'imu_sigma_accel',
                     'imu_sigma_bias_gyro', 'imu_sigma_bias_accel'):
            _check_number(self, name, nonnegative=True)
        _check_vector(self, 'extrinsic_rotation')
        _check_vector(self, 'extrinsic_translation')
        _check_bool(self, 'dump_covariances')
        _check_int(self, 'workers', lo=-1)
        if self.workers == 0:
            raise ConfigError("should be -1 (all cores) or >= 1", field='workers')
        return self

    def ikf_config(self):
        return IkfConfig(max_iterations=self.max_iterations, eps_rot=self.eps_rot, eps_pos=self.eps_pos,
                         k_neighbors=self.k_neighbors, k_candidates=self.k_candidates,
                         guided_matching=self.guided_matching_enabled,
                         plane_threshold=self.plane_threshold,
                         max_neighbor_distance=self.max_neighbor_distance,
                         min_observations=self.min_observations)

    def uncertainty_config(self):
        return UncertaintyConfig(gamma=self.gamma, deviation_mode=DeviationMode(self.deviation_mode),
                                 enabled=self.uncertainty_enabled, cov_floor=self.cov_floor)

    def beam(self):
        return BeamNoiseModel(self.beam_sigma_range, self.beam_sigma_bearing)

    def noise(self):
        return NoiseParams(self.imu_sigma_gyro, self.imu_sigma_accel,
                           self.imu_sigma_bias_gyro, self.imu_sigma_bias_accel)

    def extrinsics(self):
        return RigidTransform(so3_exp(self.extrinsic_rotation), self.extrinsic_translation)


@dataclass
class ScenarioConfig:
    preset: Optional[str] = None
    base: str = 'static'
    lead_in: float = 3.
    episode: float = 30.
    lead_out: float = 3.
    ramp: float = 1.
    origin: List[float] = field(default_factory=lambda: [0., 0., 1.2])
    velocity: List[float] = field(default_factory=lambda: [0., 0., 0.])
    radius: float = 1.
    speed: float = 0.5
    waypoints: Optional[List[List[float]]] = None
    vibrations: List[dict] = field(default_factory=list)
    room_size: List[float] = field(default_factory=lambda: [6., 6., 3.])
    boxes: bool = True
    channels: int = 16
    columns: int = 625
    vfov: List[float] = field(default_factory=lambda: [-45., 45.])
    scan_period: float = 0.1
    min_range: float = 0.1
    max_range: float = 50.
    beam_sigma_range: float = 0.02
    beam_sigma_bearing: float = 0.001
    imu_rate: float = 200.
    imu_sigma_gyro: float = 1.e-3
    imu_sigma_accel: float = 1.e-2
    bias_gyro: List[float] = field(default_factory=lambda: [2.e-3, -1.e-3, 1.5e-3])
    bias_accel: List[float] = field(default_factory=lambda: [0., 0., 0.])
    extrinsic_rotation: List[float] = field(default_factory=lambda: [0., 0., 0.])
    extrinsic_translation: List[float] = field(default_factory=lambda: list(EXTRINSIC_TRANSLATION))
    noiseless: bool = False

    @property
    def duration(self):
        return self.lead_in + self.episode + self.lead_out

    def validate(self):
        if self.preset is not None and self.preset not in PRESETS:
            raise ConfigError("unknown preset, should be one of %s" % sorted(PRESETS), field='preset')
        for name in ('lead_in', 'episode', 'lead_out', 'ramp', 'radius', 'speed',
                     'min_range', 'beam_sigma_range', 'beam_sigma_bearing',
                     'imu_sigma_gyro', 'imu_sigma_accel'):
            _check_number(self, name, nonnegative=True)
        for name in ('scan_period', 'max_range', 'imu_rate'):
            _check_number(self, name, positive=True)
        _check_int(self, 'channels', lo=1)
        _check_int(self, 'columns', lo=1)
        for name in ('origin', 'velocity', 'room_size', 'bias_gyro', 'bias_accel',
                     'extrinsic_rotation', 'extrinsic_translation'):
            _check_vector(self, name)
        _check_vector(self, 'vfov', n=2)
        _check_bool(self, 'boxes')
        _check_bool(self, 'noiseless')
        if not isinstance(self.vibrations, list):
            raise ConfigError("should be a list of {axis, amplitude, frequency, phase}", field='vibrations')
        # build the simulator objects once so their own checks report against this file
        try:
            self.profile()
            self.rig()
        except (DataError, TypeError) as e:
            raise ConfigError(str(e))
        return self

    def profile(self):
        terms = [VibrationTerm(**v) for v in self.vibrations]
        return VibrationProfile(terms=terms, base=self.base, lead_in=self.lead_in, episode=self.episode,
                                lead_out=self.lead_out, ramp=self.ramp, origin=self.origin,
                                velocity=self.velocity, radius=self.radius, speed=self.speed,
                                waypoints=self.waypoints)

    def rig(self):
        return SensorRig(extrinsics=RigidTransform(so3_exp(self.extrinsic_rotation), self.extrinsic_translation),
                         channels=self.channels, columns=self.columns, vfov=tuple(self.vfov),
                         scan_period=self.scan_period, min_range=self.min_range, max_range=self.max_range,
                         beam=BeamNoiseModel(self.beam_sigma_range, self.beam_sigma_bearing),
                         imu_rate=self.imu_rate,
                         imu_noise=NoiseParams(self.imu_sigma_gyro, self.imu_sigma_accel, 0., 0.),
                         bias_gyro=self.bias_gyro, bias_accel=self.bias_accel)

    def world(self):
        return SimWorld.room(tuple(self.room_size), boxes=self.boxes)


# vibration amplitudes: m for translation axes, rad for rotation axes
PRESETS = {
    'static': {'base': 'static', 'lead_in': 0., 'episode': 10., 'lead_out': 0., 'ramp': 0.},
    'constant_velocity': {'base': 'constant', 'lead_in': 1., 'episode': 30., 'lead_out': 1.,
                          'velocity': [0.05, 0.03, 0.], 'noiseless': True},
    'z_linear_1hz': {'vibrations': [{'axis': 'z', 'amplitude': 0.03, 'frequency': 1.}]},
    'pitch_2hz': {'vibrations': [{'axis': 'pitch', 'amplitude': float(np.radians(2.)), 'frequency': 2.}]},
    'roll_3hz': {'vibrations': [{'axis': 'roll', 'amplitude': float(np.radians(1.5)), 'frequency': 3.}]},
    'hybrid': {'vibrations': [{'axis': 'z', 'amplitude': 0.02, 'frequency': 1.},
                              {'axis': 'pitch', 'amplitude': float(np.radians(1.5)), 'frequency': 2.},
                              {'axis': 'roll', 'amplitude': float(np.radians(1.)), 'frequency': 3.}]},
    'circle': {'base': 'circle', 'radius': 1., 'speed': 0.5,
               'vibrations': [{'axis': 'z', 'amplitude': 0.01, 'frequency': 1.},
                              {'axis': 'pitch', 'amplitude': float(np.radians(1.)), 'frequency': 2.}]},
}


def _fail(name, msg):
    raise ConfigError(msg, field=name)


def _check_number(cfg, name, positive=False, nonnegative=False):
    val = getattr(cfg, name)
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not np.isfinite(val):
        _fail(name, "should be a finite number")
    if positive and not val > 0:
        _fail(name, "should be > 0")
    if nonnegative and not val >= 0:
        _fail(name, "should be >= 0")
    setattr(cfg, name, float(val))


def _check_int(cfg, name, lo=None):
    val = getattr(cfg, name)
    if isinstance(val, bool) or not isinstance(val, int):
        _fail(name, "should be an integer")
    if lo is not None and val < lo:
        _fail(name, "should be >= %d" % lo)


def _check_bool(cfg, name):
    if not isinstance(getattr(cfg, name), bool):
        _fail(name, "should be true or false")


def _check_vector(cfg, name, n=3):
    val = getattr(cfg, name)
    if (not isinstance(val, (list, tuple)) or len(val) != n
            or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in val)):
        _fail(name, "should be a list of %d numbers" % n)
    setattr(cfg, name, [float(v) for v in val])


def _read_mapping(path):
    """parsed yaml mapping plus the 1-based line of every top-level key"""
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise ConfigError("cannot read config: %s" % e, path=path)
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, 'problem_mark', None)
        raise ConfigError("invalid yaml: %s" % getattr(e, 'problem', e), path=path,
                          line=None if mark is None else mark.line + 1)
    if data is None:
        return {}, {}
    if not isinstance(data, dict) or not isinstance(node, yaml.MappingNode):
        raise ConfigError("top level should be a mapping of key: value", path=path, line=1)
    lines = {k.value: k.start_mark.line + 1 for k, _ in node.value}
    return data, lines


def _build(cls, data, path=None, lines=None):
    lines = lines or {}
    known = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError("unknown key", path=path, line=lines.get(key), field=key)
    cfg = cls(**data)
    try:
        return cfg.validate()
    except ConfigError as e:
        raise ConfigError(e.reason, path=path, line=lines.get(e.field), field=e.field)


def run_config_from_dict(data):
    return _build(RunConfig, dict(data))


def load_run_config(path):
    data, lines = _read_mapping(path)
    cfg = _build(RunConfig, data, path, lines)
    logger.debug("loaded run config from %s", path)
    return cfg


def scenario_from_preset(name, **overrides):
    if name not in PRESETS:
        raise ConfigError("unknown preset %s, should be one of %s" % (name, sorted(PRESETS)), field='preset')
    data = copy.deepcopy(PRESETS[name])
    data.update(overrides)
    data['preset'] = name
    return _build(ScenarioConfig, data)


def load_scenario_config(path):
    """scenario file; a `preset:` key starts from that preset and the other keys override it"""
    data, lines = _read_mapping(path)
    name = data.get('preset')
    if name is not None:
        if name not in PRESETS:
            raise ConfigError("unknown preset, should be one of %s" % sorted(PRESETS),
                              path=path, line=lines.get('preset'), field='preset')
        merged = copy.deepcopy(PRESETS[name])
        merged.update(data)
        data = merged
    return _build(ScenarioConfig, data, path, lines)


def config_to_dict(cfg):
    return dataclasses.asdict(cfg)


def save_config(cfg, path):
    """effective config as yaml; loading it back gives an equal dataclass"""
    try:
        with open(path, 'w') as f:
            yaml.safe_dump(config_to_dict(cfg), f, default_flow_style=False, sort_keys=False)
    except OSError as e:
        raise ConfigError("cannot write config: %s" % e, path=path)
