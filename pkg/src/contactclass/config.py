"""Run configuration: INI file, environment overrides, command-line flags.

Precedence, lowest first: built-in defaults, config file, environment
variables named ``CONTACTCLASS_<SECTION>_<KEY>``, command-line flags.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass
from typing import Mapping, Optional

from .audio_ranging import AudioRangingConfig
from .errors import ConfigError, ContactClassError
from .propagation import CrowdLayout, LognormalFading, PropagationConfig, RiceFading

ENV_PREFIX = "CONTACTCLASS_"

DEFAULTS = {
    "propagation": {
        "tx_power": "0.0",
        "path_loss_exponent": "2.0",
        "critical_distance": "2.0",
        "crowd_density": "1.0",
    },
    "rice": {"gamma_r": "247.0", "sigma_r_sq": "9.15"},
    "lognormal": {"sigma_md": "1.60", "sigma_fa": "1.97"},
    "episode": {
        "n_values": "6,15,60",
        "x0_values": "3,5",
        "table4_n_values": "1,6,15,30,60,120,240,480",
        "k_y": "16",
        "target": "2",
        "table3_ratios": "1,2,4,8,12",
        "table3_x0_values": "3,5,30,60",
    },
    "audio": {
        "chip_duration": "0.001",
        "correlator_spacing": "1.0",
        "sound_speed": "343.0",
        "carrier_hz": "18000",
        "code_length": "350",
        "calibration_esn0_db": "6.0",
        "sample_rate": "48000",
        "lowpass_hz": "2000",
        "sigma_m": "0.05",
        "esn0_values": "6,12",
        "window_chips": "0.75",
    },
    "protocol": {"positions": "0,2", "max_delay": "0", "timestamp_noise": "0"},
    "classifier": {"pose_b_distance": "1.0"},
    "run": {"trials": "1000000", "dsp_trials": "500", "out": "out"},
}


def parse_ints(text: str, key: str):
    try:
        vals = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"{key}: expected comma-separated integers, got {text!r}") from exc
    if not vals:
        raise ConfigError(f"{key}: empty list")
    return vals


def parse_floats(text: str, key: str):
    try:
        vals = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"{key}: expected comma-separated numbers, got {text!r}") from exc
    if not vals:
        raise ConfigError(f"{key}: empty list")
    return vals


@dataclass(frozen=True)
class RunConfig:
    propagation: PropagationConfig
    crowd: CrowdLayout
    rice: RiceFading
    lognormal_md: LognormalFading
    lognormal_fa: LognormalFading
    audio: AudioRangingConfig
    audio_sigma: float
    esn0_values: tuple
    window_chips: float
    n_values: tuple
    x0_values: tuple
    table4_n_values: tuple
    k_y: float
    target: float
    table3_ratios: tuple
    table3_x0_values: tuple
    positions: tuple
    max_delay: float
    timestamp_noise: float
    pose_b_distance: float
    trials: int
    dsp_trials: int
    out: str
    seed: Optional[int] = None

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigError("this command is stochastic and needs a seed (--seed or [run] seed)")
        return self.seed


def read_layers(path: Optional[str] = None, environ: Optional[Mapping[str, str]] = None) -> configparser.ConfigParser:
    """Merge defaults, the optional INI file and environment overrides."""
    cp = configparser.ConfigParser()
    cp.read_dict(DEFAULTS)
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    env = os.environ if environ is None else environ
    for name, value in env.items():
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):].lower()
        for section in cp.sections():
            if rest.startswith(section + "_"):
                cp.set(section, rest[len(section) + 1:], value)
                break
    return cp


def build(cp: configparser.ConfigParser, overrides: Optional[Mapping[str, object]] = None) -> RunConfig:
    """Validate every value; any violation becomes a ConfigError."""
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    known = {s: set(DEFAULTS.get(s, {})) | ({"seed"} if s == "run" else set()) for s in cp.sections()}
    for section in cp.sections():
        if section not in DEFAULTS:
            raise ConfigError(f"unknown config section [{section}]")
        extra = set(cp[section]) - known[section]
        if extra:
            raise ConfigError(f"unknown keys in [{section}]: {', '.join(sorted(extra))}")
    try:
        g = cp.getfloat
        prop = PropagationConfig(g("propagation", "tx_power"), g("propagation", "path_loss_exponent"), g("propagation", "critical_distance"))
        crowd = CrowdLayout.densest_packing(prop.critical_distance, g("propagation", "crowd_density"))
        rice = RiceFading(g("rice", "gamma_r"), g("rice", "sigma_r_sq"))
        ln_md = LognormalFading(g("lognormal", "sigma_md"))
        ln_fa = LognormalFading(g("lognormal", "sigma_fa"))
        audio = AudioRangingConfig(
            chip_duration=g("audio", "chip_duration"),
            correlator_spacing=g("audio", "correlator_spacing"),
            sound_speed=g("audio", "sound_speed"),
            carrier_hz=g("audio", "carrier_hz"),
            code_length=cp.getint("audio", "code_length"),
            calibration_esn0_db=g("audio", "calibration_esn0_db"),
            sample_rate=g("audio", "sample_rate"),
            lowpass_hz=g("audio", "lowpass_hz"),
        )
        seed_text = cp.get("run", "seed", fallback=None)
        seed = overrides.get("seed", int(seed_text) if seed_text not in (None, "") else None)
        trials = int(overrides.get("trials", cp.getint("run", "trials")))
        rc = RunConfig(
            propagation=prop,
            crowd=crowd,
            rice=rice,
            lognormal_md=ln_md,
            lognormal_fa=ln_fa,
            audio=audio,
            audio_sigma=g("audio", "sigma_m"),
            esn0_values=parse_floats(cp.get("audio", "esn0_values"), "esn0_values"),
            window_chips=g("audio", "window_chips"),
            n_values=parse_ints(cp.get("episode", "n_values"), "n_values"),
            x0_values=parse_ints(cp.get("episode", "x0_values"), "x0_values"),
            table4_n_values=parse_ints(cp.get("episode", "table4_n_values"), "table4_n_values"),
            k_y=g("episode", "k_y"),
            target=g("episode", "target"),
            table3_ratios=parse_ints(cp.get("episode", "table3_ratios"), "table3_ratios"),
            table3_x0_values=parse_ints(cp.get("episode", "table3_x0_values"), "table3_x0_values"),
            positions=parse_floats(cp.get("protocol", "positions"), "positions"),
            max_delay=g("protocol", "max_delay"),
            timestamp_noise=g("protocol", "timestamp_noise"),
            pose_b_distance=g("classifier", "pose_b_distance"),
            trials=trials,
            dsp_trials=min(cp.getint("run", "dsp_trials"), trials) if "trials" in overrides else cp.getint("run", "dsp_trials"),
            out=str(overrides.get("out", cp.get("run", "out"))),
            seed=seed,
        )
    except ConfigError:
        raise
    except (ValueError, ContactClassError) as exc:
        raise ConfigError(str(exc)) from exc
    if rc.audio_sigma <= 0 or rc.k_y <= 0 or rc.target <= 0 or rc.pose_b_distance <= 0:
        raise ConfigError("sigma_m, k_y, target and pose_b_distance must be positive")
    if rc.trials < 1 or rc.dsp_trials < 2:
        raise ConfigError("trials must be >= 1 and dsp_trials >= 2")
    if rc.max_delay < 0 or rc.timestamp_noise < 0:
        raise ConfigError("max_delay and timestamp_noise must be >= 0")
    if min(rc.table3_ratios) < 1 or min(rc.x0_values) < 1 or min(rc.n_values) < 1:
        raise ConfigError("ratios, n and x0 values must be >= 1")
    return rc


def load(path: Optional[str] = None, overrides: Optional[Mapping[str, object]] = None, environ=None) -> RunConfig:
    return build(read_layers(path, environ), overrides)
