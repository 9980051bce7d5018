"""Experiment configuration: dataclasses, JSON I/O, and --set overrides."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .agdao import AdamHyper
from .ekf import EkfConfig
from .geometry import SPEED_OF_LIGHT, ArrayGeometry, PathlossModel
from .motion import MotionNoise, MotionState
from .signals import NoiseConfig

METHODS = ("opt", "ff", "fd", "agdao", "ekf")


class ConfigError(ValueError):
    """Invalid configuration; carries the offending field path."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class SystemConfig:
    """Physical layer: array, carrier, frame timing, powers, reflection."""

    num_antennas: int = 512
    carrier_freq_hz: float = 30.0e9
    spacing_m: float | None = None      # None means half a wavelength
    symbol_duration_s: float = 1.0e-5
    symbols_per_cpi: int = 10
    tx_power_dbm: float = 30.0
    comm_noise_power: float = 1.0e-8
    echo_noise_power: float = 1.0e-8
    ref_gain: float = 1.0
    rcs: float = 1.0
    include_transmit_power: bool = True
    signed_projection: bool = False

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq_hz

    @property
    def spacing(self) -> float:
        return self.wavelength_m / 2.0 if self.spacing_m is None else self.spacing_m

    @property
    def cpi_duration_s(self) -> float:
        return self.symbols_per_cpi * self.symbol_duration_s

    @property
    def tx_power_w(self) -> float:
        return dbm_to_watts(self.tx_power_dbm)

    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry(
            num_antennas=self.num_antennas,
            spacing=self.spacing,
            wavelength=self.wavelength_m,
        )

    def pathloss_model(self) -> PathlossModel:
        return PathlossModel(ref_gain=self.ref_gain, rcs=self.rcs)

    def noise(self) -> NoiseConfig:
        return NoiseConfig(
            comm_noise_power=self.comm_noise_power,
            echo_noise_power=self.echo_noise_power,
        )


@dataclass(frozen=True)
class ExperimentConfig:
    """A full tracking experiment over num_cpis CPIs."""

    system: SystemConfig = SystemConfig()
    method: str = "ekf"
    num_cpis: int = 2000
    seed: int = 0
    initial_state: tuple[float, float, float, float] = (5.0, 10.0, 8.0, 7.0)
    motion_var: tuple[float, float] = (0.01, 0.01)
    feedback_period_s: float = 0.1
    adam: AdamHyper = AdamHyper()
    ekf_init_cov: float = 0.1
    convergence_state: tuple[float, float, float, float] = (0.0, 10.0, 8.0, 7.0)
    convergence_v_init: tuple[float, float] = (0.0, 0.0)
    ma_window: int = 20

    @property
    def state0(self) -> MotionState:
        return MotionState(*self.initial_state)

    @property
    def motion_noise(self) -> MotionNoise:
        return MotionNoise(var_vx=self.motion_var[0], var_vy=self.motion_var[1])

    @property
    def feedback_period_cpis(self) -> int:
        return round(self.feedback_period_s / self.system.cpi_duration_s)

    def ekf_config(self) -> EkfConfig:
        return EkfConfig(
            process_noise=self.motion_noise,
            echo_noise_power=self.system.echo_noise_power,
            init_cov=self.ekf_init_cov,
        )


def _check(cond: bool, field: str, message: str) -> None:
    if not cond:
        raise ConfigError(field, message)


def _as_int(value, field: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(field, f"expected an integer, got {value!r}")
    return value


def _as_float(value, field: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(field, f"expected a number, got {value!r}")
    return float(value)


def _as_bool(value, field: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(field, f"expected true/false, got {value!r}")
    return value


def _as_tuple(value, length: int, field: str) -> tuple[float, ...]:
    if not isinstance(value, (list, tuple)) or len(value) != length:
        raise ConfigError(field, f"expected a list of {length} numbers, got {value!r}")
    return tuple(_as_float(v, field) for v in value)


def _take(section: dict, defaults, prefix: str):
    """Pop known keys from a dict of overrides for one dataclass."""
    unknown = set(section) - {f.name for f in dataclasses.fields(defaults)}
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"{prefix}{key}", "unknown key")
    return section


def system_from_dict(raw: dict) -> SystemConfig:
    defaults = SystemConfig()
    raw = _take(dict(raw), defaults, "system.")
    kwargs = {}
    if "num_antennas" in raw:
        kwargs["num_antennas"] = _as_int(raw["num_antennas"], "system.num_antennas")
    for name in (
        "carrier_freq_hz", "symbol_duration_s", "tx_power_dbm", "comm_noise_power",
        "echo_noise_power", "ref_gain", "rcs",
    ):
        if name in raw:
            kwargs[name] = _as_float(raw[name], f"system.{name}")
    if "spacing_m" in raw and raw["spacing_m"] is not None:
        kwargs["spacing_m"] = _as_float(raw["spacing_m"], "system.spacing_m")
    if "symbols_per_cpi" in raw:
        kwargs["symbols_per_cpi"] = _as_int(raw["symbols_per_cpi"], "system.symbols_per_cpi")
    for name in ("include_transmit_power", "signed_projection"):
        if name in raw:
            kwargs[name] = _as_bool(raw[name], f"system.{name}")
    cfg = dataclasses.replace(defaults, **kwargs)
    _check(cfg.num_antennas >= 1, "system.num_antennas", "must be >= 1")
    _check(cfg.carrier_freq_hz > 0, "system.carrier_freq_hz", "must be positive")
    _check(cfg.spacing > 0, "system.spacing_m", "must be positive")
    _check(cfg.symbol_duration_s > 0, "system.symbol_duration_s", "must be positive")
    _check(cfg.symbols_per_cpi >= 1, "system.symbols_per_cpi", "must be >= 1")
    _check(cfg.comm_noise_power > 0, "system.comm_noise_power", "must be positive")
    _check(cfg.echo_noise_power >= 0, "system.echo_noise_power", "must be nonnegative")
    _check(cfg.ref_gain > 0, "system.ref_gain", "must be positive")
    _check(cfg.rcs > 0, "system.rcs", "must be positive")
    return cfg


def adam_from_dict(raw: dict) -> AdamHyper:
    defaults = AdamHyper()
    raw = _take(dict(raw), defaults, "adam.")
    kwargs = {}
    for f in dataclasses.fields(AdamHyper):
        if f.name not in raw:
            continue
        if f.name == "max_iters":
            kwargs[f.name] = _as_int(raw[f.name], "adam.max_iters")
        else:
            kwargs[f.name] = _as_float(raw[f.name], f"adam.{f.name}")
    try:
        return dataclasses.replace(defaults, **kwargs)
    except ValueError as exc:
        raise ConfigError("adam", str(exc)) from exc


def experiment_from_dict(raw: dict) -> ExperimentConfig:
    defaults = ExperimentConfig()
    raw = _take(dict(raw), defaults, "")
    kwargs = {}
    if "system" in raw:
        if not isinstance(raw["system"], dict):
            raise ConfigError("system", f"expected an object, got {raw['system']!r}")
        kwargs["system"] = system_from_dict(raw["system"])
    if "adam" in raw:
        if not isinstance(raw["adam"], dict):
            raise ConfigError("adam", f"expected an object, got {raw['adam']!r}")
        kwargs["adam"] = adam_from_dict(raw["adam"])
    if "method" in raw:
        if raw["method"] not in METHODS:
            raise ConfigError("method", f"must be one of {list(METHODS)}, got {raw['method']!r}")
        kwargs["method"] = raw["method"]
    for name in ("num_cpis", "seed", "ma_window"):
        if name in raw:
            kwargs[name] = _as_int(raw[name], name)
    for name in ("feedback_period_s", "ekf_init_cov"):
        if name in raw:
            kwargs[name] = _as_float(raw[name], name)
    if "initial_state" in raw:
        kwargs["initial_state"] = _as_tuple(raw["initial_state"], 4, "initial_state")
    if "convergence_state" in raw:
        kwargs["convergence_state"] = _as_tuple(raw["convergence_state"], 4, "convergence_state")
    if "convergence_v_init" in raw:
        kwargs["convergence_v_init"] = _as_tuple(raw["convergence_v_init"], 2, "convergence_v_init")
    if "motion_var" in raw:
        mv = _as_tuple(raw["motion_var"], 2, "motion_var")
        _check(mv[0] >= 0 and mv[1] >= 0, "motion_var", "must be nonnegative")
        kwargs["motion_var"] = mv
    cfg = dataclasses.replace(defaults, **kwargs)
    _check(cfg.num_cpis >= 1, "num_cpis", "must be >= 1")
    _check(cfg.seed >= 0, "seed", "must be nonnegative")
    _check(cfg.ma_window >= 1, "ma_window", "must be >= 1")
    _check(cfg.ekf_init_cov > 0, "ekf_init_cov", "must be positive")
    _check(
        cfg.feedback_period_cpis >= 1,
        "feedback_period_s",
        f"must cover at least one CPI ({cfg.system.cpi_duration_s} s)",
    )
    return cfg


def experiment_to_dict(cfg: ExperimentConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["initial_state"] = list(cfg.initial_state)
    d["convergence_state"] = list(cfg.convergence_state)
    d["convergence_v_init"] = list(cfg.convergence_v_init)
    d["motion_var"] = list(cfg.motion_var)
    return d


def load_config(path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config", "top level must be a JSON object")
    return experiment_from_dict(raw)


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(json.dumps(experiment_to_dict(cfg), indent=2) + "\n")


def _parse_override_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, assignments: list[str]) -> dict:
    """Apply key=value assignments with dotted paths, e.g. system.num_antennas=128."""
    out = json.loads(json.dumps(raw))  # deep copy, JSON types only
    for item in assignments:
        if "=" not in item:
            raise ConfigError("set", f"expected key=value, got {item!r}")
        key, _, text = item.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError("set", f"empty key in {item!r}")
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(key, f"{part} is not an object")
        node[parts[-1]] = _parse_override_value(text.strip())
    return out


def build_config(
    config_path=None, assignments: list[str] | None = None, **direct
) -> ExperimentConfig:
    """Config file (or defaults), then --set overrides, then direct kwargs."""
    raw = {}
    if config_path is not None:
        try:
            raw = json.loads(Path(config_path).read_text())
        except OSError as exc:
            raise ConfigError("config", f"cannot read {config_path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON in {config_path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config", "top level must be a JSON object")
    if assignments:
        raw = apply_overrides(raw, assignments)
    for key, value in direct.items():
        if value is not None:
            raw[key] = value
    return experiment_from_dict(raw)
