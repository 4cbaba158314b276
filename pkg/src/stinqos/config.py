"""Scenario configuration: a flat dotted-key TOML file.

Example::

    seed = 7
    mode = "STIN"
    traffic.process = "periodic"
    traffic.rate = 20000
    coding.k = 256
    coding.n_hat = 128
    coding.L = 4

Every key not given falls back to the default listed in ``SCHEMA``.
Unknown keys are rejected. All times and thresholds are channel uses.
"""
from __future__ import annotations

import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .channel import FadingModel, LinkParams, PathlossModel
from .errors import ConfigError
from .fbc import CodingConfig
from .harq import HarqConfig
from .sim import ArrivalProcess, MODES, RadioConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

TX_POWER_SWEEP_RANGE_DBM = (10.0, 50.0)

_LINK_DEFAULTS = {
    "satellite_direct": dict(tx_power_dbm=30.0, antenna_gain_dbi=20.0, rx_gain_dbi=0.0,
                             noise_dbm=-110.0, frequency_ghz=2.0, pathloss="free-space",
                             pathloss_exponent=2.0, pathloss_ref_km=1.0, fading="rician:10"),
    "satellite_to_gbs": dict(tx_power_dbm=30.0, antenna_gain_dbi=20.0, rx_gain_dbi=10.0,
                             noise_dbm=-110.0, frequency_ghz=2.0, pathloss="free-space",
                             pathloss_exponent=2.0, pathloss_ref_km=1.0, fading="rician:10"),
    "terrestrial": dict(tx_power_dbm=23.0, antenna_gain_dbi=0.0, rx_gain_dbi=0.0,
                        noise_dbm=-110.0, frequency_ghz=2.0, pathloss="log-distance",
                        pathloss_exponent=3.0, pathloss_ref_km=1.0, fading="rayleigh"),
}

# key -> (type, default); a default of None means optional with no value
SCHEMA: dict[str, tuple[type, Any]] = {
    "seed": (int, 0),
    "mode": (str, "PSN"),
    "horizon_cu": (int, 10_000_000),
    "traffic.process": (str, "periodic"),
    "traffic.rate": (float, 20_000.0),
    "traffic.slot_cu": (int, 1),
    "coding.k": (float, 256.0),
    "coding.n_hat": (int, 128),
    "coding.L": (int, 4),
    "coding.n": (int, None),
    "coding.rate": (float, None),
    "harq.variant": (str, "standard"),
    "harq.margin": (float, 0.1),
    "harq.processing_cu": (int, 100),
    "topology.altitude_km": (float, 600.0),
    "topology.gbs_count": (int, 10),
    "topology.r_in_km": (float, 2.0),
    "topology.r_out_km": (float, 10.0),
    "radio.interferer_activity": (float, 0.0),
    "metrics.aoi_threshold_cu": (float, 30_000.0),
    "metrics.delay_threshold_cu": (float, 10_000.0),
    "metrics.tail_points": (int, 200),
    "metrics.window_lo": (float, 1e-4),
    "metrics.window_hi": (float, 1e-1),
    "metrics.mellin_s": (float, 2.0),
}
for _link, _vals in _LINK_DEFAULTS.items():
    for _k, _v in _vals.items():
        SCHEMA[f"radio.{_link}.{_k}"] = (type(_v), _v)


@dataclass(frozen=True)
class TopologyConfig:
    altitude_km: float = 600.0
    gbs_count: int = 10
    inner_radius_km: float = 2.0
    outer_radius_km: float = 10.0


@dataclass(frozen=True)
class MetricsConfig:
    aoi_threshold_cu: float = 30_000.0
    delay_threshold_cu: float = 10_000.0
    tail_points: int = 200
    window: tuple[float, float] = (1e-4, 1e-1)
    mellin_s: float = 2.0


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int
    mode: str
    horizon_cu: int
    traffic: ArrivalProcess
    coding: CodingConfig
    harq: HarqConfig
    topology: TopologyConfig
    radio: RadioConfig
    metrics: MetricsConfig
    flat: Mapping[str, Any] = field(default_factory=dict, compare=False, repr=False)
    warnings: tuple[str, ...] = field(default=(), compare=False, repr=False)

    def with_values(self, **dotted: Any) -> "ScenarioConfig":
        """Copy with keys replaced; pass dotted keys via ``**{"coding.L": 2}``."""
        values = dict(self.flat)
        values.update(dotted)
        return from_flat(values)


def flatten(tree: Mapping[str, Any], prefix: str = "") -> dict[str, Any]:
    out: dict[str, Any] = {}
    for k, v in tree.items():
        key = f"{prefix}{k}"
        if isinstance(v, Mapping):
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _coerce(key: str, value: Any) -> Any:
    typ, _ = SCHEMA[key]
    if typ is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if typ is int and isinstance(value, float) and value.is_integer():
        return int(value)
    if not isinstance(value, typ) or isinstance(value, bool):
        raise ConfigError(f"{key}: expected {typ.__name__}, got {value!r}")
    return value


def _link(values: Mapping[str, Any], name: str) -> LinkParams:
    g = lambda k: values[f"radio.{name}.{k}"]
    return LinkParams(
        tx_power_dbm=g("tx_power_dbm"),
        antenna_gain_dbi=g("antenna_gain_dbi"),
        rx_gain_dbi=g("rx_gain_dbi"),
        noise_power_dbm=g("noise_dbm"),
        carrier_frequency_ghz=g("frequency_ghz"),
        pathloss=PathlossModel(g("pathloss"), g("pathloss_exponent"), g("pathloss_ref_km")),
        fading=FadingModel.parse(g("fading")),
    )


def from_flat(given: Mapping[str, Any]) -> ScenarioConfig:
    """Validate dotted key/value pairs, apply defaults and build the scenario."""
    unknown = sorted(set(given) - set(SCHEMA))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    values = {k: d for k, (_, d) in SCHEMA.items()}
    for k, v in given.items():
        values[k] = None if v is None else _coerce(k, v)

    if values["mode"] not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {values['mode']!r}")
    if values["horizon_cu"] <= 0:
        raise ConfigError("horizon_cu must be positive")
    coding = CodingConfig(values["coding.k"], values["coding.n_hat"], values["coding.L"])
    n = values["coding.n"]
    if n is not None and n != coding.blocklength:
        raise ConfigError(
            f"coding.n = {n} violates n = L * n_hat ({coding.max_rounds} * "
            f"{coding.sub_blocklength} = {coding.blocklength})")
    harq = HarqConfig(coding, values["harq.variant"], values["harq.processing_cu"],
                      0, values["harq.margin"])
    if not 0 < values["topology.r_in_km"] < values["topology.r_out_km"]:
        raise ConfigError("topology radii must satisfy 0 < r_in_km < r_out_km")
    if values["topology.altitude_km"] <= 0:
        raise ConfigError("topology.altitude_km must be positive")
    if values["topology.gbs_count"] < 0:
        raise ConfigError("topology.gbs_count must be >= 0")
    if values["mode"] == "STIN" and values["topology.gbs_count"] < 1:
        raise ConfigError("STIN mode needs topology.gbs_count >= 1")
    topology = TopologyConfig(values["topology.altitude_km"], values["topology.gbs_count"],
                              values["topology.r_in_km"], values["topology.r_out_km"])
    radio = RadioConfig(_link(values, "satellite_direct"), _link(values, "satellite_to_gbs"),
                        _link(values, "terrestrial"), values["radio.interferer_activity"])
    lo, hi = values["metrics.window_lo"], values["metrics.window_hi"]
    if not 0 < lo < hi <= 1:
        raise ConfigError("metrics window must satisfy 0 < window_lo < window_hi <= 1")
    if values["metrics.tail_points"] < MIN_TAIL_POINTS:
        raise ConfigError(f"metrics.tail_points must be >= {MIN_TAIL_POINTS}")
    metrics = MetricsConfig(values["metrics.aoi_threshold_cu"],
                            values["metrics.delay_threshold_cu"],
                            values["metrics.tail_points"], (lo, hi), values["metrics.mellin_s"])
    traffic = ArrivalProcess(values["traffic.process"], values["traffic.rate"],
                             values["traffic.slot_cu"])

    warnings = []
    lo_p, hi_p = TX_POWER_SWEEP_RANGE_DBM
    for name in ("satellite_direct", "satellite_to_gbs"):
        p = values[f"radio.{name}.tx_power_dbm"]
        if not lo_p <= p <= hi_p:
            msg = f"radio.{name}.tx_power_dbm = {p} lies outside the usual [{lo_p}, {hi_p}] dBm range"
            log.warning(msg)
            warnings.append(msg)
    # n is derived; keep only the inputs so overrides of n_hat or L stay consistent
    flat = {k: v for k, v in values.items() if k != "coding.n"}
    return ScenarioConfig(values["seed"], values["mode"], values["horizon_cu"], traffic, coding,
                          harq, topology, radio, metrics, flat, tuple(warnings))


MIN_TAIL_POINTS = 8


def loads(text: str) -> ScenarioConfig:
    try:
        tree = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    return from_flat(flatten(tree))


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        return loads(text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _toml_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dumps(config: ScenarioConfig) -> str:
    """Resolved configuration, every key explicit, in sorted order."""
    lines = [f"{k} = {_toml_value(v)}" for k, v in sorted(config.flat.items()) if v is not None]
    return "\n".join(lines) + "\n"
