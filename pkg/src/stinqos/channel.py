"""Topology, link budget, fading and SINR-to-(capacity, dispersion) mapping.

Power quantities are in dBm / dB at the interfaces and converted to the
linear domain (mW, ratio) before they are combined. Distances are in km,
carrier frequencies in GHz.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, DomainError

SPEED_OF_LIGHT_KM_S = 299_792.458
SECONDS_PER_CU = 1e-6
LOG2_E = math.log2(math.e)

# 20*log10(4*pi*1e3*1e9/c) with d in km and f in GHz
_FSPL_CONST_DB = 92.45


def db_to_linear(db):
    if np.ndim(db):
        return 10.0 ** (np.asarray(db, dtype=float) / 10.0)
    return 10.0 ** (float(db) / 10.0)


def linear_to_db(x):
    if np.ndim(x):
        return 10.0 * np.log10(np.asarray(x, dtype=float))
    return 10.0 * math.log10(x)


@dataclass(frozen=True)
class Topology:
    """Satellite above a destination at the origin, GBSs in an annulus around it."""

    satellite_altitude_km: float
    inner_radius_km: float
    outer_radius_km: float
    gbs_positions: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    destination: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not self.satellite_altitude_km > 0:
            raise ConfigError("satellite altitude must be positive")
        if not 0 < self.inner_radius_km < self.outer_radius_km:
            raise ConfigError("annulus radii must satisfy 0 < R_in < R_out")

    @property
    def gbs_count(self) -> int:
        return len(self.gbs_positions)

    def gbs_distances(self) -> np.ndarray:
        """Euclidean distance (km) from every GBS to the destination."""
        d = self.gbs_positions - np.asarray(self.destination)
        return np.hypot(d[:, 0], d[:, 1]) if len(d) else np.zeros(0)


def place_gbs(gbs_count: int, inner_radius_km: float, outer_radius_km: float,
              rng: np.random.Generator, satellite_altitude_km: float = 600.0) -> Topology:
    """Drop ``gbs_count`` GBSs uniformly by area over the annulus [R_in, R_out]."""
    if gbs_count < 0:
        raise ConfigError("gbs_count must be >= 0")
    if not 0 < inner_radius_km < outer_radius_km:
        raise ConfigError(
            f"annulus radii must satisfy 0 < R_in < R_out, got R_in={inner_radius_km}, "
            f"R_out={outer_radius_km}")
    u = rng.random(gbs_count)
    phi = rng.uniform(0.0, 2.0 * math.pi, gbs_count)
    r = np.sqrt(inner_radius_km**2 + u * (outer_radius_km**2 - inner_radius_km**2))
    # guard the closed interval against rounding at the edges
    r = np.clip(r, inner_radius_km, outer_radius_km)
    pos = np.column_stack([r * np.cos(phi), r * np.sin(phi)])
    return Topology(satellite_altitude_km, inner_radius_km, outer_radius_km, pos)


@dataclass(frozen=True)
class PathlossModel:
    """``free-space`` or ``log-distance`` anchored at free-space loss at ``ref_distance_km``."""

    kind: str = "free-space"
    exponent: float = 2.0
    ref_distance_km: float = 1.0

    def __post_init__(self):
        if self.kind not in ("free-space", "log-distance"):
            raise ConfigError(f"unknown pathloss model {self.kind!r}")
        if self.kind == "log-distance":
            if not self.exponent >= 2.0:
                raise ConfigError("log-distance exponent must be >= 2")
            if not self.ref_distance_km > 0:
                raise ConfigError("reference distance must be positive")


def free_space_pathloss_db(distance_km: float, frequency_ghz: float) -> float:
    if not distance_km > 0:
        raise DomainError(f"distance must be positive, got {distance_km}")
    if not frequency_ghz > 0:
        raise DomainError(f"frequency must be positive, got {frequency_ghz}")
    return 20.0 * math.log10(distance_km) + 20.0 * math.log10(frequency_ghz) + _FSPL_CONST_DB


def pathloss_db(distance_km: float, frequency_ghz: float,
                model: PathlossModel = PathlossModel()) -> float:
    if model.kind == "free-space":
        return free_space_pathloss_db(distance_km, frequency_ghz)
    if not distance_km > 0:
        raise DomainError(f"distance must be positive, got {distance_km}")
    ref = free_space_pathloss_db(model.ref_distance_km, frequency_ghz)
    return ref + 10.0 * model.exponent * math.log10(distance_km / model.ref_distance_km)


@dataclass(frozen=True)
class FadingModel:
    """Small-scale power-gain law.

    ``rayleigh`` and ``rician`` are normalized to unit mean power. The
    shadowed-Rician law is left unnormalized: its mean is ``2*b + omega``.
    """

    kind: str = "none"
    k_factor: float = 0.0
    b: float = 0.5
    m: float = 1.0
    omega: float = 1.0

    def __post_init__(self):
        if self.kind not in ("none", "rayleigh", "rician", "shadowed-rician"):
            raise ConfigError(f"unknown fading model {self.kind!r}")
        if self.kind == "rician" and not self.k_factor >= 0:
            raise ConfigError("Rician K factor must be >= 0")
        if self.kind == "shadowed-rician":
            if not self.m > 0:
                raise ConfigError("shadowed-Rician m must be > 0")
            if not (self.b > 0 and self.omega > 0):
                raise ConfigError("shadowed-Rician b and omega must be > 0")

    @classmethod
    def parse(cls, text: str) -> "FadingModel":
        """Build from ``none``, ``rayleigh``, ``rician:K`` or ``shadowed-rician:b,m,omega``."""
        kind, _, args = text.strip().partition(":")
        kind = kind.strip().lower()
        try:
            vals = [float(a) for a in args.split(",")] if args.strip() else []
            if kind == "rician":
                return cls(kind, k_factor=vals[0] if vals else 10.0)
            if kind == "shadowed-rician":
                b, m, omega = vals
                return cls(kind, b=b, m=m, omega=omega)
        except ValueError as exc:
            raise ConfigError(f"bad fading parameters in {text!r}") from exc
        if vals:
            raise ConfigError(f"fading model {kind!r} takes no parameters")
        return cls(kind)

    def __str__(self) -> str:
        if self.kind == "rician":
            return f"rician:{self.k_factor:g}"
        if self.kind == "shadowed-rician":
            return f"shadowed-rician:{self.b:g},{self.m:g},{self.omega:g}"
        return self.kind


def draw_fading(model: FadingModel, rng: np.random.Generator, size=None):
    """Draw linear power gain(s) under ``model``; a float when ``size`` is None."""
    if model.kind == "none":
        return 1.0 if size is None else np.ones(size)
    if model.kind == "rayleigh":
        return rng.exponential(1.0, size)
    if model.kind == "rician":
        k = model.k_factor
        los = math.sqrt(k / (k + 1.0))
        sigma = math.sqrt(0.5 / (k + 1.0))
        re = los + sigma * rng.standard_normal(size)
        im = sigma * rng.standard_normal(size)
        return re * re + im * im
    # shadowed-Rician: Nakagami-m LoS amplitude plus complex Gaussian scatter of power 2b
    los_power = rng.gamma(model.m, model.omega / model.m, size)
    phase = rng.uniform(0.0, 2.0 * math.pi, size)
    sigma = math.sqrt(model.b)
    re = np.sqrt(los_power) * np.cos(phase) + sigma * rng.standard_normal(size)
    im = np.sqrt(los_power) * np.sin(phase) + sigma * rng.standard_normal(size)
    out = re * re + im * im
    return float(out) if size is None else out


@dataclass(frozen=True)
class LinkParams:
    tx_power_dbm: float = 30.0
    antenna_gain_dbi: float = 20.0
    rx_gain_dbi: float = 0.0
    noise_power_dbm: float = -110.0
    carrier_frequency_ghz: float = 2.0
    pathloss: PathlossModel = PathlossModel()
    fading: FadingModel = FadingModel("rician", k_factor=10.0)

    def __post_init__(self):
        for name in ("tx_power_dbm", "antenna_gain_dbi", "rx_gain_dbi", "noise_power_dbm"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        if not self.carrier_frequency_ghz > 0:
            raise ConfigError("carrier frequency must be positive")


def sinr(link: LinkParams, serving_gain: float, pathloss: float,
         interference_powers: Sequence[float] = ()) -> float:
    """Linear SINR.

    ``pathloss`` is in dB and ``interference_powers`` are received powers
    in dBm; ``serving_gain`` is the linear fading gain of the serving link.
    """
    rx_dbm = link.tx_power_dbm + link.antenna_gain_dbi + link.rx_gain_dbi - pathloss
    signal_mw = 10.0 ** (rx_dbm / 10.0) * serving_gain
    noise_mw = 10.0 ** (link.noise_power_dbm / 10.0)
    interference_mw = sum(10.0 ** (p / 10.0) for p in interference_powers)
    return signal_mw / (noise_mw + interference_mw)


@dataclass(frozen=True)
class ChannelState:
    sinr: float
    capacity: float
    dispersion: float


def channel_state(snr: float) -> ChannelState:
    """Capacity (bits/cu) and dispersion (bits^2/cu) of a complex AWGN channel at ``snr``."""
    if not snr >= 0:
        raise DomainError(f"SINR must be non-negative, got {snr}")
    if math.isinf(snr):
        return ChannelState(snr, math.inf, LOG2_E**2)
    capacity = math.log2(1.0 + snr)
    dispersion = -math.expm1(-2.0 * math.log1p(snr)) * LOG2_E**2
    return ChannelState(snr, capacity, dispersion)


def propagation_cu(distance_km: float) -> int:
    """One-way propagation delay rounded to whole channel uses."""
    return int(round(distance_km / SPEED_OF_LIGHT_KM_S / SECONDS_PER_CU))


@dataclass(frozen=True)
class Link:
    """One hop of a delivery path.

    ``interferer_distances_km`` lists co-channel transmitters seen by this
    hop's receiver; each is active in a given round with probability
    ``interferer_activity`` and transmits with this link's power and gains.
    """

    name: str
    params: LinkParams
    distance_km: float
    interferer_distances_km: tuple[float, ...] = ()
    interferer_activity: float = 0.0

    @property
    def propagation_cu(self) -> int:
        return propagation_cu(self.distance_km)

    @property
    def mean_pathloss_db(self) -> float:
        p = self.params
        return pathloss_db(self.distance_km, p.carrier_frequency_ghz, p.pathloss)

    def mean_state(self) -> ChannelState:
        """Channel state at unit fading gain with no interference."""
        return channel_state(sinr(self.params, 1.0, self.mean_pathloss_db))

    def draw_state(self, rng: np.random.Generator) -> ChannelState:
        p = self.params
        gain = draw_fading(p.fading, rng)
        interference = []
        if self.interferer_activity > 0:
            for d in self.interferer_distances_km:
                if rng.random() < self.interferer_activity:
                    loss = pathloss_db(d, p.carrier_frequency_ghz, p.pathloss)
                    g = draw_fading(p.fading, rng)
                    if g > 0:
                        interference.append(p.tx_power_dbm + p.antenna_gain_dbi + p.rx_gain_dbi
                                            - loss + 10.0 * math.log10(g))
        return channel_state(sinr(p, gain, self.mean_pathloss_db, interference))
