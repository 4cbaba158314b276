"""Discrete-event engine for status updates over STIN / PSN paths.

The satellite holds one FCFS queue with an infinite buffer. Serving an
update means running HARQ on each hop of the path in order. A hop must
succeed before the next one starts, and the server is busy until the
last hop's final ACK/NACK leg. Updates whose HARQ is exhausted on any
hop are dropped and never reset the age.

Time is integer channel uses (cu).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Optional, Sequence, TextIO

import numpy as np

from .channel import FadingModel, Link, LinkParams, PathlossModel, Topology, place_gbs
from .errors import ConfigError
from .harq import DelayBreakdown, HarqOutcome, run_harq

if TYPE_CHECKING:
    from .config import ScenarioConfig

MODES = ("STIN", "PSN")
ARRIVAL_KINDS = ("periodic", "poisson", "bernoulli")


@dataclass(frozen=True)
class ArrivalProcess:
    """Update generation law.

    ``rate`` is the period T (cu) for ``periodic``, the intensity per cu
    for ``poisson`` and the per-slot probability for ``bernoulli``.
    """

    kind: str = "periodic"
    rate: float = 20_000
    slot_cu: int = 1

    def __post_init__(self):
        if self.kind not in ARRIVAL_KINDS:
            raise ConfigError(f"traffic process must be one of {ARRIVAL_KINDS}, got {self.kind!r}")
        if self.kind == "bernoulli":
            if not 0 <= self.rate <= 1:
                raise ConfigError("bernoulli probability must lie in [0, 1]")
        elif not self.rate > 0:
            raise ConfigError(f"{self.kind} rate/period must be positive")
        if self.slot_cu < 1:
            raise ConfigError("slot length must be >= 1 cu")


@dataclass(frozen=True)
class StatusUpdate:
    id: int
    generated_at: int
    payload_bits: float


def generate_arrivals(process: ArrivalProcess, horizon: int, rng: np.random.Generator,
                      payload_bits: float = 256) -> list[StatusUpdate]:
    """Generation instants in [0, horizon), sorted, as status updates with increasing ids."""
    if not horizon > 0:
        raise ConfigError("horizon must be positive")
    if process.kind == "periodic":
        times = np.arange(0, horizon, process.rate)
    elif process.kind == "poisson":
        # Poisson count then uniform order statistics
        count = rng.poisson(process.rate * horizon)
        times = np.sort(rng.uniform(0.0, horizon, count))
    else:
        times = _bernoulli_slots(process.rate, math.ceil(horizon / process.slot_cu), rng)
        times = times * process.slot_cu
    times = np.floor(times).astype(np.int64)
    times = times[times < horizon]
    return [StatusUpdate(i, int(t), payload_bits) for i, t in enumerate(times)]


def _bernoulli_slots(p: float, slots: int, rng: np.random.Generator) -> np.ndarray:
    if p == 0:
        return np.zeros(0, dtype=np.int64)
    chunks = []
    last = -1
    batch = max(16, int(1.2 * p * slots) + 16)
    while last < slots:
        gaps = rng.geometric(p, batch)
        idx = last + np.cumsum(gaps)
        chunks.append(idx)
        last = int(idx[-1])
    idx = np.concatenate(chunks)
    return idx[idx < slots]


@dataclass(frozen=True)
class RadioConfig:
    """Link parameters for the three hop types plus terrestrial interference activity."""

    satellite_direct: LinkParams = LinkParams()
    satellite_to_gbs: LinkParams = LinkParams(rx_gain_dbi=10.0)
    terrestrial: LinkParams = LinkParams(
        tx_power_dbm=23.0, antenna_gain_dbi=0.0, rx_gain_dbi=0.0,
        pathloss=PathlossModel("log-distance", exponent=3.0, ref_distance_km=1.0),
        fading=FadingModel("rayleigh"))
    interferer_activity: float = 0.0

    def __post_init__(self):
        if not 0 <= self.interferer_activity <= 1:
            raise ConfigError("interferer activity must lie in [0, 1]")


def select_path(topology: Topology, mode: str, radio: RadioConfig = RadioConfig()) -> list[Link]:
    """Hops from the satellite to the destination.

    PSN is the direct satellite link. STIN relays through the GBS nearest
    to the destination (lowest index on ties); the other GBSs are the
    terrestrial hop's potential interferers.
    """
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    altitude = topology.satellite_altitude_km
    if mode == "PSN":
        return [Link("satellite-destination", radio.satellite_direct, altitude)]
    if topology.gbs_count < 1:
        raise ConfigError("STIN needs at least one GBS")
    dist = topology.gbs_distances()
    relay = int(np.argmin(dist))  # first occurrence on ties
    others = tuple(float(d) for i, d in enumerate(dist) if i != relay)
    return [
        Link("satellite-gbs", radio.satellite_to_gbs, altitude),
        Link("gbs-destination", radio.terrestrial, float(dist[relay]), others,
             radio.interferer_activity),
    ]


@dataclass(frozen=True)
class Delivery:
    id: int
    generated_at: int
    delivered_at: int
    outcomes: tuple[HarqOutcome, ...]
    delay: DelayBreakdown

    @property
    def rounds(self) -> int:
        return sum(o.rounds_used for o in self.outcomes)

    @property
    def l0(self) -> int:
        return sum(o.l0 or 0 for o in self.outcomes)


@dataclass
class SimTrace:
    deliveries: list[Delivery]
    dropped: list[int]
    horizon: int
    arrival_times: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    queue_lengths: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    service_times: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def updates_served(self) -> int:
        return len(self.deliveries) + len(self.dropped)

    @property
    def drop_rate(self) -> float:
        n = self.updates_served
        return len(self.dropped) / n if n else 0.0

    def total_delays(self) -> np.ndarray:
        return np.array([d.delay.total for d in self.deliveries], dtype=np.int64)


def simulate(scenario: "ScenarioConfig") -> SimTrace:
    """Run one scenario to completion; bit-identical for identical configs."""
    topo_seq, arrival_seq, hop_seq = np.random.SeedSequence(scenario.seed).spawn(3)
    topo = scenario.topology
    topology = place_gbs(topo.gbs_count, topo.inner_radius_km, topo.outer_radius_km,
                         np.random.default_rng(topo_seq), topo.altitude_km)
    path = select_path(topology, scenario.mode, scenario.radio)
    updates = generate_arrivals(scenario.traffic, scenario.horizon_cu,
                                np.random.default_rng(arrival_seq),
                                scenario.coding.payload_bits)
    hops = []
    for link, seq in zip(path, hop_seq.spawn(len(path))):
        cfg = replace(scenario.harq, propagation_cu=link.propagation_cu)
        hops.append((link, cfg, np.random.default_rng(seq)))
    return _serve(updates, hops, scenario.horizon_cu)


def simulate_path(updates: Sequence[StatusUpdate], hops, horizon: int) -> SimTrace:
    """Serve pre-built updates over explicit ``(link, harq_cfg, rng)`` hops."""
    return _serve(updates, hops, horizon)


def _serve(updates, hops, horizon) -> SimTrace:
    deliveries: list[Delivery] = []
    dropped: list[int] = []
    departures = np.empty(len(updates), dtype=np.int64)
    service = np.empty(len(updates), dtype=np.int64)
    server_free = 0
    for i, upd in enumerate(updates):
        start = max(upd.generated_at, server_free)
        delay = DelayBreakdown(queuing=start - upd.generated_at)
        outcomes = []
        ok = True
        for link, cfg, rng in hops:
            out = run_harq(lambda: link.draw_state(rng), cfg, rng)
            outcomes.append(out)
            delay = delay + out.delay
            if not out.success:
                ok = False
                break
        end = upd.generated_at + delay.total
        server_free = end
        departures[i] = end
        service[i] = end - start
        if ok:
            deliveries.append(Delivery(upd.id, upd.generated_at, end, tuple(outcomes), delay))
        else:
            dropped.append(upd.id)
    arrivals = np.array([u.generated_at for u in updates], dtype=np.int64)
    # departures are non-decreasing under FCFS, so earlier updates still present
    # at an arrival are those with departure strictly after it
    left = np.searchsorted(departures, arrivals, side="right")
    in_system = np.arange(len(updates)) - np.minimum(left, np.arange(len(updates)))
    return SimTrace(deliveries, dropped, horizon, arrivals, in_system, service)


@dataclass(frozen=True)
class AoiTrajectory:
    """Piecewise-linear age process.

    ``breakpoints`` is an (m, 2) array of (time, age); each delivery adds
    a pre-reset and a post-reset point at the same time. ``peaks`` holds
    the pre-reset ages of every delivery after the first.
    """

    breakpoints: np.ndarray
    peaks: np.ndarray
    peak_ids: np.ndarray

    def time_average(self) -> float:
        t, a = self.breakpoints[:, 0], self.breakpoints[:, 1]
        span = t[-1] - t[0]
        if span <= 0:
            return 0.0
        area = float(np.sum(np.diff(t) * (a[1:] + a[:-1]) / 2.0))
        return area / span


def aoi_trajectory(trace: SimTrace) -> AoiTrajectory:
    points = [(0, 0)]
    peaks, ids = [], []
    last_gen = 0
    for j, d in enumerate(trace.deliveries):
        pre = d.delivered_at - last_gen
        points.append((d.delivered_at, pre))
        points.append((d.delivered_at, d.delivered_at - d.generated_at))
        if j > 0:
            peaks.append(pre)
            ids.append(d.id)
        last_gen = d.generated_at
    t_last = points[-1][0]
    end = max(trace.horizon, t_last)
    if end > t_last:
        points.append((end, end - last_gen))
    return AoiTrajectory(np.array(points, dtype=np.int64).reshape(-1, 2),
                         np.array(peaks, dtype=np.int64), np.array(ids, dtype=np.int64))


TRACE_COLUMNS = ("id", "generated_at_cu", "delivered_at_cu", "rounds", "l0", "queuing_cu",
                 "transmission_cu", "processing_cu", "propagation_cu", "total_cu", "peak_aoi_cu")


def write_trace_csv(trace: SimTrace, fh: TextIO, aoi: Optional[AoiTrajectory] = None) -> None:
    """One row per delivery; ``peak_aoi_cu`` is empty for the first delivery."""
    aoi = aoi if aoi is not None else aoi_trajectory(trace)
    peak_by_id = dict(zip(aoi.peak_ids.tolist(), aoi.peaks.tolist()))
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for d in trace.deliveries:
        b = d.delay
        w.writerow([d.id, d.generated_at, d.delivered_at, d.rounds, d.l0, b.queuing,
                    b.transmission, b.processing, b.propagation, b.total,
                    peak_by_id.get(d.id, "")])
