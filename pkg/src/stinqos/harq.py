"""Stop-and-wait HARQ-IR and fast HARQ, round by round, with exact delay accounting.

All delays are integer channel uses. A round costs ``n_hat`` of transmission.
A decode attempt costs the processing delay plus two propagation legs
(forward sub-codeword, ACK/NACK back). Fast HARQ transmits rounds
``1..l0-1`` blind: one forward leg each, no decode and no feedback.

Decode outcomes use one uniform draw per HARQ run, compared against the
cumulative stagewise failure probability

    F_l = prod_{j<=l} min(1, eps_j / eps_{j-1}),   eps_0 = 1,

where ``eps_j`` is the accumulated HARQ-IR error after ``j`` sub-codewords.
This is the same law as one conditional Bernoulli draw per decode
attempt, but it couples runs that share a channel trace: the
standard/fast comparison and a larger ``L`` never turn a success into a
failure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Optional, Union

import numpy as np

from .channel import ChannelState
from .errors import ConfigError
from .fbc import CodingConfig, harq_ir_error

VARIANTS = ("standard", "fast")

ChannelSource = Union[Iterable[ChannelState], Callable[[], ChannelState]]


@dataclass(frozen=True)
class HarqConfig:
    coding: CodingConfig
    variant: str = "standard"
    processing_delay_cu: int = 100
    propagation_cu: int = 0
    l0_margin: float = 0.1

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"HARQ variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.processing_delay_cu < 0 or self.propagation_cu < 0:
            raise ConfigError("HARQ delays must be >= 0")
        if not self.l0_margin >= 0:
            raise ConfigError("l0 margin must be >= 0")


@dataclass(frozen=True)
class DelayBreakdown:
    queuing: int = 0
    transmission: int = 0
    processing: int = 0
    propagation: int = 0

    @property
    def total(self) -> int:
        return self.queuing + self.transmission + self.processing + self.propagation

    def __add__(self, other: "DelayBreakdown") -> "DelayBreakdown":
        return DelayBreakdown(self.queuing + other.queuing,
                              self.transmission + other.transmission,
                              self.processing + other.processing,
                              self.propagation + other.propagation)

    def with_queuing(self, queuing: int) -> "DelayBreakdown":
        return replace(self, queuing=queuing)


@dataclass(frozen=True)
class HarqOutcome:
    variant: str
    rounds_used: int
    success: bool
    per_round_states: tuple[ChannelState, ...]
    l0: Optional[int]
    decode_attempts: int
    propagation_legs: int
    delay: DelayBreakdown


def _source(channel_draws: ChannelSource) -> Callable[[], ChannelState]:
    if callable(channel_draws):
        return channel_draws
    it = iter(channel_draws)
    return lambda: next(it)


def estimate_rounds_l0(first_state: ChannelState, coding: CodingConfig, margin: float = 0.1) -> int:
    """Smallest l with l * n_hat * C_1 >= k * (1 + margin), clamped to L."""
    need = coding.payload_bits * (1.0 + margin)
    per_round = coding.sub_blocklength * first_state.capacity
    if per_round <= 0:
        return coding.max_rounds
    # ceil with a guard against the quotient landing a hair above an integer
    l0 = max(1, math.ceil(need / per_round - 1e-12))
    while l0 > 1 and (l0 - 1) * per_round >= need:
        l0 -= 1
    return min(l0, coding.max_rounds)


class _FailureChain:
    """Running cumulative stagewise failure probability F_l."""

    def __init__(self, coding: CodingConfig):
        self.coding = coding
        self.prev_eps = 1.0
        self.value = 1.0

    def push(self, states: list[ChannelState]) -> float:
        eps = harq_ir_error(states, self.coding.sub_blocklength, self.coding.payload_bits)
        if self.prev_eps <= 0.0:
            self.value = 0.0
        else:
            self.value *= min(1.0, eps / self.prev_eps)
        self.prev_eps = eps
        return self.value


def delay_breakdown(outcome: HarqOutcome, cfg: HarqConfig) -> DelayBreakdown:
    """Transmission, processing and propagation of one HARQ run; queuing is left at zero."""
    return DelayBreakdown(
        queuing=0,
        transmission=outcome.rounds_used * cfg.coding.sub_blocklength,
        processing=outcome.decode_attempts * cfg.processing_delay_cu,
        propagation=outcome.propagation_legs * cfg.propagation_cu,
    )


def _finish(cfg, rounds, success, states, l0, attempts, legs) -> HarqOutcome:
    out = HarqOutcome(cfg.variant, rounds, success, tuple(states), l0, attempts, legs,
                      DelayBreakdown())
    return replace(out, delay=delay_breakdown(out, cfg))


def run_standard_harq(channel_draws: ChannelSource, cfg: HarqConfig,
                      rng: np.random.Generator) -> HarqOutcome:
    """Decode after every round until an ACK or ``L`` rounds."""
    draw = _source(channel_draws)
    chain = _FailureChain(cfg.coding)
    u = rng.random()
    states: list[ChannelState] = []
    for rnd in range(1, cfg.coding.max_rounds + 1):
        states.append(draw())
        if u >= chain.push(states):
            return _finish(cfg, rnd, True, states, None, rnd, 2 * rnd)
    rounds = cfg.coding.max_rounds
    return _finish(cfg, rounds, False, states, None, rounds, 2 * rounds)


def run_fast_harq(channel_draws: ChannelSource, cfg: HarqConfig,
                  rng: np.random.Generator) -> HarqOutcome:
    """Blind rounds up to the estimated ``l0``, then standard decode-and-feedback rounds."""
    draw = _source(channel_draws)
    chain = _FailureChain(cfg.coding)
    u = rng.random()
    states = [draw()]
    l0 = estimate_rounds_l0(states[0], cfg.coding, cfg.l0_margin)
    chain.push(states)
    for _ in range(1, l0):
        states.append(draw())
        chain.push(states)
    for rnd in range(l0, cfg.coding.max_rounds + 1):
        if rnd > l0:
            states.append(draw())
            chain.push(states)
        attempts = rnd - l0 + 1
        if u >= chain.value:
            return _finish(cfg, rnd, True, states, l0, attempts, (l0 - 1) + 2 * attempts)
    rounds = cfg.coding.max_rounds
    attempts = rounds - l0 + 1
    return _finish(cfg, rounds, False, states, l0, attempts, (l0 - 1) + 2 * attempts)


def run_harq(channel_draws: ChannelSource, cfg: HarqConfig, rng: np.random.Generator) -> HarqOutcome:
    if cfg.variant == "fast":
        return run_fast_harq(channel_draws, cfg, rng)
    return run_standard_harq(channel_draws, cfg, rng)

