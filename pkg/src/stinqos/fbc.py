"""Finite-blocklength decoding error, HARQ-IR accumulation and the error-rate exponent.

Capacity terms are in bits (log2); exponents are in nats (natural log)
per channel use of the normalizing blocklength.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .channel import ChannelState
from .errors import ConfigError, DomainError

# |x| beyond this saturates Q(x) to exactly 0 or 1
Q_CLAMP = 38.0


@dataclass(frozen=True)
class CodingConfig:
    """A codeword of ``max_rounds * sub_blocklength`` channel uses carrying ``payload_bits``."""

    payload_bits: float
    sub_blocklength: int
    max_rounds: int

    def __post_init__(self):
        if not self.payload_bits >= 0:
            raise ConfigError("payload k must be >= 0 bits")
        if int(self.sub_blocklength) != self.sub_blocklength or self.sub_blocklength < 1:
            raise ConfigError("sub-blocklength must be a positive integer")
        if int(self.max_rounds) != self.max_rounds or self.max_rounds < 1:
            raise ConfigError("max rounds L must be a positive integer")

    @property
    def blocklength(self) -> int:
        return self.max_rounds * self.sub_blocklength

    @property
    def rate(self) -> float:
        """Coding rate of a single sub-codeword, bits per channel use."""
        return self.payload_bits / self.sub_blocklength


def q_function(x):
    """Gaussian upper-tail probability Q(x), saturated to 0/1 beyond +/-38."""
    if np.ndim(x):
        x = np.asarray(x, dtype=float)
        out = 0.5 * special.erfc(x / math.sqrt(2.0))
        out[x > Q_CLAMP] = 0.0
        out[x < -Q_CLAMP] = 1.0
        return out
    if x > Q_CLAMP:
        return 0.0
    if x < -Q_CLAMP:
        return 1.0
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def log_q_function(x: float) -> float:
    """Natural log of Q(x), accurate far into the tail (no saturation)."""
    return float(special.log_ndtr(-x))


def _argument(total_capacity: float, total_dispersion: float, k: float, n: float) -> float:
    return (total_capacity - k + 0.5 * math.log2(n)) / math.sqrt(total_dispersion)


def _step(total_capacity: float, k: float, n: float) -> float:
    return 0.0 if total_capacity + 0.5 * math.log2(n) >= k else 1.0


def decoding_error(n: int, k: float, state: ChannelState) -> float:
    """Normal-approximation block error of ``k`` bits over ``n`` channel uses."""
    if n < 1:
        raise DomainError(f"blocklength must be >= 1, got {n}")
    if k < 0:
        raise DomainError(f"payload must be >= 0, got {k}")
    if state.dispersion == 0:
        return _step(n * state.capacity, k, n)
    return q_function(_argument(n * state.capacity, n * state.dispersion, k, n))


def _accumulate(states: Sequence[ChannelState]) -> tuple[float, float]:
    if len(states) == 0:
        raise DomainError("HARQ-IR error needs at least one round")
    return (math.fsum(s.capacity for s in states), math.fsum(s.dispersion for s in states))


def harq_ir_error(states: Sequence[ChannelState], n_hat: int, k: float) -> float:
    """Error after combining ``len(states)`` sub-codewords of ``n_hat`` channel uses each.

    Mutual information and dispersion add across rounds; with one round
    this is exactly :func:`decoding_error`.
    """
    if n_hat < 1:
        raise DomainError(f"sub-blocklength must be >= 1, got {n_hat}")
    cap, disp = _accumulate(states)
    n_total = len(states) * n_hat
    if disp == 0:
        return _step(n_hat * cap, k, n_total)
    return q_function(_argument(n_hat * cap, n_hat * disp, k, n_total))


def log_harq_ir_error(states: Sequence[ChannelState], n_hat: int, k: float) -> float:
    """Natural log of :func:`harq_ir_error` without tail saturation (-inf for a sure success)."""
    cap, disp = _accumulate(states)
    n_total = len(states) * n_hat
    if disp == 0:
        return 0.0 if _step(n_hat * cap, k, n_total) else -math.inf
    return log_q_function(_argument(n_hat * cap, n_hat * disp, k, n_total))


def theta_from_error(eps: float, blocklength: float) -> float:
    """-ln(eps)/blocklength with +inf for eps=0 and 0 for eps=1."""
    if not 0 <= eps <= 1:
        raise DomainError(f"error probability must lie in [0, 1], got {eps}")
    if eps == 0:
        return math.inf
    if eps == 1:
        return 0.0
    return -math.log(eps) / blocklength


NORMALIZATIONS = ("sub_block", "codeword")


def error_exponent(n_hat: int, k: float, state: ChannelState, rounds: int = 1,
                   normalization: str = "sub_block") -> float:
    """Finite-length error-rate exponent in nats.

    With ``normalization="sub_block"`` the log-error is divided by ``n_hat``;
    ``"codeword"`` divides by the full ``rounds * n_hat`` instead. The log
    of the error is evaluated directly, so the exponent stays finite where
    the error probability itself saturates to 0.
    """
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
    log_eps = log_harq_ir_error([state] * rounds, n_hat, k)
    if log_eps == -math.inf:
        return math.inf
    if log_eps == 0.0:
        return 0.0
    scale = n_hat if normalization == "sub_block" else rounds * n_hat
    return -log_eps / scale


RateRule = Callable[[int, ChannelState], float]


def fixed_rate(fraction_of_capacity: float) -> RateRule:
    """Payload k = fraction * C * n_hat, i.e. a constant per-sub-codeword rate."""
    return lambda n_hat, state: fraction_of_capacity * state.capacity * n_hat


def fixed_payload(k: float) -> RateRule:
    return lambda n_hat, state: k


def theta_error_curve(n_hat_grid: Sequence[int], rate_rule: RateRule, state: ChannelState,
                      rounds: int, normalization: str = "sub_block") -> list[tuple[int, float]]:
    """(n_hat, theta_error) over an ascending grid with ``rounds`` identical HARQ rounds."""
    grid = list(n_hat_grid)
    if not grid:
        raise DomainError("blocklength grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise DomainError("blocklength grid must be strictly ascending")
    return [(n_hat, error_exponent(n_hat, rate_rule(n_hat, state), state, rounds, normalization))
            for n_hat in grid]
