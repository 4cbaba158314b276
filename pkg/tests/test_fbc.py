import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from stinqos.channel import channel_state
from stinqos.errors import ConfigError, DomainError
from stinqos.fbc import (
    CodingConfig, decoding_error, error_exponent, fixed_payload, fixed_rate, harq_ir_error,
    q_function, theta_error_curve, theta_from_error,
)

mpmath.mp.dps = 40


def q_quad(x) -> float:
    """Gaussian tail by direct quadrature of the density."""
    f = lambda t: mpmath.exp(-t * t / 2) / mpmath.sqrt(2 * mpmath.pi)
    return float(mpmath.quad(f, [x, mpmath.inf]))


def eps_oracle(n, k, snr) -> float:
    """Normal-approximation error evaluated end to end in high precision."""
    snr = mpmath.mpf(snr)
    c = mpmath.log(1 + snr, 2)
    v = (1 - (1 + snr) ** -2) * mpmath.log(mpmath.e, 2) ** 2
    arg = (n * c - k + mpmath.log(n, 2) / 2) / mpmath.sqrt(n * v)
    return q_quad(arg)


class TestQ:
    def test_zero(self):
        assert q_function(0.0) == 0.5

    def test_symmetry(self):
        assert q_function(1.3) + q_function(-1.3) == pytest.approx(1.0, abs=1e-15)

    def test_quantile(self):
        assert q_function(1.959964) == pytest.approx(q_quad(1.959964), abs=1e-12)
        assert abs(q_function(1.959964) - 0.025) < 1e-6

    @pytest.mark.parametrize("x", [-5.0, -1.0, 0.3, 2.5, 6.0, 9.0])
    def test_against_quadrature(self, x):
        assert abs(q_function(x) - q_quad(x)) <= 1e-12

    def test_saturation(self):
        assert q_function(38.5) == 0.0
        assert q_function(-38.5) == 1.0

    def test_vectorized(self):
        x = np.array([-40.0, 0.0, 40.0])
        np.testing.assert_array_equal(q_function(x), [1.0, 0.5, 0.0])


class TestDecodingError:
    def test_zero_payload(self):
        assert decoding_error(100, 0, channel_state(1.0)) < 1e-10

    def test_half_at_zero_argument(self):
        s = channel_state(1.0)
        k = 100 * s.capacity + 0.5 * math.log2(100)
        assert decoding_error(100, k, s) == pytest.approx(0.5, abs=1e-15)

    def test_worked_example(self):
        # sinr = 3.95: C = log2(4.95), V = (1 - 4.95^-2) log2(e)^2 ~ 1.9965
        s = channel_state(3.95)
        assert s.capacity == pytest.approx(2.30742, abs=1e-5)
        expected = eps_oracle(200, 400, 3.95)
        assert expected == pytest.approx(5.42e-4, rel=5e-3)
        assert decoding_error(200, 400, s) == pytest.approx(expected, abs=1e-12)

    def test_zero_dispersion_step(self):
        s0 = channel_state(0.0)
        assert decoding_error(16, 1, s0) == 0.0  # 0.5*log2(16) = 2 >= 1
        assert decoding_error(16, 5, s0) == 1.0

    def test_domain(self):
        with pytest.raises(DomainError):
            decoding_error(0, 10, channel_state(1.0))
        with pytest.raises(DomainError):
            decoding_error(10, -1, channel_state(1.0))

    @given(st.integers(1, 4000), st.floats(0, 5000), st.floats(0, 1e4))
    def test_in_unit_interval(self, n, k, snr):
        assert 0.0 <= decoding_error(n, k, channel_state(snr)) <= 1.0

    @given(st.integers(50, 3000), st.floats(1, 2000), st.floats(1, 500), st.floats(0.01, 100))
    def test_monotone_in_k(self, n, k, dk, snr):
        s = channel_state(snr)
        assert decoding_error(n, k + dk, s) >= decoding_error(n, k, s)

    @given(st.integers(50, 3000), st.floats(0, 2000), st.floats(0.001, 100), st.floats(0.01, 10))
    def test_monotone_in_sinr(self, n, extra, snr, bump):
        # holds whenever k >= 0.5*log2(n); below that the correction term alone decodes
        k = 0.5 * math.log2(n) + extra
        assert decoding_error(n, k, channel_state(snr * (1 + bump))) <= \
            decoding_error(n, k, channel_state(snr))

    @pytest.mark.parametrize("snr,frac", [(1.0, 0.8), (3.95, 0.9), (0.5, 0.7), (10.0, 0.95)])
    def test_decreasing_in_n_at_fixed_rate(self, snr, frac):
        s = channel_state(snr)
        grid = range(100, 3300, 100)
        eps = [decoding_error(n, frac * s.capacity * n, s) for n in grid]
        nz = [e for e in eps if e > 0]
        assert all(b < a for a, b in zip(nz, nz[1:]))
        assert all(e == 0 for e in eps[len(nz):])


class TestHarqIr:
    def test_single_round_is_decoding_error(self):
        s = channel_state(2.0)
        assert harq_ir_error([s], 300, 500) == decoding_error(300, 500, s)

    def test_two_identical_rounds(self):
        s = channel_state(1.0)
        # (600 - 500 + 0.5 log2 600) / sqrt(600 V)
        expected = q_quad((600 - 500 + 0.5 * math.log2(600)) / math.sqrt(600 * s.dispersion))
        assert expected == pytest.approx(3.15e-4, rel=2e-3)
        assert harq_ir_error([s, s], 300, 500) == pytest.approx(expected, abs=1e-12)

    def test_appending_round_lowers_error(self):
        prefix = [channel_state(0.5), channel_state(1.2)]
        extra = channel_state(0.8)
        assert harq_ir_error(prefix + [extra], 200, 600) < harq_ir_error(prefix, 200, 600)

    def test_empty(self):
        with pytest.raises(DomainError):
            harq_ir_error([], 100, 10)

    @pytest.mark.parametrize("l,n_hat,snr,k", [(2, 150, 1.0, 250), (4, 50, 0.7, 120),
                                               (3, 200, 3.95, 900), (8, 25, 2.0, 250)])
    def test_accumulation_consistency(self, l, n_hat, snr, k):
        s = channel_state(snr)
        assert abs(harq_ir_error([s] * l, n_hat, k) - decoding_error(l * n_hat, k, s)) <= 1e-12


class TestErrorExponent:
    def test_synthetic_inversions(self):
        assert theta_from_error(math.exp(-100), 100) == pytest.approx(1.0, rel=1e-14)
        assert theta_from_error(0.5, 100) == pytest.approx(math.log(2) / 100, rel=1e-14)
        assert theta_from_error(0.0, 10) == math.inf
        assert theta_from_error(1.0, 10) == 0.0

    def test_roundtrip(self):
        for snr, n_hat, k in [(1.0, 100, 80), (3.95, 200, 400), (0.5, 400, 200)]:
            s = channel_state(snr)
            eps = decoding_error(n_hat, k, s)
            th = error_exponent(n_hat, k, s)
            assert math.exp(-th * n_hat) == pytest.approx(eps, rel=1e-12)

    def test_decreasing_over_fixed_rate_sweep(self):
        s = channel_state(1.0)
        grid = list(range(100, 2001, 100))
        th = [t for _, t in theta_error_curve(grid, fixed_rate(0.8), s, 1)]
        assert all(b < a for a, b in zip(th, th[1:]))

    def test_codeword_normalization(self):
        s = channel_state(1.0)
        a = error_exponent(100, 80, s, rounds=4, normalization="sub_block")
        b = error_exponent(100, 80, s, rounds=4, normalization="codeword")
        assert a == pytest.approx(4 * b, rel=1e-14)

    def test_finite_beyond_q_saturation(self):
        s = channel_state(1.0)
        assert harq_ir_error([s] * 4, 2000, 1600) == 0.0
        assert math.isfinite(error_exponent(2000, 1600, s, rounds=4))


class TestThetaCurve:
    grid = [100, 200, 300, 400, 600, 800, 1000, 1400, 1700, 2000]

    def test_l1_equals_single_shot(self):
        s = channel_state(1.0)
        curve = theta_error_curve(self.grid, fixed_rate(0.8), s, 1)
        for n_hat, th in curve:
            assert th == error_exponent(n_hat, 0.8 * s.capacity * n_hat, s)

    def test_more_rounds_larger_exponent(self):
        s = channel_state(1.0)
        c2 = theta_error_curve(self.grid, fixed_rate(0.8), s, 2)
        c4 = theta_error_curve(self.grid, fixed_rate(0.8), s, 4)
        assert all(b >= a for (_, a), (_, b) in zip(c2, c4))

    def test_point_matches_standalone(self):
        s = channel_state(2.0)
        curve = dict(theta_error_curve(self.grid, fixed_payload(300), s, 2))
        eps = harq_ir_error([s, s], 400, 300)
        assert curve[400] == pytest.approx(-math.log(eps) / 400, rel=1e-12)

    def test_bad_grid(self):
        s = channel_state(1.0)
        with pytest.raises(DomainError):
            theta_error_curve([], fixed_rate(0.5), s, 1)
        with pytest.raises(DomainError):
            theta_error_curve([200, 100], fixed_rate(0.5), s, 1)


class TestCodingConfig:
    def test_blocklength(self):
        c = CodingConfig(256, 128, 4)
        assert c.blocklength == 512

    @pytest.mark.parametrize("k,nh,l", [(-1, 128, 4), (256, 0, 4), (256, 128, 0), (256, 12.5, 2)])
    def test_invalid(self, k, nh, l):
        with pytest.raises(ConfigError):
            CodingConfig(k, nh, l)
