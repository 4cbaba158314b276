import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stinqos.channel import FadingModel, Link, LinkParams
from stinqos.errors import DomainError, InsufficientDataError
from stinqos.fbc import CodingConfig
from stinqos.harq import HarqConfig
from stinqos.metrics import (
    FIT_COLUMNS, FitRecord, QosExponentEstimate, delay_violation, empirical_tail,
    fit_peak_aoi_exponent, fit_qos_exponent, fit_tail_exponent, fmt, mean_ci, mellin,
    peak_aoi_violation, queue_length_violation, tail_thresholds, write_fits_csv,
)
from stinqos.sim import ArrivalProcess, generate_arrivals, simulate_path


class TestEmpiricalTail:
    def test_counting(self):
        np.testing.assert_allclose(empirical_tail([1, 2, 3], [0, 2.5]), [1.0, 1 / 3])

    def test_below_min(self):
        assert empirical_tail([5, 6], [-1.0])[0] == 1.0

    def test_strict(self):
        assert empirical_tail([1, 2, 2, 3], [2])[0] == 0.25

    def test_empty(self):
        with pytest.raises(DomainError):
            empirical_tail([], [1.0])

    def test_exponential(self):
        x = np.random.default_rng(0).exponential(1.0, 100_000)
        p = math.exp(-3)
        assert abs(empirical_tail(x, [3.0])[0] - p) <= 3 * math.sqrt(p * (1 - p) / x.size)

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50),
           st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=20))
    def test_non_increasing(self, samples, thresholds):
        p = empirical_tail(samples, sorted(thresholds))
        assert np.all(np.diff(p) <= 0)
        assert np.all((p >= 0) & (p <= 1))


class TestFit:
    def test_noiseless(self):
        t = np.linspace(1, 15, 40)
        est = fit_qos_exponent(t, np.exp(-0.5 * t))
        assert abs(est.theta - 0.5) <= 1e-10
        assert abs(est.r_squared - 1.0) <= 1e-10
        assert est.valid
        lo, hi = est.fit_window
        assert lo < hi
        assert np.all(np.exp(-0.5 * np.array([lo, hi])) >= 1e-4 - 1e-15)

    def test_exponential_samples(self):
        x = np.random.default_rng(1).exponential(2.0, 1_000_000)
        est = fit_tail_exponent(x)
        assert est.theta == pytest.approx(0.5, rel=0.05)
        assert est.n_samples == 1_000_000

    def test_constant_probs_invalid(self):
        est = fit_qos_exponent(np.arange(10.0), np.full(10, 0.05))
        assert est.theta == 0 and not est.valid

    def test_insufficient(self):
        with pytest.raises(InsufficientDataError) as info:
            fit_qos_exponent([1.0, 2.0, 3.0, 4.0], [0.5, 0.05, 0.01, 0.0])
        assert info.value.usable == 2

    def test_custom_window(self):
        t = np.linspace(0, 10, 21)
        p = np.exp(-t)
        est = fit_qos_exponent(t, p, window_rule=lambda tt, pp: tt >= 5)
        assert est.fit_window == (5.0, 10.0)
        assert est.theta == pytest.approx(1.0, abs=1e-10)

    def test_predict(self):
        t = np.linspace(1, 10, 20)
        est = fit_qos_exponent(t, 0.3 * np.exp(-0.7 * t))
        np.testing.assert_allclose(est.predict(t), 0.3 * np.exp(-0.7 * t), rtol=1e-9)

    def test_bootstrap_within_two_std_errors(self):
        inside = total = 0
        for seed in range(4):
            rng = np.random.default_rng(seed)
            x = rng.exponential(2.0, 10_000)
            thr = tail_thresholds(x)
            ref = fit_tail_exponent(x, thr)
            for _ in range(200):
                th = fit_tail_exponent(rng.choice(x, x.size), thr).theta
                inside += abs(th - ref.theta) <= 2 * ref.std_error
                total += 1
        assert inside / total >= 0.95

    def test_scale(self):
        x = np.random.default_rng(2).exponential(1000.0, 200_000)
        a = fit_tail_exponent(x)
        b = fit_tail_exponent(x, scale=1000.0)
        assert b.theta == pytest.approx(1000 * a.theta, rel=1e-9)


class TestViolations:
    def test_peak_all_below(self):
        assert peak_aoi_violation([1, 2, 3], 10, 7) == 0.0

    @pytest.mark.parametrize("n", [1, 3, 128, 10**6])
    def test_peak_scale_cancels(self, n):
        assert peak_aoi_violation([10, 30], 20, n) == 0.5

    def test_peak_errors(self):
        with pytest.raises(DomainError):
            peak_aoi_violation([], 5, 1)
        with pytest.raises(DomainError):
            peak_aoi_violation([1], 5, 0)

    def test_definition_two_closure(self):
        n = 512
        theta_star = 4.0  # per unit of A_th / n
        peaks = np.random.default_rng(3).exponential(n / theta_star, 1_000_000)
        est = fit_peak_aoi_exponent(peaks, n)
        assert est.theta == pytest.approx(theta_star, rel=0.05)
        lo, hi = est.fit_window
        for a_over_n in np.linspace(lo, hi, 8):
            emp = peak_aoi_violation(peaks, a_over_n * n, n)
            model = math.exp(-a_over_n * est.theta)
            assert abs(emp - model) / model < 0.10

    def test_delay_zero_threshold(self):
        assert delay_violation([3, 8, 1], 0) == 1.0

    def test_delay_strict(self):
        assert delay_violation([4230] * 10, 4230) == 0.0

    def test_queue_length(self):
        assert queue_length_violation([0, 1, 2, 3], 1) == 0.5

    def test_md1_tail_against_lindley(self):
        lam, s, d_th = 0.0006, 1000, 2500
        # oracle: sojourn times from the Lindley recursion, long run
        rng = np.random.default_rng(12)
        gaps = rng.exponential(1 / lam, 1_000_000)
        w = np.empty_like(gaps)
        acc = 0.0
        for i, a in enumerate(gaps):
            acc = max(0.0, acc + s - a) if i else 0.0
            w[i] = acc
        p_oracle = float(np.mean(w + s > d_th))

        link = Link("h", LinkParams(tx_power_dbm=60.0, fading=FadingModel("none")), 600.0)
        hop = (link, HarqConfig(CodingConfig(256, s, 4), "standard", 0, 0),
               np.random.default_rng(0))
        horizon = 2 * 10**8
        ups = generate_arrivals(ArrivalProcess("poisson", lam), horizon, np.random.default_rng(13))
        tot = simulate_path(ups, [hop], horizon).total_delays()
        p_sim = delay_violation(tot, d_th)
        # batch means absorb the autocorrelation of successive delays
        ind = (tot > d_th).astype(float)
        batches = ind[: ind.size // 100 * 100].reshape(100, -1).mean(axis=1)
        sigma = math.hypot(batches.std(ddof=1) / 10, math.sqrt(p_oracle * (1 - p_oracle) / w.size))
        assert 0.05 < p_oracle < 0.5
        assert abs(p_sim - p_oracle) <= 3 * sigma


class TestMellin:
    def test_s_one(self):
        assert mellin([0.1, 5.0, 3e7], 1) == 1.0

    def test_s_two_is_mean(self):
        x = [1.0, 2.0, 6.0]
        assert mellin(x, 2) == pytest.approx(3.0, rel=1e-15)

    def test_uniform_s3(self):
        x = np.random.default_rng(4).uniform(0, 1, 1_000_000)
        x = x[x > 0]
        assert mellin(x, 3) == pytest.approx(1 / 3, rel=0.01)

    def test_nonpositive(self):
        with pytest.raises(DomainError):
            mellin([1.0, 0.0], 2)
        with pytest.raises(DomainError):
            mellin([], 2)

    @given(st.lists(st.floats(1.0, 1e3), min_size=1, max_size=30),
           st.floats(-3, 3), st.floats(0.01, 3))
    def test_monotone_above_one(self, x, s, ds):
        assert mellin(x, s + ds) >= mellin(x, s) * (1 - 1e-12)

    @given(st.lists(st.floats(1e-3, 1.0), min_size=1, max_size=30),
           st.floats(-3, 3), st.floats(0.01, 3))
    def test_monotone_below_one(self, x, s, ds):
        assert mellin(x, s + ds) <= mellin(x, s) * (1 + 1e-12)


def test_mean_ci():
    m, lo, hi = mean_ci([1.0, 2.0, 3.0, 4.0])
    assert m == 2.5 and lo < m < hi
    assert hi - m == pytest.approx(1.959964 * np.std([1, 2, 3, 4], ddof=1) / 2)
    assert all(math.isnan(v) for v in mean_ci([]))


def test_fits_csv():
    est = QosExponentEstimate(0.5, (1.0, 9.0), 0.99, 0.01, 1000)
    buf = io.StringIO()
    write_fits_csv([FitRecord("delay", "1/cu", est),
                    FitRecord("queue_length", "1/update", None, 12),
                    FitRecord("error", "1/n_hat", None, 0, 0.25)], buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == ",".join(FIT_COLUMNS)
    assert lines[1] == "delay,0.5,1/cu,1.0,9.0,0.99,0.01,1000"
    assert lines[2] == "queue_length,nan,1/update,nan,nan,nan,nan,12"
    assert lines[3].startswith("error,0.25,")


@given(st.floats(allow_nan=True, allow_infinity=True))
def test_fmt_roundtrip(x):
    out = fmt(x)
    back = float(out)
    assert (math.isnan(x) and math.isnan(back)) or back == x
