import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qhmc.diagnostics import MixingReport, autocorrelation, iat, summarize


def ar1(phi, n, seed=0):
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(n)
    y = np.empty(n)
    y[0] = e[0] / math.sqrt(1 - phi * phi)
    for t in range(1, n):
        y[t] = phi * y[t - 1] + e[t]
    return y


@pytest.fixture(scope="module")
def ar05():
    return ar1(0.5, 1_000_000, seed=1)


def fake_chain(samples, accepted=None, burn_in=0, wall_time=2.0, diverged=None):
    s = np.asarray(samples, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    n = s.shape[0]
    return SimpleNamespace(samples=s, accepted=np.ones(n, bool) if accepted is None else accepted,
                           burn_in=burn_in, wall_time=wall_time,
                           diverged=np.zeros(n, bool) if diverged is None else diverged)


class TestAutocorrelation:
    def test_matches_direct_sum(self):
        y = np.random.default_rng(0).normal(size=300)
        rho = autocorrelation(y, 20)
        c = y - y.mean()
        direct = [np.dot(c[:c.size - k], c[k:]) / np.dot(c, c) for k in range(21)]
        np.testing.assert_allclose(rho, direct, atol=1e-13)
        assert rho[0] == 1.0

    def test_alternating(self):
        n = 10_000
        y = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
        rho = autocorrelation(y, 5)
        assert rho[1] == pytest.approx(-1.0, abs=2.0 / n)
        assert rho[2] == pytest.approx(1.0, abs=3.0 / n)

    def test_constant_is_undefined(self):
        assert np.all(np.isnan(autocorrelation(np.full(100, 3.0), 10)))

    def test_nonfinite_is_undefined(self):
        y = np.random.default_rng(0).normal(size=100)
        y[7] = np.inf
        assert np.all(np.isnan(autocorrelation(y, 10)))

    def test_ar1_lags(self, ar05):
        rho = autocorrelation(ar05, 2)
        assert 0.49 <= rho[1] <= 0.51
        assert 0.24 <= rho[2] <= 0.26

    def test_too_short(self):
        with pytest.raises(ValueError):
            autocorrelation(np.arange(5.0), 5)
        with pytest.raises(ValueError):
            autocorrelation(np.arange(5.0), 0)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-50, 50).filter(lambda a: abs(a) > 1e-3), st.floats(-100, 100))
    def test_shift_scale_invariance(self, a, b):
        y = np.random.default_rng(4).normal(size=400)
        np.testing.assert_allclose(autocorrelation(a * y + b, 30), autocorrelation(y, 30), atol=1e-12)


class TestIat:
    def test_formula(self):
        assert iat([1.0, 0.5, 0.25, -0.1]) == pytest.approx(1 + 2 * 0.65)

    def test_k_max_truncation(self):
        assert iat([1.0, 0.5, 0.25, 0.1], k_max=2) == pytest.approx(2.5)

    def test_first_negative_truncation(self):
        rho = [1.0, 0.4, 0.2, -0.3, 0.5]
        assert iat(rho) == pytest.approx(1 + 2 * 0.8)
        assert iat(rho, truncate_at_first_negative=True) == pytest.approx(1 + 2 * 0.6)

    def test_nan(self):
        assert math.isnan(iat([1.0, math.nan]))
        assert math.isnan(iat([]))

    def test_white_noise(self):
        y = np.random.default_rng(2).normal(size=100_000)
        assert iat(autocorrelation(y, 500)) == pytest.approx(1.0, abs=0.1)

    def test_ar1_half(self, ar05):
        assert iat(autocorrelation(ar05, 500)) == pytest.approx(3.0, abs=0.3)

    def test_ar1_09(self):
        y = ar1(0.9, 1_000_000, seed=3)
        assert iat(autocorrelation(y, 500)) == pytest.approx(19.0, abs=2.0)


class TestSummarize:
    def test_iid(self):
        y = np.random.default_rng(5).normal(size=10_000)
        rep = summarize(fake_chain(y))
        assert rep.valid
        assert 8_000 <= rep.ess <= 10_500
        assert rep.ess * rep.iat == pytest.approx(rep.n, rel=1e-14)
        assert rep.ess_per_second == pytest.approx(rep.ess / 2.0)
        assert rep.acf.size == 501 and rep.acf[0] == 1.0

    def test_ess_times_tau_is_n(self, ar05):
        rep = summarize(fake_chain(ar05[:50_000]))
        assert rep.ess * rep.iat == pytest.approx(50_000, rel=1e-14)

    def test_tau_floor(self):
        n = 2_000
        y = np.where(np.arange(n) % 2 == 0, 1.0, -1.0) + 1e-3 * np.random.default_rng(0).normal(size=n)
        rep = summarize(fake_chain(y), k_max=1)
        assert rep.iat == 1.0 and rep.ess == n
        raw = summarize(fake_chain(y), k_max=1, min_iat=-math.inf)
        assert raw.iat < 0

    def test_all_rejected_is_invalid(self):
        acc = np.zeros(1000, bool)
        rep = summarize(fake_chain(np.full(1000, 1.7), accepted=acc))
        assert not rep.valid and rep.degenerate
        assert math.isnan(rep.ess) and math.isnan(rep.iat) and math.isnan(rep.ess_per_second)
        assert rep.accept_rate == 0.0

    def test_divergences_mark_degenerate(self):
        y = np.random.default_rng(5).normal(size=1000)
        div = np.zeros(1000, bool)
        div[10] = True
        rep = summarize(fake_chain(y, diverged=div))
        assert rep.valid and rep.degenerate and rep.n_divergent == 1

    def test_burn_in_dropped_but_accept_rate_full(self):
        y = np.concatenate([np.full(100, 5.0), np.random.default_rng(1).normal(size=1000)])
        acc = np.concatenate([np.zeros(100, bool), np.ones(1000, bool)])
        rep = summarize(fake_chain(y, accepted=acc, burn_in=100))
        assert rep.n == 1000
        assert rep.accept_rate == pytest.approx(1000 / 1100)
        explicit = summarize(fake_chain(y, accepted=acc), burn_in=100)
        np.testing.assert_array_equal(rep.acf, explicit.acf)

    def test_coordinate(self):
        rng = np.random.default_rng(0)
        s = np.column_stack([rng.normal(size=800), ar1(0.9, 800, 2)])
        r0 = summarize(fake_chain(s), coordinate=0, k_max=50)
        r1 = summarize(fake_chain(s), coordinate=1, k_max=50)
        assert r1.iat > r0.iat
        with pytest.raises(IndexError):
            summarize(fake_chain(s), coordinate=2)

    def test_short_chain_caps_k_max(self):
        rep = summarize(fake_chain(np.random.default_rng(0).normal(size=40)))
        assert rep.acf.size == 40

    def test_bad_burn_in(self):
        with pytest.raises(ValueError):
            summarize(fake_chain(np.zeros(10)), burn_in=10)

    def test_zero_wall_time(self):
        rep = summarize(fake_chain(np.random.default_rng(0).normal(size=600), wall_time=0.0))
        assert math.isnan(rep.ess_per_second)

    def test_report_is_frozen(self):
        rep = summarize(fake_chain(np.random.default_rng(0).normal(size=600)))
        assert isinstance(rep, MixingReport)
        with pytest.raises(AttributeError):
            rep.iat = 3.0
