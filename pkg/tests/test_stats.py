"""Statistics helpers against closed-form oracles.

Frozen references, derived before the assertions were written:
  * DKW half-width sqrt(log(2/alpha)/(2n)): n=200, alpha=0.05 gives
    0.09603227913199208.
  * KS critical sqrt(-log(alpha/2)/2)/sqrt(n): alpha=0.001, n=10^4
    gives 0.019494746035204052.
  * Bivariate Gaussian exp(-a u^2 - a v^2 + w u v) has precision matrix
    [[2a, -w], [-w, 2a]], so Var(u) = 2a/(4a^2-w^2), E[uv] =
    w/(4a^2-w^2), corr = w/(2a).  At a=0.5, w=0.4: Var = 25/21,
    E[uv] = 10/21, corr = 0.4.
  * AR(1) with rho = 0.9 has integrated autocorrelation time
    (1+rho)/(1-rho) = 19.
"""

import json
import math

import numpy as np
import pytest

from gibbsbc import stats as stt
from gibbsbc import measures as ms
from gibbsbc.errors import ContractError


def gaussian(a):
    return ms.make_measure({"kind": "gaussian", "a": a})


class TestBatchMeans:
    def test_iid_series(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal(65536)
        st = stt.batch_means(x)
        assert st.n == 65536
        assert abs(st.mean) < 4 * st.se_mean
        assert 0.6 < st.iact < 1.6
        assert abs(st.se_mean * math.sqrt(65536) - 1.0) < 0.3
        assert st.ess > 0.6 * 65536

    def test_ar1_series(self):
        rho = 0.9
        rng = np.random.default_rng(11)
        eps = rng.standard_normal(70000) * math.sqrt(1 - rho * rho)
        x = np.empty(70000)
        x[0] = rng.standard_normal()
        for t in range(1, 70000):
            x[t] = rho * x[t - 1] + eps[t]
        st = stt.batch_means(x[4464:])        # 65536 points, warm start
        assert 12.0 < st.iact < 28.0
        target = math.sqrt(19.0 / 65536)
        assert 0.6 < st.se_mean / target < 1.6
        # the naive sqrt(var/n) error would be wrong by ~sqrt(19)
        assert st.se_mean > 2.5 * math.sqrt(st.variance / st.n)

    def test_short_series_rejected(self):
        with pytest.raises(ContractError):
            stt.batch_means(np.zeros(63))

    def test_quantile_se(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal(65536)
        med, se = stt.batch_quantile_se(x, 0.5)
        assert se > 0
        assert abs(med) < 4 * max(se, 1e-3)


class TestBands:
    def test_dkw_frozen(self):
        assert stt.dkw_epsilon(200, 0.05) == pytest.approx(
            0.09603227913199208, abs=1e-15)

    def test_one_sided_frozen(self):
        assert stt.one_sided_dkw(5000, 0.01) == pytest.approx(
            0.021459660262893473, abs=1e-15)

    def test_ks_critical_frozen(self):
        assert stt.ks_critical(10000, 0.001) == pytest.approx(
            0.019494746035204052, abs=1e-15)

    def test_ks_statistic_centered_grid(self):
        # sample i+1/2 over n on U[0,1]: the empirical cdf brackets the
        # diagonal symmetrically, sup gap exactly 1/(2n)
        n = 400
        sample = (np.arange(n) + 0.5) / n
        d = stt.ks_statistic(sample, lambda u: u)
        assert d == pytest.approx(1.0 / (2 * n), abs=1e-15)

    def test_ks_statistic_onesided_grid(self):
        n = 250
        sample = (np.arange(n) + 1.0) / n
        d = stt.ks_statistic(sample, lambda u: min(u, 1.0))
        assert d == pytest.approx(1.0 / n, abs=1e-15)

    def test_band_input_validation(self):
        for bad in [(0, 0.1), (10, 0.0), (10, 1.0)]:
            with pytest.raises(ContractError):
                stt.dkw_epsilon(*bad)
            with pytest.raises(ContractError):
                stt.ks_critical(*bad)


class TestTwoSiteReference:
    def test_uncoupled_is_product(self):
        g = gaussian(0.5)
        ref = stt.two_site_reference(g, g, 0.0)
        assert abs(ref.correlation()) < 1e-9
        assert ref.moment(0, 0) == pytest.approx(1.0, abs=1e-12)
        assert ref.moment(1, 1) == pytest.approx(0.0, abs=1e-10)
        assert ref.moment(2, 0) == pytest.approx(1.0, rel=1e-9)
        # trapezoid cdf on the 2049-point grid is good to ~5e-6, far
        # below the ~1e-3 KS bands it feeds
        for x in [-1.3, 0.0, 0.7, 2.1]:
            assert ref.cdf_u(x) == pytest.approx(float(g.cdf(x)), abs=2e-5)
            assert ref.cdf_v(x) == pytest.approx(float(g.cdf(x)), abs=2e-5)

    def test_gaussian_pair_closed_form(self):
        g = gaussian(0.5)
        ref = stt.two_site_reference(g, g, 0.4)
        assert ref.moment(1, 1) == pytest.approx(10.0 / 21.0, rel=1e-9)
        assert ref.moment(2, 0) == pytest.approx(25.0 / 21.0, rel=1e-9)
        assert ref.correlation() == pytest.approx(0.4, abs=1e-9)
        assert ref.moment(1, 0) == pytest.approx(0.0, abs=1e-10)

    def test_external_field_shifts_mean(self):
        g = gaussian(0.5)
        ref = stt.two_site_reference(g, g, 0.0, h_u=0.3)
        # exp(-a u^2 + h u) centers at h/(2a)
        assert ref.moment(1, 0) == pytest.approx(0.3, rel=1e-8)
        assert ref.moment(0, 1) == pytest.approx(0.0, abs=1e-10)

    def test_quartic_pair_symmetry(self):
        q = ms.make_measure({"kind": "pure_tail", "a_tilde": 1.0, "n": 4.0})
        ref = stt.two_site_reference(q, q, 0.5)
        assert ref.moment(1, 0) == pytest.approx(0.0, abs=1e-10)
        assert ref.moment(1, 1) > 0.0
        assert ref.moment(1, 1) == pytest.approx(ref.moment(1, 1), rel=0)
        # exchange symmetry of identical sites
        assert ref.moment(3, 1) == pytest.approx(ref.moment(1, 3), rel=1e-9)

    def test_shifted_measure_marginal(self):
        z = ms.shift_truncate(gaussian(1.4), 0.7, 2.0)
        g = gaussian(0.5)
        ref = stt.two_site_reference(z, g, 0.0)
        assert ref.cdf_u(2.0 - 1e-9) == pytest.approx(0.0, abs=1e-9)
        for x in [2.5, 3.0, 4.0]:
            assert ref.cdf_u(x) == pytest.approx(float(z.cdf(x)), abs=2e-5)

    def test_window_overflow_detected(self):
        g = gaussian(0.5)
        with pytest.raises(ContractError):
            stt.two_site_reference(g, g, 0.95)   # near-critical coupling


class TestTvBinned:
    def test_identical_samples(self):
        x = np.linspace(-2, 2, 500)
        assert stt.tv_binned(x, x, -3, 3) == 0.0

    def test_disjoint_samples(self):
        x = np.full(100, -50.0)
        y = np.full(100, 50.0)
        assert stt.tv_binned(x, y, -1, 1) == 1.0

    def test_half_overlap_exact(self):
        # deterministic grids: 1000 points uniform on [0,1] and its +1/2
        # shift, three aligned bins over [0, 1.5] -> TV exactly 1/2
        x = (np.arange(1000) + 0.5) / 1000
        y = x + 0.5
        assert stt.tv_binned(x, y, 0.0, 1.5, bins=3) == pytest.approx(
            0.5, abs=1e-12)

    def test_tail_buckets_count(self):
        x = np.concatenate([np.zeros(50), np.full(50, 1e9)])
        y = np.zeros(100)
        assert stt.tv_binned(x, y, -1, 1) == pytest.approx(0.5, abs=1e-12)


class TestCanonicalJson:
    def test_key_order_invariance(self):
        a = {"b": 1, "a": [1.0, 2.0], "c": {"y": 2, "x": 1}}
        b = {"c": {"x": 1, "y": 2}, "a": [1.0, 2.0], "b": 1}
        assert stt.canonical_json(a) == stt.canonical_json(b)

    def test_numpy_types(self):
        s = stt.canonical_json({"i": np.int64(3), "f": np.float64(0.5),
                                "b": np.bool_(True),
                                "arr": np.array([1.0, 2.5])})
        obj = json.loads(s)
        assert obj == {"i": 3, "f": 0.5, "b": True, "arr": [1.0, 2.5]}

    def test_float_fidelity(self):
        x = 1.0 / 3.0
        s = stt.canonical_json({"x": x})
        assert json.loads(s)["x"] == x     # 17 digits round-trip exactly

    def test_fmt17_idempotent(self):
        y = stt.fmt17(math.pi)
        assert stt.fmt17(y) == y == math.pi
