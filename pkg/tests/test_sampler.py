"""Heat-bath sampler against exact conditionals and joint laws.

Oracles used below, fixed before the assertions were written:
  * A Gaussian site exp(-a u^2) tilted by exp(s u) is N(s/(2a), 1/(2a)),
    so conditional quantiles have closed forms.
  * A single updated site between frozen-zero neighbours draws iid from
    its own single-site measure, whatever beta is.
  * Two updated sites with unit coupling at inverse temperature beta
    have stationary joint density rho(u) rho(v) exp(beta u v), matched
    against the tensor-quadrature reference.
  * Tilting preserves likelihood-ratio order: tables at s1 <= s2 are
    pointwise ordered, so shared-uniform chains on nonnegative supports
    with ordered tilts can never cross.
"""

import math

import numpy as np
import pytest
from scipy import stats as sps

from gibbsbc import graphs as gr
from gibbsbc import measures as ms
from gibbsbc import sampler as sp
from gibbsbc import stats as stt
from gibbsbc.errors import ContractError, OverflowBudgetError

KS_ALPHA = 1e-3


def gaussian(a):
    return ms.make_measure({"kind": "gaussian", "a": a})


def quartic():
    return ms.make_measure({"kind": "pure_tail", "a_tilde": 1.0, "n": 4.0})


def nn_graph(shape, scale=1.0):
    g = gr.build_graph(shape)
    gr.make_interactions(g, "nearest_neighbour", scale=scale)
    return g


class TestTiltedTables:
    def test_gaussian_closed_form(self):
        g = gaussian(0.5)
        for s in [0.0, 0.96, -3.2, 12.0]:
            q = sp._tilted_quantiles(g, s)
            exact = sps.norm.ppf(sp.LEVELS[1:-1], loc=s, scale=1.0)
            assert np.abs(q[1:-1] - exact).max() < 1e-5

    def test_shifted_support_pinned(self):
        z = ms.shift_truncate(gaussian(1.4), 0.7, 0.5)
        for s in [-4.0, 0.0, 2.0]:
            q = sp._tilted_quantiles(z, s)
            assert q[0] == pytest.approx(0.5, abs=1e-12)
            assert np.all(np.diff(q) >= 0)

    def test_monotone_in_tilt(self):
        # likelihood-ratio order: every quantile moves up with s
        m = quartic()
        prev = sp._tilted_quantiles(m, -2.0)
        for s in [-0.5, 0.0, 0.3, 1.7, 4.0]:
            cur = sp._tilted_quantiles(m, s)
            assert np.all(cur >= prev - 1e-9)
            prev = cur


class TestTiltCache:
    def test_bucket_sharing(self):
        c = sp.TiltCache()
        k = c.register(gaussian(0.5))
        t1 = c.table(k, 0.12341)
        t2 = c.table(k, 0.12299)      # same 1e-3 bucket
        assert t1 is t2
        assert c.builds == 1 and c.hits == 1

    def test_distinct_buckets(self):
        c = sp.TiltCache()
        k = c.register(gaussian(0.5))
        t1 = c.table(k, 0.1231)
        t2 = c.table(k, 0.1242)
        assert t1 is not t2 and c.builds == 2

    def test_exact_regime_beyond_cap(self):
        c = sp.TiltCache()
        k = c.register(gaussian(0.5))
        q = c.table(k, 61.277)
        # built at the exact tilt, not a bucket centre
        assert q[len(q) // 2] == pytest.approx(61.277, abs=1e-4)

    def test_budget_guard(self):
        c = sp.TiltCache()
        k = c.register(gaussian(0.5))
        with pytest.raises(OverflowBudgetError):
            c.table(k, 2e6)

    def test_lru_eviction(self):
        c = sp.TiltCache(max_entries=2)
        k = c.register(gaussian(0.5))
        c.table(k, 0.0)
        c.table(k, 1.0)
        c.table(k, 2.0)               # evicts the s=0 table
        c.table(k, 0.0)
        assert c.builds == 4


class TestConditionals:
    def test_conditional_matches_closed_form(self):
        g = nn_graph("path:3")
        model = sp.make_model(g, gaussian(0.5), beta=0.8,
                              region=gr.Region(g, [1]),
                              boundary={0: 1.5, 2: -0.3})
        phi = model.boundary_values.copy()
        # s = 0.8 * (1.5 - 0.3) = 0.96; conditional is N(0.96, 1)
        assert model.local_tilt(phi, 1) == pytest.approx(0.96, abs=1e-12)
        med = sp.conditional_draw(model, phi, 1, 0.5)
        assert med == pytest.approx(0.96, abs=5e-4)
        up = sp.conditional_draw(model, phi, 1, sps.norm.cdf(1.0))
        assert up == pytest.approx(1.96, abs=5e-4)

    def test_isolated_site_is_untilted(self):
        g = nn_graph("path:3")
        model = sp.make_model(g, gaussian(0.5), beta=0.8,
                              region=gr.Region(g, [1]))
        phi = np.zeros(3)
        assert model.local_tilt(phi, 1) == 0.0
        assert sp.conditional_draw(model, phi, 1, 0.5) == pytest.approx(
            0.0, abs=5e-4)


class TestSingleSiteChain:
    def test_iid_against_exact_cdf(self):
        # frozen-zero neighbours make every sweep an independent draw
        g = nn_graph("path:3")
        m = quartic()
        model = sp.make_model(g, m, beta=0.7, region=gr.Region(g, [1]))
        rng = np.random.default_rng(42)
        res = sp.run_chain(model, sweeps=4000, rng=rng, record_sites=[1])
        xs = res.samples[:, 0]
        d = stt.ks_statistic(xs, lambda u: float(m.cdf(u)))
        assert d < stt.ks_critical(len(xs), KS_ALPHA)

    def test_shifted_measure_chain_support(self):
        g = nn_graph("path:3")
        z = ms.shift_truncate(gaussian(1.4), 0.7, 2.0)
        model = sp.make_model(g, z, beta=0.5, region=gr.Region(g, [1]),
                              boundary={0: 1.0, 2: 1.0})
        rng = np.random.default_rng(5)
        res = sp.run_chain(model, sweeps=600, rng=rng, record_sites=[1])
        assert res.samples.min() >= 2.0


@pytest.fixture(scope="module")
def run():
    g = nn_graph("path:4")
    m = quartic()
    beta = 0.5
    model = sp.make_model(g, m, beta=beta,
                          region=gr.Region(g, [1, 2]))
    rng = np.random.default_rng(99)
    res = sp.run_chain(model, sweeps=20400, rng=rng,
                       record_sites=[1, 2], burn=400, thin=1)
    ref = stt.two_site_reference(m, m, beta)
    return res, ref


class TestTwoSiteChain:
    def test_marginal_ks(self, run):
        res, ref = run
        xs = res.samples[::7, 0]       # thinned to kill autocorrelation
        d = stt.ks_statistic(xs, ref.cdf_u)
        assert d < 1.2 * stt.ks_critical(len(xs), KS_ALPHA)

    def test_cross_moment(self, run):
        res, ref = run
        prod = res.samples[:, 0] * res.samples[:, 1]
        st = stt.batch_means(prod)
        assert abs(st.mean - ref.moment(1, 1)) < 6 * st.se_mean
        assert ref.moment(1, 1) > 0.05

    def test_second_moment(self, run):
        res, ref = run
        st = stt.batch_means(res.samples[:, 0] ** 2)
        assert abs(st.mean - ref.moment(2, 0)) < 6 * st.se_mean

    def test_site_stats_accessor(self, run):
        res, _ = run
        st = res.site_stats(2)
        assert st.n == res.samples.shape[0]
        with pytest.raises(ContractError):
            res.series(3)


class TestFactorization:
    def test_beta_zero_decouples(self):
        g = nn_graph("box:2x2")
        m = gaussian(0.5)
        model = sp.make_model(g, m, beta=0.0)
        rng = np.random.default_rng(17)
        res = sp.run_chain(model, sweeps=4000, rng=rng,
                           record_sites=[0, 1])
        a, b = res.samples[:, 0], res.samples[:, 1]
        r = np.corrcoef(a, b)[0, 1]
        assert abs(r) < 5.0 / math.sqrt(len(a))
        assert abs(a.var() - 1.0) < 0.1


class TestCoupledChains:
    def test_ordered_betas_never_cross(self):
        # nonnegative supports + ordered tilts: exact zero violations
        g = nn_graph("box:2x3")
        z = ms.shift_truncate(gaussian(1.4), 0.7, 0.5)
        lo = sp.make_model(g, z, beta=0.15)
        hi = sp.make_model(g, z, beta=0.40)
        rng = np.random.default_rng(23)
        out = sp.coupled_run(lo, hi, sweeps=1500, rng=rng,
                             record_sites=[0], burn=100)
        assert out.comparisons == 1500 * 9
        assert out.violations == 0
        assert out.ordered
        # the tighter coupling should sit higher on average
        assert out.hi.samples.mean() > out.lo.samples.mean()

    def test_signed_supports_do_cross(self):
        # a plain Gaussian takes both signs, so shared uniforms cannot
        # order the chains; the counter must see it
        # betas kept below the Gaussian stability edge 2a/lambda_max
        g = nn_graph("box:2x3")
        m = gaussian(0.5)
        lo = sp.make_model(g, m, beta=0.05)
        hi = sp.make_model(g, m, beta=0.30)
        rng = np.random.default_rng(29)
        out = sp.coupled_run(lo, hi, sweeps=400, rng=rng, record_sites=[0])
        assert out.violations > 0
        assert out.max_violation > 0

    def test_mismatched_models_rejected(self):
        g1 = nn_graph("path:4")
        g2 = nn_graph("path:4")
        m = gaussian(0.5)
        with pytest.raises(ContractError):
            sp.coupled_run(sp.make_model(g1, m, 0.1),
                           sp.make_model(g2, m, 0.2),
                           sweeps=10, rng=np.random.default_rng(0))


class TestModelSpec:
    def test_validation(self):
        g = gr.build_graph("path:4")
        with pytest.raises(ContractError):
            sp.make_model(g, gaussian(1.0), 0.5)      # no couplings
        gr.make_interactions(g, "nearest_neighbour", scale=1.0)
        with pytest.raises(ContractError):
            sp.make_model(g, gaussian(1.0), -0.1)
        with pytest.raises(ContractError):
            sp.make_model(g, gaussian(1.0), 0.5,
                          region=gr.Region(g, [1]), boundary=np.zeros(2))

    def test_run_chain_guards(self):
        g = nn_graph("path:3")
        model = sp.make_model(g, gaussian(1.0), 0.2)
        rng = np.random.default_rng(1)
        with pytest.raises(ContractError):
            sp.run_chain(model, sweeps=5, rng=rng, burn=5)
        with pytest.raises(ContractError):
            sp.run_chain(model, sweeps=10, rng=rng, init=np.zeros(2))

    def test_per_site_measures(self):
        g = nn_graph("path:3")
        z = ms.shift_truncate(gaussian(1.4), 0.7, 3.0)
        model = sp.make_model(g, gaussian(0.5), 0.3,
                              site_measures={2: z})
        assert model.measure_at(2).shifted
        assert not model.measure_at(0).shifted
        rng = np.random.default_rng(8)
        res = sp.run_chain(model, sweeps=200, rng=rng, record_sites=[2])
        assert res.samples.min() >= 3.0

    def test_boundary_field_object(self):
        from gibbsbc import boundary as bd
        g = nn_graph("path:5")
        xi = bd.BoundaryField(g, "constant", K=2.0)
        model = sp.make_model(g, gaussian(0.5), 0.4,
                              region=gr.Region(g, [1, 2, 3]), boundary=xi)
        assert model.boundary_values[0] == pytest.approx(2.0)
        assert model.boundary_values[4] == pytest.approx(2.0)
        assert model.boundary_values[2] == 0.0   # interior stays free

    def test_initial_config_draws_inside(self):
        g = nn_graph("path:5")
        model = sp.make_model(g, gaussian(0.5), 0.4,
                              region=gr.Region(g, [1, 2, 3]),
                              boundary={0: 7.0, 4: -7.0})
        phi = model.initial_config(np.random.default_rng(2))
        assert phi[0] == 7.0 and phi[4] == -7.0
        assert np.all(np.abs(phi[1:4]) < 7.0)


def test_sample_random_bc():
    g = nn_graph("box:2x3")
    z = ms.shift_truncate(gaussian(1.4), 0.7, 1.0)
    vals = sp.sample_random_bc(g, [0, 2, 5], z, np.random.default_rng(3))
    assert set(vals) == {0, 2, 5}
    assert all(v >= 1.0 for v in vals.values())
