"""Offspring law, total progeny and cluster search against closed forms.

Oracles, fixed before the implementations:
  * the offspring pmf and mean are elementary algebra in b (worked out
    below at b = 0.6);
  * Bernoulli(p) offspring give a geometric total progeny
    P[T = n] = (1-p) p**(n-1), and with two ancestors the negative
    binomial (n-1) p**(n-2) (1-p)**2;
  * Gaussian edge probabilities are erfc values;
  * the cluster search must equal brute-force walk enumeration on small
    graphs (same step cap on both sides).
"""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gibbsbc import exploration as ex
from gibbsbc import graphs as gr
from gibbsbc import measures as ms


# ---------------------------------------------------------------------------
# offspring law


class TestOffspringLaw:
    def test_hand_values_at_06(self):
        law = ex.OffspringLaw(0.6)
        assert law.pmf(0) == pytest.approx(0.6)
        assert law.pmf(1) == pytest.approx(0.4 * 0.2 / 0.6)
        assert law.pmf(2) == pytest.approx(0.16)
        assert law.pmf(3) == pytest.approx(0.064)
        assert law.mean() == pytest.approx(0.4 * 0.76 / 0.36)

    @given(st.floats(0.5, 0.999))
    @settings(max_examples=50, deadline=None)
    def test_pmf_sums_to_one(self, b):
        law = ex.OffspringLaw(b)
        head = law.pmf_array(400).sum()
        geom_rest = law.tail(400)
        assert head + geom_rest == pytest.approx(1.0, abs=1e-12)

    @given(st.floats(0.5, 0.999), st.integers(0, 50))
    @settings(max_examples=50, deadline=None)
    def test_tail_consistent_with_pmf(self, b, k):
        law = ex.OffspringLaw(b)
        direct = 1.0 - law.pmf(np.arange(k + 1)).sum()
        assert law.tail(k) == pytest.approx(direct, abs=1e-10)

    def test_mean_against_pmf_sum(self):
        for b in (0.5, 0.62, 0.8, 0.97):
            law = ex.OffspringLaw(b)
            ks = np.arange(2000)
            assert law.mean() == pytest.approx(
                float(np.sum(ks * law.pmf(ks))), rel=1e-12)

    def test_exp_moment_against_series(self):
        law = ex.OffspringLaw(0.75)
        theta = 0.5
        ks = np.arange(400)
        ref = float(np.sum(law.pmf(ks) * np.exp(theta * ks)))
        assert law.exp_moment(theta) == pytest.approx(ref, rel=1e-10)
        assert law.exp_moment(10.0) == math.inf

    def test_sampling_matches_pmf(self):
        law = ex.OffspringLaw(0.7)
        rng = np.random.default_rng(123)
        xs = law.sample(rng, 60000)
        for k in range(5):
            p = law.pmf(k)
            emp = (xs == k).mean()
            se = math.sqrt(p * (1 - p) / len(xs))
            assert abs(emp - p) < 5 * se + 1e-9
        assert xs.min() >= 0

    def test_degenerate_b_one(self):
        law = ex.OffspringLaw(1.0)
        rng = np.random.default_rng(0)
        assert np.all(law.sample(rng, 100) == 0)
        assert law.mean() == 0.0

    def test_rejects_small_b(self):
        with pytest.raises(ex.ContractError):
            ex.OffspringLaw(0.4)


# ---------------------------------------------------------------------------
# total progeny


def test_progeny_geometric_oracle():
    p = 0.35
    dist = ex.progeny_pmf(np.array([1.0 - p, p]), 60, ancestors=1)
    for n in range(1, 61):
        ref = (1.0 - p) * p ** (n - 1)
        assert dist.pmf[n] == pytest.approx(ref, rel=1e-12)
    assert dist.pmf[0] == 0.0


def test_progeny_two_ancestors_negative_binomial():
    p = 0.3
    dist = ex.progeny_pmf(np.array([1.0 - p, p]), 60, ancestors=2)
    for n in range(2, 61):
        ref = (n - 1) * p ** (n - 2) * (1.0 - p) ** 2
        assert dist.pmf[n] == pytest.approx(ref, rel=1e-12)


def test_progeny_tail_and_mass():
    law = ex.OffspringLaw(0.8)
    dist = ex.progeny_pmf(law, 300, ancestors=1)
    assert dist.covered_mass == pytest.approx(1.0, abs=1e-10)
    assert dist.tail(1) == 1.0
    assert dist.tail(2) == pytest.approx(1.0 - dist.pmf[1], abs=1e-12)
    # tails must be nonincreasing
    ts = [dist.tail(k) for k in range(1, 50)]
    assert all(a >= b - 1e-15 for a, b in zip(ts, ts[1:]))


def test_progeny_matches_simulation():
    law = ex.OffspringLaw(0.72)
    rng = np.random.default_rng(2026)
    sim = ex.simulate_total_progeny(law, 1, 40000, rng)
    dist = ex.progeny_pmf(law, int(sim.max()) + 10, ancestors=1)
    eps = math.sqrt(math.log(2.0 / 0.001) / (2.0 * len(sim)))
    for k in range(1, 30):
        emp = (sim >= k).mean()
        assert abs(emp - dist.tail(k)) < eps


def test_progeny_zero_ancestors():
    dist = ex.progeny_pmf(ex.OffspringLaw(0.9), 10, ancestors=0)
    assert dist.pmf[0] == 1.0
    assert dist.tail(1) == 0.0


# ---------------------------------------------------------------------------
# edge probabilities


def test_p_matrix_gaussian_oracle():
    # base exp(-u^2) tilted by exp(u^2 / 2) is the standard normal, so
    # p = P[|Z| >= C] = erfc(C / sqrt(2)) on unit couplings
    g = gr.build_graph("path:5")
    gr.make_interactions(g, "nearest_neighbour")
    m = ms.make_measure({"kind": "gaussian", "a": 1.0})
    C = 1.7
    pm = ex.p_matrix(g, m, a=1.0, n=2.0, C=C)
    ref = math.erfc(C / math.sqrt(2.0))
    assert pm.edge_p(1, 2) == pytest.approx(ref, rel=1e-8)
    assert pm.edge_p(0, 2) == 0.0
    # interior vertices have two edges, endpoints one
    assert pm.b == pytest.approx((1.0 - ref) ** 2, rel=1e-8)
    assert pm.no_child[0] == pytest.approx(1.0 - ref, rel=1e-8)


def test_p_matrix_weak_edges_pass_less():
    g = gr.build_graph("path:9")
    gr.make_interactions(g, "long_range", r=2.0, cutoff=4)
    m = ms.make_measure({"kind": "pure_tail", "a_tilde": 1.0, "n": 4.0})
    pm = ex.p_matrix(g, m, a=0.5, n=4.0, C=1.0)
    # the kernel raises the threshold on weaker couplings
    assert pm.edge_p(4, 5) > pm.edge_p(4, 6) > pm.edge_p(4, 8)


# ---------------------------------------------------------------------------
# cluster construction


def _brute_force_cluster(graph, phi, C, n, starts, lam=None, max_steps=4):
    """Enumerate every walk with revisits up to max_steps."""
    logC = math.log(C)

    def excess(v):
        av = abs(phi[v])
        return math.log(av) - logC if av > 0 else -math.inf

    members = set()
    for s in starts:
        if excess(s) >= 0.0:
            members.add(s)
    frontier = [(s, 0.0) for s in starts]
    for _ in range(max_steps):
        nxt = []
        for x, tau in frontier:
            for y in graph.neighbours(x):
                j = graph.coupling(int(x), int(y))
                if j == 0.0:
                    continue
                lf = float(graph.kernel.log(j))
                tau2 = (n - 1.0) * tau + lf if n > 2 \
                    else tau + math.log(lam) + lf
                if excess(int(y)) >= tau2:
                    members.add(int(y))
                    nxt.append((int(y), tau2))
        frontier = nxt
    return members


@st.composite
def _cluster_instance(draw):
    kind = draw(st.sampled_from(["path:6", "box:2x3", "tree:3,2"]))
    g = gr.build_graph(kind)
    gr.make_interactions(g, "nearest_neighbour",
                         scale=draw(st.sampled_from([1.0, 0.2])))
    phi = np.array([draw(st.floats(-30.0, 30.0)) for _ in range(g.n)])
    n, lam = draw(st.sampled_from([(4.0, None), (3.0, None), (2.0, 1.3)]))
    starts = draw(st.lists(st.integers(0, g.n - 1), min_size=1, max_size=3,
                           unique=True))
    return g, phi, n, lam, starts


@given(_cluster_instance())
@settings(max_examples=80, deadline=None)
def test_cluster_equals_walk_enumeration(inst):
    g, phi, n, lam, starts = inst
    res = ex.build_cluster(g, phi, 2.0, n, starts, lam=lam, max_steps=4)
    brute = _brute_force_cluster(g, phi, 2.0, n, starts, lam=lam,
                                 max_steps=4)
    assert res.vertices == brute


def test_cluster_every_member_clears_base_threshold():
    g = gr.build_graph("box:2x4")
    gr.make_interactions(g, "nearest_neighbour")
    rng = np.random.default_rng(5)
    for _ in range(50):
        phi = rng.normal(0, 3.0, g.n)
        res = ex.build_cluster(g, phi, 1.5, 4.0, [g.origin])
        for v in res.vertices:
            assert abs(phi[v]) >= 1.5


def test_cluster_with_unit_profile_is_component():
    # constant thresholds on unit nearest-neighbour couplings: the cluster
    # from a full start set is exactly the high-spin vertex set
    g = gr.build_graph("path:7")
    gr.make_interactions(g, "nearest_neighbour")
    phi = np.array([0.1, 5.0, 0.2, 5.0, 5.0, 0.3, 5.0])
    res = ex.build_cluster(g, phi, 2.0, 4.0, list(range(7)))
    assert res.vertices == {1, 3, 4, 6}
    # from the origin only, walks must climb through passing vertices
    res_o = ex.build_cluster(g, phi, 2.0, 4.0, [3])
    assert res_o.vertices == {3, 4}


def test_cluster_seed_profile_raises_seed_bar():
    g = gr.build_graph("path:5")
    gr.make_interactions(g, "nearest_neighbour")
    phi = np.array([0.0, 0.0, 3.0, 0.0, 0.0])
    # log A = 2 at the start: seed needs |phi| >= C e^2
    res = ex.build_cluster(g, phi, 1.0, 4.0, [2], seed_log_A={2: 2.0})
    assert res.vertices == set()
    res = ex.build_cluster(g, phi, 1.0, 4.0, [2], seed_log_A={2: 1.0})
    assert res.vertices == {2}


# ---------------------------------------------------------------------------
# end-to-end domination


def test_branching_domination_on_lattice():
    g = gr.build_graph("box:2x4")
    gr.make_interactions(g, "nearest_neighbour")
    m = ms.make_measure({"kind": "gaussian", "a": 1.0})
    C = 2.0
    pm = ex.p_matrix(g, m, a=1.0, n=2.0, C=C)
    assert pm.b > 0.5
    law = ex.OffspringLaw(pm.b)
    rng = np.random.default_rng(99)
    sizes = ex.simulate_exploration(g, m, 1.0, 2.0, C, [g.origin], 3000,
                                    rng, lam=1.0)
    rep = ex.branching_domination_check(sizes, law, ancestors=1, alpha=0.01)
    assert rep.dominated, (rep.worst_k, rep.max_excess)


def test_domination_check_flags_violation():
    # sizes drawn far above the progeny law must fail the check
    law = ex.OffspringLaw(0.95)
    sizes = np.full(2000, 4)
    rep = ex.branching_domination_check(sizes, law, ancestors=1)
    assert not rep.dominated
    assert rep.max_excess > 0
