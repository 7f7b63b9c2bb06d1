"""Single-site measures against closed-form integrals.

All reference values are Gamma-function or error-function identities
evaluated with math.gamma / math.erf, independent of the quadrature
pipeline under test:

    int exp(-a u**2) du            = sqrt(pi / a)
    int exp(-|u|**4) du            = Gamma(1/4) / 2
    int u**k exp(-|u|**4) du       = Gamma((k+1)/4) / 2   (k even)
    int_0^inf exp(-a u**2) du      = sqrt(pi / a) / 2
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gibbsbc import measures as ms

QUARTIC = {"kind": "pure_tail", "a_tilde": 1.0, "n": 4.0}
Z4 = math.gamma(0.25) / 2.0          # = 2 Gamma(5/4) = 1.8128049541109543


def test_frozen_quartic_normalization_constant():
    assert Z4 == pytest.approx(1.8128049541109543, rel=1e-15)


class TestQuarticOracles:
    def setup_method(self):
        self.m = ms.make_measure(QUARTIC)

    def test_normalization(self):
        assert self.m.normalization() == pytest.approx(Z4, rel=1e-10)

    def test_moments(self):
        ref2 = math.gamma(0.75) / 2.0
        ref4 = math.gamma(1.25) / 2.0
        assert self.m.moment(2) == pytest.approx(ref2 / Z4, rel=1e-9)
        assert self.m.moment(4) == pytest.approx(ref4 / Z4, rel=1e-9)
        assert self.m.moment(1) == pytest.approx(0.0, abs=1e-12)
        assert self.m.mean() == pytest.approx(0.0, abs=1e-12)

    def test_tilt_changes_scale(self):
        # exp(-u^4) * exp(u^4 / 2) integrates to Z4 * 2**(1/4)
        t = ms.tilt(self.m, 0.5, 4.0)
        assert t.normalization() == pytest.approx(Z4 * 2.0 ** 0.25,
                                                  rel=1e-9)

    def test_destroying_tilt_rejected(self):
        with pytest.raises(ms.ContractError):
            ms.tilt(self.m, 1.0, 4.0)
        with pytest.raises(ms.ContractError):
            ms.tilt(self.m, 0.5, 6.0)

    def test_super_gaussian_certificate(self):
        assert ms.check_super_gaussian(self.m, 0.5, 4.0)
        assert ms.check_super_gaussian(self.m, 123.0, 2.0)
        assert not ms.check_super_gaussian(self.m, 1.0, 4.0)
        assert not ms.check_super_gaussian(self.m, 0.5, 4.5)


class TestGaussianOracles:
    a = 0.7

    def setup_method(self):
        self.m = ms.make_measure({"kind": "gaussian", "a": self.a})
        self.Z = math.sqrt(math.pi / self.a)

    def test_normalization(self):
        assert self.m.normalization() == pytest.approx(self.Z, rel=1e-10)

    def test_variance(self):
        assert self.m.variance() == pytest.approx(0.5 / self.a, rel=1e-9)

    def test_cdf_against_erf(self):
        for u in (-1.5, -0.3, 0.0, 0.8, 2.2):
            ref = 0.5 * (1.0 + math.erf(math.sqrt(self.a) * u))
            assert self.m.cdf(u) == pytest.approx(ref, abs=1e-10)

    def test_tail_mass_against_erfc(self):
        for thr in (0.5, 1.5, 3.0):
            ref = math.erfc(math.sqrt(self.a) * thr)   # both tails
            assert self.m.tail_mass(thr) == pytest.approx(ref, rel=1e-8)

    def test_deep_tail_via_log(self):
        # mass beyond 9 is ~= 9e-27, far below float subtraction reach;
        # log(erfc(x)) ~ -x^2 - log(x sqrt(pi)) up to a 1/(2x^2) correction
        x = math.sqrt(self.a) * 9.0
        ref = -x * x - math.log(x * math.sqrt(math.pi))
        got = self.m.log_tail_mass(9.0)
        assert got == pytest.approx(ref, abs=2.0 / (2.0 * x * x))

    def test_quantile_roundtrip(self):
        for q in (0.01, 0.2, 0.5, 0.77, 0.995):
            u = self.m.quantile(q)
            assert self.m.cdf(u) == pytest.approx(q, abs=1e-9)

    def test_shift_truncate_half_gaussian(self):
        B = 1.25
        s = ms.shift_truncate(self.m, 0.0, B, n=2)
        assert s.support_min == B
        assert s.normalization() == pytest.approx(self.Z / 2.0, rel=1e-9)
        assert s.mean() == pytest.approx(B + 1.0 / math.sqrt(math.pi * self.a),
                                         rel=1e-8)
        assert s.cdf(B - 1e-9) == 0.0

    def test_shift_truncate_with_tilt(self):
        # exp(-0.7 u^2) tilted by exp(0.2 u^2) is a Gaussian with a = 0.5
        s = ms.shift_truncate(self.m, 0.2, 0.0, n=2)
        assert s.normalization() == pytest.approx(
            math.sqrt(math.pi / 0.5) / 2.0, rel=1e-9)


def test_quartic_tilt_exponent_override():
    # quadratic tilt of the quartic base: exp(-u^4 + b u^2)
    m = ms.make_measure(QUARTIC)
    t = ms.shift_truncate(m, 1.0, 0.5, n=2)
    assert t.shifted and t.support_min == 0.5
    # density at u = support_min + 1 equals base(1) * exp(b * 1)
    got = t.log_density(1.5)
    assert got == pytest.approx(-1.0 + 1.0, abs=1e-12)


def test_poly_potential_and_roundtrip():
    spec = {"kind": "poly_potential",
            "coefficients": {"4": 1.0, "2": -2.5}}   # double well
    m = ms.make_measure(spec)
    # normalization against a direct high-resolution sum
    us = np.linspace(-8, 8, 400001)
    ref = np.trapezoid(np.exp(-us ** 4 + 2.5 * us ** 2), us)
    assert m.normalization() == pytest.approx(float(ref), rel=1e-8)
    again = ms.make_measure(m.to_spec())
    assert again.key() == m.key()
    assert again.normalization() == pytest.approx(m.normalization(),
                                                  rel=1e-12)


def test_atomic_measures_exact():
    m = ms.make_measure({"kind": "atomic",
                         "atoms": [[-1.0, 0.25], [0.5, 0.75]]})
    assert m.normalization() == 1.0
    assert m.mean() == pytest.approx(-0.25 + 0.375)
    assert m.cdf(0.0) == 0.25
    assert m.tail_mass(1.1) == 0.0
    assert m.tail_mass(0.6) == 0.25    # only the atom at -1 lies outside
    assert m.tail_mass(0.4) == 1.0
    t = ms.tilt(m, 0.5, 4.0)
    assert t.normalization() == pytest.approx(
        0.25 * math.e ** 0.5 + 0.75 * math.e ** (0.5 * 0.5 ** 4))


def test_schema_errors():
    with pytest.raises(ms.SchemaError):
        ms.make_measure({"kind": "nope"})
    with pytest.raises(ms.SchemaError):
        ms.make_measure({"kind": "gaussian", "a": 1.0, "bogus": 3})
    with pytest.raises(ms.SchemaError):
        ms.make_measure({"kind": "pure_tail", "a_tilde": 1.0, "n": 2.0})
    with pytest.raises(ms.SchemaError):
        ms.make_measure({"kind": "poly_potential",
                         "coefficients": {"3": 1.0}})
    with pytest.raises(ms.SchemaError):
        ms.make_measure({"kind": "poly_potential",
                         "coefficients": {"2": 1.0}})


def test_default_alpha0():
    m = ms.make_measure(QUARTIC)
    a0 = ms.default_alpha0(m)
    assert a0 >= 1.0
    assert m.interval_mass(-a0, a0) > 0


def test_interval_mass_no_cancellation():
    m = ms.make_measure({"kind": "gaussian", "a": 1.0})
    # narrow interval deep in a tail; relative accuracy must survive
    lo, hi = 4.0, 4.1
    ref = 0.5 * (math.erf(hi) - math.erf(lo))
    assert m.interval_mass(lo, hi) == pytest.approx(ref, rel=1e-7)


def test_truncated_log_mass_matches_erf():
    m = ms.make_measure({"kind": "gaussian", "a": 1.0})
    got = ms.truncated_log_mass(m, 2.0)
    ref = math.log(math.sqrt(math.pi) * math.erf(2.0))
    assert got == pytest.approx(ref, abs=1e-8)


def test_draw_matches_cdf():
    m = ms.make_measure(QUARTIC)
    rng = np.random.default_rng(20260815)
    xs = ms.draw(m, rng, 40000)
    # Dvoretzky-Kiefer-Wolfowitz band at 99.9 percent
    eps = math.sqrt(math.log(2.0 / 0.001) / (2.0 * len(xs)))
    grid = np.linspace(-2.0, 2.0, 41)
    emp = np.searchsorted(np.sort(xs), grid, side="right") / len(xs)
    ref = np.array([m.cdf(u) for u in grid])
    assert np.max(np.abs(emp - ref)) < eps


def test_draw_shifted_support():
    m = ms.shift_truncate(ms.make_measure({"kind": "gaussian", "a": 1.0}),
                          0.0, 2.0, n=2)
    rng = np.random.default_rng(7)
    xs = ms.draw(m, rng, 2000)
    assert np.all(xs >= 2.0)


@given(st.floats(0.05, 3.0), st.floats(0.001, 0.999))
@settings(max_examples=25, deadline=None)
def test_quantile_cdf_inverse_property(a, q):
    m = ms.make_measure({"kind": "gaussian", "a": a})
    assert m.cdf(m.quantile(q)) == pytest.approx(q, abs=1e-8)


@given(st.floats(-3.0, 3.0), st.floats(0.05, 2.0))
@settings(max_examples=25, deadline=None)
def test_cdf_monotone_property(u, da):
    m = ms.make_measure(QUARTIC)
    assert m.cdf(u + da) >= m.cdf(u) - 1e-12


def test_quadrature_failure_reported():
    # potential_terms admits a slowly-decaying pseudo-density whose window
    # search cannot bracket 40 log-units of drop within the width budget
    bad = ms.SingleSiteMeasure("potential_terms", terms=[(0.001, -1.0)])
    with pytest.raises(ms.QuadratureError):
        bad.table()
