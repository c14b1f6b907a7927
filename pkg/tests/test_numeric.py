import math

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqstage.numeric import (
    NEG_INF,
    DomainError,
    critical_h,
    f_inverse,
    f_map,
    inverse_mills_hazard,
    kappa,
    mills_hazard,
    psi_plus,
    stage_size,
    stage_time,
    std_normal_cdf,
    u_m,
)

mpmath.mp.dps = 50


def mp_cdf(z):
    return float(mpmath.ncdf(z))


def mp_psi_plus(z):
    # independent oracle: quadrature of the integral representation
    return float(mpmath.quad(lambda x: mpmath.ncdf(-x), [z, mpmath.inf]))


class TestNormalCdf:
    def test_symmetry_at_zero(self):
        assert std_normal_cdf(0.0) == 0.5

    def test_against_high_precision_oracle(self):
        for z in (-6.0, -2.5, -1.0, 0.3, 1.959964, 3.7, 8.0):
            assert std_normal_cdf(z) == pytest.approx(mp_cdf(z), abs=1e-13)
        assert std_normal_cdf(1.959964) == pytest.approx(0.975, abs=1e-6)

    def test_deep_tail_stays_nonnegative(self):
        val = std_normal_cdf(-40.0)
        assert 0.0 <= val < 1e-300


class TestPsiPlus:
    def test_at_zero_matches_quadrature(self):
        assert psi_plus(0.0) == pytest.approx(mp_psi_plus(0.0), abs=1e-12)
        assert psi_plus(0.0) == pytest.approx(0.3989423, abs=1e-7)

    def test_upper_tail_vanishes(self):
        assert psi_plus(10.0) < 1e-20

    def test_lower_tail_approaches_negated_argument(self):
        assert psi_plus(-10.0) == pytest.approx(mp_psi_plus(-10.0), abs=1e-10)
        assert psi_plus(-10.0) == pytest.approx(10.0, abs=1e-8)

    def test_integral_identity_on_grid(self):
        for z in [x / 2.0 for x in range(-10, 11)]:
            assert abs(psi_plus(z) - mp_psi_plus(z)) < 1e-8


class TestMillsHazard:
    def test_neg_inf_convention(self):
        assert mills_hazard(NEG_INF) == 0.0

    def test_at_zero(self):
        assert mills_hazard(0.0) == pytest.approx(0.7978846, abs=1e-7)

    def test_asymptotic_regime(self):
        # three-term expansion z + 1/z - 2/z^3 carries the 1e-4 accuracy at z = 10
        assert mills_hazard(10.0) == pytest.approx(10.0981, abs=1e-4)
        assert mills_hazard(10.0) == pytest.approx(10.0 + 0.1 - 2.0 / 1000.0, abs=1e-4)

    def test_against_high_precision_oracle(self):
        for z in (-8.0, -3.0, 0.0, 4.0, 7.9, 8.1, 12.0, 30.0, 50.0):
            exact = float(mpmath.npdf(z) / mpmath.ncdf(-z))
            assert mills_hazard(z) == pytest.approx(exact, rel=1e-12)

    def test_strictly_increasing(self):
        zs = [(-800 + i) / 100.0 for i in range(1601)]
        vals = [mills_hazard(z) for z in zs]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_monotone_across_branch_switch(self):
        zs = [7.9 + i / 200.0 for i in range(41)]
        vals = [mills_hazard(z) for z in zs]
        assert all(b > a for a, b in zip(vals, vals[1:]))


class TestInverseMillsHazard:
    def test_zero_maps_to_neg_inf(self):
        assert inverse_mills_hazard(0.0) is NEG_INF

    def test_hazard_at_zero_inverts(self):
        z = inverse_mills_hazard(0.7978845608028654)
        assert abs(z) < 1e-8

    @pytest.mark.parametrize("target", [0.01, 0.1, 1.0, 5.0, 50.0])
    def test_round_trip(self, target):
        z = inverse_mills_hazard(target)
        assert mills_hazard(z) == pytest.approx(target, rel=1e-10)

    def test_negative_target_rejected(self):
        with pytest.raises(DomainError):
            inverse_mills_hazard(-0.5)

    @given(st.floats(min_value=1e-6, max_value=200.0))
    @settings(max_examples=60, deadline=None)
    def test_round_trip_property(self, target):
        z = inverse_mills_hazard(target)
        assert mills_hazard(z) == pytest.approx(target, rel=1e-9)


class TestUm:
    def test_neg_inf_convention_exact(self):
        assert u_m(3, NEG_INF) == 3.0

    def test_value_at_zero(self):
        expect = 1.0 + 0.5 + mp_psi_plus(0.0) * float(
            mpmath.npdf(0) / mpmath.ncdf(0)
        )
        assert u_m(1, 0.0) == pytest.approx(expect, abs=1e-10)
        assert u_m(1, 0.0) == pytest.approx(1.81831, abs=1e-5)

    def test_upper_limit_from_below(self):
        # the true gap at z = 8 is ~ -1e-16 and saturates to 0 in doubles
        gap = u_m(4, 8.0) - 5.0
        assert -1e-6 < gap <= 0.0
        assert u_m(4, 6.0) - 5.0 < 0.0

    def test_range_and_monotonicity(self):
        # strict interior bounds hold where doubles resolve them (z <= 6);
        # past that the upper limit is approached to within one ulp
        for m in (1, 2, 5):
            zs = [(-80 + i) / 10.0 for i in range(141)]
            vals = [u_m(m, z) for z in zs]
            assert all(m < v < m + 1 for v in vals)
            tail = [u_m(m, z) for z in (6.5, 7.0, 8.0)]
            assert all(m < v <= m + 1 for v in tail)
            both = vals + tail
            assert all(b >= a for a, b in zip(both, both[1:]))
            assert all(b > a for a, b in zip(vals, vals[1:]))


class TestStageTime:
    def test_zero_quantile_gives_mean_crossing_time(self):
        assert stage_time(7.0, 0.0, 2.0) == pytest.approx(3.5, rel=1e-15)

    def test_example_values_satisfy_root_identity(self):
        t = stage_time(100.0, 2.0, 1.0)
        assert t == pytest.approx(81.9002, abs=1e-4)
        assert (100.0 - t) / math.sqrt(t) == pytest.approx(2.0, rel=1e-12)
        t = stage_time(100.0, -2.0, 1.0)
        assert t == pytest.approx(122.0998, abs=1e-4)
        assert (100.0 - t) / math.sqrt(t) == pytest.approx(-2.0, rel=1e-12)

    def test_root_identity_grid(self):
        for x in (1.0, 10.0, 100.0, 1e4):
            for z in range(-3, 4):
                for mu in (0.2, 1.0, 2.0):
                    t = stage_time(x, float(z), mu)
                    assert abs((x - mu * t) / math.sqrt(t) - z) < 1e-8

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            stage_time(0.0, 1.0, 1.0)
        with pytest.raises(DomainError):
            stage_time(1.0, 1.0, 0.0)


class TestStageSize:
    def test_ceiling_of_examples(self):
        assert stage_size(100.0, 2.0, 1.0) == 82
        assert stage_size(0.5, 0.0, 1.0) == 1
        assert stage_size(100.0, -2.0, 1.0) == 123

    def test_always_at_least_one(self):
        assert stage_size(1e-9, 5.0, 3.0) >= 1


class TestCriticalH:
    def test_level_zero_is_identity(self):
        assert critical_h(0, 7.3) == 7.3

    def test_level_one_is_square_root(self):
        assert critical_h(1, 16.0) == pytest.approx(4.0, rel=1e-15)

    def test_level_two_value(self):
        expect = 16.0**0.25 * math.log(16.0) ** 0.25
        assert critical_h(2, 16.0) == pytest.approx(expect, rel=1e-15)
        assert critical_h(2, 16.0) == pytest.approx(2.580782, abs=1e-6)

    def test_rejects_arguments_at_or_below_one(self):
        for x in (1.0, 0.5, -3.0):
            with pytest.raises(DomainError):
                critical_h(2, x)

    def test_band_ordering(self):
        for x in (20.0, 50.0, 1e3, 1e6):
            for m in range(1, 7):
                assert critical_h(m, x) < critical_h(m - 1, x)


class TestKappa:
    def test_empty_product_at_one(self):
        for mu in (0.3, 1.0, 2.5):
            assert kappa(1, mu) == pytest.approx(mu**-1.5, rel=1e-15)

    def test_two_stage_constant(self):
        assert kappa(2, 1.0) == pytest.approx(0.5**0.25, rel=1e-14)
        assert kappa(2, 1.0) == pytest.approx(0.840896, abs=1e-6)

    def test_binomial_drift_value(self):
        assert kappa(1, 0.204131) == pytest.approx(10.843, abs=0.01)

    def test_domain(self):
        with pytest.raises(DomainError):
            kappa(2, 0.0)
        with pytest.raises(DomainError):
            kappa(0, 1.0)


class TestRescalingMap:
    def test_value(self):
        assert f_map(1.0, 1.0) == pytest.approx(4.0 * math.sqrt(math.log(2.0)), rel=1e-14)

    def test_round_trips(self):
        for x in (0.1, 1.0, 10.0, 1e4):
            for mu in (0.5, 1.0):
                y = f_map(x, mu)
                assert f_inverse(y, mu) == pytest.approx(x, rel=1e-8)

    def test_strictly_increasing_on_log_grid(self):
        xs = [10.0**e for e in range(-3, 7)]
        vals = [f_map(x, 0.7) for x in xs]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            f_map(0.0, 1.0)
        with pytest.raises(DomainError):
            f_inverse(-1.0, 1.0)

    @given(st.floats(min_value=1e-3, max_value=1e6), st.floats(min_value=0.05, max_value=5.0))
    @settings(max_examples=60, deadline=None)
    def test_round_trip_property(self, x, mu):
        assert f_inverse(f_map(x, mu), mu) == pytest.approx(x, rel=1e-8)
