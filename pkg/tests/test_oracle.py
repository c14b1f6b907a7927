import math

import numpy as np
import pytest

from seqstage.harness import ExperimentConfig, TABLE1_CONFIG, build_test, simulate
from seqstage.models import bernoulli_pair, normal_mean_pair
from seqstage.numeric import DomainError
from seqstage.oracle import (
    TruncationExcessiveError,
    exact_characteristics,
    wald_bound_check,
)
from seqstage.testing import CostSpec, TestFamily, design_test

PAIR = bernoulli_pair(0.4, 0.6)
STEP = abs(math.log(0.4 / 0.6))


def spec_for(family, d_over_c=10.0, log_d_inv=3.0, k=None):
    cost = CostSpec.from_ratio(log_d_inv, d_over_c)
    return design_test(PAIR, cost, family, k=k)


class TestGamblersRuin:
    """Fully-sequential test with a lattice boundary at two net steps is the
    classic absorbing random walk; its ruin formulas are the hand oracle."""

    def setup_method(self):
        self.spec = spec_for(TestFamily.GROUP, log_d_inv=2.0 * STEP, k=1)

    @staticmethod
    def ruin(p, b):
        # chance the walk with success probability p reaches +b before -b
        r = (1.0 - p) / p
        return (1.0 - r**b) / (1.0 - r ** (2 * b))

    def test_expected_sample_size_and_error(self):
        for truth, p in ((0, 0.4), (1, 0.6)):
            res = exact_characteristics(self.spec, truth, max_obs=5000)
            up = self.ruin(p, 2)  # P(net hits +2 first)
            # net +2 drives the log-likelihood to the lower exit (decision 1)
            err = up if truth == 0 else 1.0 - up
            expect_en = (2 * up - 2 * (1 - up)) / (2 * p - 1)
            assert res.err == pytest.approx(err, abs=1e-12)
            assert res.en == pytest.approx(expect_en, rel=1e-12)
            assert res.em == pytest.approx(expect_en, rel=1e-12)

    def test_known_values_under_alternative(self):
        res = exact_characteristics(self.spec, 1, max_obs=5000)
        assert res.en == pytest.approx(50.0 / 13.0, rel=1e-12)
        assert res.err == pytest.approx(4.0 / 13.0, abs=1e-12)


class TestOracleInvariants:
    def test_symmetric_pair_has_equal_errors(self):
        spec = spec_for(TestFamily.GROUP, k=4)
        r0 = exact_characteristics(spec, 0)
        r1 = exact_characteristics(spec, 1)
        assert r0.err == pytest.approx(r1.err, abs=1e-13)
        assert r0.en == pytest.approx(r1.en, rel=1e-13)

    def test_probability_conservation(self):
        for fam, k in ((TestFamily.GROUP, 1), (TestFamily.GROUP, 4), (TestFamily.AUTO_DELTA_O, None)):
            res = exact_characteristics(spec_for(fam, k=k), 0)
            assert res.max_mass_drift < 1e-12
            assert res.truncation_mass < 1e-9

    def test_terminal_llr_satisfies_wald_identity(self):
        for fam, k in ((TestFamily.GROUP, 1), (TestFamily.GROUP, 4), (TestFamily.AUTO_DELTA_O, None)):
            spec = spec_for(fam, k=k)
            for truth in (0, 1):
                res = exact_characteristics(spec, truth)
                drift = PAIR.info[truth] if truth == 0 else -PAIR.info[truth]
                assert res.terminal_llr_mean == pytest.approx(
                    drift * res.en, rel=1e-10
                )

    def test_non_lattice_model_rejected(self):
        pair = normal_mean_pair(0.0, 1.0)
        cost = CostSpec.from_ratio(3.0, 10.0)
        spec = design_test(pair, cost, TestFamily.GROUP, k=2)
        with pytest.raises(DomainError):
            exact_characteristics(spec, 0)

    def test_truncation_guard(self):
        spec = spec_for(TestFamily.GROUP, k=1)
        with pytest.raises(TruncationExcessiveError):
            exact_characteristics(spec, 0, max_obs=12)


class TestOracleMatchesSimulation:
    @pytest.mark.parametrize(
        "family,k",
        [(TestFamily.GROUP, 1), (TestFamily.GROUP, 4), (TestFamily.AUTO_DELTA_O, None)],
    )
    def test_monte_carlo_within_three_sigma(self, family, k):
        fam_key = "group" if family is TestFamily.GROUP else "auto"
        config = ExperimentConfig(
            dict(
                TABLE1_CONFIG,
                **{
                    "cost.log_d_inv": 3.0,
                    "cost.d_over_c": 10.0,
                    "sim.reps": 20_000,
                    "sim.seed": 404,
                    "test.family": fam_key,
                    "test.k": k,
                },
            )
        )
        report = simulate(config)
        spec = build_test(config)
        r0 = exact_characteristics(spec, 0)
        r1 = exact_characteristics(spec, 1)
        en = 0.5 * (r0.en + r1.en)
        em = 0.5 * (r0.em + r1.em)
        assert abs(report.EN - en) <= 3.0 * report.EN_se
        assert abs(report.EM - em) <= 3.0 * report.EM_se
        for err_hat, err in ((report.err0, r0.err), (report.err1, r1.err)):
            se = math.sqrt(err * (1.0 - err) / 10_000)
            assert abs(err_hat - err) <= 3.0 * se + 1e-12


class TestWaldBound:
    @pytest.mark.parametrize("log_d_inv", [2.0, 3.0])
    @pytest.mark.parametrize(
        "family,k",
        [(TestFamily.GROUP, 1), (TestFamily.GROUP, 4), (TestFamily.AUTO_DELTA_O, None)],
    )
    def test_exact_error_never_exceeds_boundary_scale(self, log_d_inv, family, k):
        spec = spec_for(family, log_d_inv=log_d_inv, k=k)
        assert wald_bound_check(spec, spec.cost.d)

    def test_degenerate_boundary_rejected_upstream(self):
        with pytest.raises(DomainError):
            CostSpec(c=0.01, d=1.5)
