import math

import numpy as np
import pytest

from seqstage.models import (
    ModelKind,
    ReplayExhaustedError,
    ReplaySource,
    SimulateSource,
    bernoulli_pair,
    llr_increment,
    normal_mean_pair,
    standardized_increment,
    substream,
    write_replay_file,
)
from seqstage.numeric import DomainError


class TestBernoulliPair:
    def test_symmetric_closed_forms(self):
        pair = bernoulli_pair(0.4, 0.6)
        expect_i = 0.2 * math.log(1.5)
        expect_sigma = math.sqrt(0.24) * abs(math.log(16.0 / 36.0))
        assert pair.info[0] == pytest.approx(expect_i, rel=1e-14)
        assert pair.info[0] == pytest.approx(0.081093, abs=1e-6)
        assert pair.sigma[0] == pytest.approx(expect_sigma, rel=1e-14)
        assert pair.sigma[0] == pytest.approx(0.39727, abs=1e-5)

    def test_exchangeable_pair_is_exactly_symmetric(self):
        pair = bernoulli_pair(0.4, 0.6)
        assert pair.info[0] == pair.info[1]
        assert pair.sigma[0] == pair.sigma[1]
        assert pair.symmetric
        assert pair.llr_zero == -pair.llr_one

    def test_asymmetric_information_numbers(self):
        pair = bernoulli_pair(0.3, 0.6)
        expect_i0 = 0.3 * math.log(0.5) + 0.7 * math.log(0.7 / 0.4)
        assert pair.info[0] == pytest.approx(expect_i0, rel=1e-14)
        assert pair.info[0] == pytest.approx(0.183787, abs=1e-5)
        assert pair.info[1] == pytest.approx(0.19204, abs=1e-5)
        assert pair.info[0] < pair.info[1]
        assert not pair.symmetric

    def test_moments_match_simulation(self):
        # Monte Carlo cross-check of the closed forms at a million draws
        pair = bernoulli_pair(0.4, 0.6)
        rng = np.random.default_rng(1234)
        x = (rng.random(1_000_000) < 0.4).astype(float)
        llr = np.where(x == 1, pair.llr_one, pair.llr_zero)
        n = llr.size
        se_mean = llr.std(ddof=1) / math.sqrt(n)
        assert abs(llr.mean() - pair.info[0]) < 3 * se_mean
        assert abs(llr.std(ddof=1) - pair.sigma[0]) < 3 * pair.sigma[0] / math.sqrt(n)

    def test_boundary_probabilities_rejected(self):
        for p0, p1 in ((0.0, 0.5), (0.5, 1.0), (0.4, 0.4)):
            with pytest.raises(DomainError):
                bernoulli_pair(p0, p1)


class TestNormalMeanPair:
    def test_closed_forms(self):
        pair = normal_mean_pair(0.0, 1.0)
        assert pair.info == (0.5, 0.5)
        assert pair.sigma == (1.0, 1.0)
        pair = normal_mean_pair(0.0, 0.5)
        assert pair.info == (0.125, 0.125)
        assert pair.sigma == (0.5, 0.5)

    def test_equal_means_rejected(self):
        with pytest.raises(DomainError):
            normal_mean_pair(0.3, 0.3)

    def test_llr_mean_under_null_is_information(self):
        pair = normal_mean_pair(0.0, 1.0)
        rng = np.random.default_rng(5)
        x = rng.standard_normal(1_000_000)
        llr = (pair.params[0] - pair.params[1]) * (x - 0.5)
        se = llr.std(ddof=1) / math.sqrt(llr.size)
        assert abs(llr.mean() - pair.info[0]) < 3 * se


class TestIncrements:
    def test_bernoulli_llr_values(self):
        pair = bernoulli_pair(0.4, 0.6)
        assert llr_increment(pair, 1) == pytest.approx(math.log(0.4 / 0.6), rel=1e-15)
        assert llr_increment(pair, 1) == pytest.approx(-0.405465, abs=1e-6)
        assert llr_increment(pair, 0) == pytest.approx(0.405465, abs=1e-6)

    def test_bernoulli_rejects_non_binary(self):
        with pytest.raises(DomainError):
            llr_increment(bernoulli_pair(0.4, 0.6), 0.5)

    def test_normal_equidistant_point_is_zero(self):
        assert llr_increment(normal_mean_pair(0.0, 1.0), 0.5) == 0.0

    def test_standardized_value(self):
        pair = bernoulli_pair(0.4, 0.6)
        got = standardized_increment(pair, 0, 0)
        assert got == pytest.approx(0.405465 / 0.39727, abs=1e-4)
        assert got == pytest.approx(1.02063, abs=1e-4)

    def test_side_one_is_scaled_negation(self):
        pair = bernoulli_pair(0.3, 0.6)
        for x in (0, 1):
            y0 = standardized_increment(pair, 0, x)
            y1 = standardized_increment(pair, 1, x)
            assert y1 == pytest.approx(-y0 * pair.sigma[0] / pair.sigma[1], rel=1e-12)

    def test_unit_variance_under_own_hypothesis(self):
        pair = bernoulli_pair(0.4, 0.6)
        rng = np.random.default_rng(99)
        x = (rng.random(1_000_000) < 0.4).astype(float)
        y = np.where(
            x == 1,
            standardized_increment(pair, 0, 1),
            standardized_increment(pair, 0, 0),
        )
        assert abs(y.var(ddof=1) - 1.0) < 0.01
        se = 1.0 / math.sqrt(y.size)
        assert abs(y.mean() - pair.drift(0)) < 3 * se


class TestLatticeExactness:
    def test_partial_sums_are_exact_count_multiples(self):
        from seqstage.testing import _LlrTracker

        pair = bernoulli_pair(0.4, 0.6)
        rng = np.random.default_rng(7)
        obs = (rng.random(5000) < 0.4).astype(float)
        track = _LlrTracker(pair)
        ones = 0
        for i in range(0, 5000, 250):
            chunk = obs[i : i + 250]
            track.add_stage(chunk)
            ones += int(chunk.sum())
            closed = (2 * ones - (i + 250)) * pair.llr_one
            assert track.llr == closed  # bit-identical, not approximately


class TestSimulateSource:
    def test_reproducible_per_replication(self):
        pair = bernoulli_pair(0.4, 0.6)
        a = SimulateSource(pair, 0, master_seed=11, replication=3).take(100)
        b = SimulateSource(pair, 0, master_seed=11, replication=3).take(100)
        assert np.array_equal(a, b)
        c = SimulateSource(pair, 0, master_seed=11, replication=4).take(100)
        assert not np.array_equal(a, c)

    def test_take_pattern_does_not_change_stream(self):
        pair = normal_mean_pair(0.0, 1.0)
        one = SimulateSource(pair, 1, 2, 0).take(700)
        src = SimulateSource(pair, 1, 2, 0)
        parts = np.concatenate([src.take(n) for n in (3, 509, 100, 88)])
        assert np.array_equal(one, parts)

    def test_substream_determinism(self):
        assert substream(5, 9).random(4).tolist() == substream(5, 9).random(4).tolist()


class TestReplaySource:
    def test_round_trip_and_determinism(self, tmp_path):
        pair = bernoulli_pair(0.4, 0.6)
        obs = SimulateSource(pair, 1, 42, 0).take(50)
        path = tmp_path / "trace.txt"
        write_replay_file(path, ModelKind.BERNOULLI, 1, obs)
        r1 = ReplaySource(path)
        r2 = ReplaySource(path)
        assert r1.truth == 1
        a = r1.take(50)
        b = r2.take(50)
        assert np.array_equal(a, b)
        assert np.array_equal(a, obs)

    def test_exhaustion_is_an_error(self, tmp_path):
        path = tmp_path / "short.txt"
        path.write_text("# model=bernoulli truth=0\n1\n0\n")
        src = ReplaySource(path)
        src.take(2)
        with pytest.raises(ReplayExhaustedError):
            src.take(1)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("1\n0\n")
        with pytest.raises(DomainError):
            ReplaySource(path)

    def test_non_binary_line_rejected(self, tmp_path):
        path = tmp_path / "junk.txt"
        path.write_text("# model=bernoulli truth=0\n2\n")
        with pytest.raises(DomainError):
            ReplaySource(path)
