"""Oracle signal, noise regimes, and joint sampling."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aicau import oracle
from aicau.oracle import OracleSpec, ProblemType

PI = np.pi


def spec_for(ptype, **kw):
    return OracleSpec(problem_type=ProblemType(ptype), **kw)


class TestMeanSignal:
    def test_peak_at_pi_pi(self):
        assert oracle.mean_signal([(PI, PI)])[0] == pytest.approx(1.0, abs=1e-12)

    def test_zero_at_origin(self):
        assert oracle.mean_signal([(0.0, 0.0)])[0] == pytest.approx(0.0, abs=1e-12)

    def test_one_at_pi_thirds(self):
        assert oracle.mean_signal([(PI / 3, PI / 3)])[0] == pytest.approx(1.0, abs=1e-12)

    @given(
        st.floats(0, 2 * PI, allow_nan=False),
        st.floats(0, 2 * PI, allow_nan=False),
    )
    @settings(max_examples=200, deadline=None)
    def test_bounded(self, x1, x2):
        assert abs(oracle.mean_signal([(x1, x2)])[0]) <= 1.0 + 1e-12


class TestNoiseStd:
    def test_zero_at_signal_peak(self):
        assert oracle.noise_std(spec_for(2), [(PI, PI)])[0] == pytest.approx(0.0, abs=1e-7)

    def test_max_at_signal_zero(self):
        assert oracle.noise_std(spec_for(2), [(0.0, 0.0)])[0] == pytest.approx(0.1, abs=1e-12)

    def test_max_where_second_factor_vanishes(self):
        assert oracle.noise_std(spec_for(2), [(PI / 3, 0.0)])[0] == pytest.approx(0.1, abs=1e-12)

    def test_type1_identically_zero(self):
        pts = np.random.default_rng(0).uniform(0, 2 * PI, size=(50, 2))
        assert np.all(oracle.noise_std(spec_for(1), pts) == 0.0)

    @given(st.floats(0, 2 * PI), st.floats(0, 2 * PI))
    @settings(max_examples=200, deadline=None)
    def test_bounds(self, x1, x2):
        spec = spec_for(2)
        value = oracle.noise_std(spec, [(x1, x2)])[0]
        assert 0.0 <= value <= spec.noise_scale


class TestNoiseCorrelation:
    def test_unit_at_zero_distance(self):
        spec = spec_for(3)
        assert oracle.noise_correlation(spec, (1.0, 2.0), (1.0, 2.0)) == pytest.approx(1.0)

    def test_exp_minus_one_at_half_pi(self):
        spec = spec_for(3)
        value = oracle.noise_correlation(spec, (0.0, 0.0), (PI / 2, 0.0))
        assert value == pytest.approx(np.exp(-1.0), abs=1e-9)

    def test_monotone_decay(self):
        spec = spec_for(3)
        dists = np.linspace(0.1, 8.0, 40)
        vals = [oracle.noise_correlation(spec, (0.0, 0.0), (d, 0.0)) for d in dists]
        assert np.all(np.diff(vals) < 0)
        assert vals[-1] < 1e-2

    def test_metric_option(self):
        l1 = spec_for(3, correlation_metric="l1")
        linf = spec_for(3, correlation_metric="linf")
        a, b = (0.0, 0.0), (1.0, 1.0)
        assert oracle.noise_correlation(l1, a, b) == pytest.approx(np.exp(-2 / PI * 2.0))
        assert oracle.noise_correlation(linf, a, b) == pytest.approx(np.exp(-2 / PI * 1.0))

    def test_bad_metric_rejected(self):
        with pytest.raises(ValueError):
            spec_for(3, correlation_metric="cosine")


class TestSample:
    def test_type1_exact(self):
        spec = spec_for(1)
        pts = np.random.default_rng(1).uniform(0, 2 * PI, size=(20, 2))
        draw = oracle.sample(spec, pts, np.random.default_rng(2))
        np.testing.assert_array_equal(draw.values, oracle.mean_signal(pts))

    def test_type2_exact_where_noise_vanishes(self):
        spec = spec_for(2)
        rng = np.random.default_rng(3)
        for _ in range(10):
            draw = oracle.sample(spec, [(PI, PI)], rng)
            assert draw.values[0] == pytest.approx(1.0, abs=1e-7)

    def test_deterministic_given_state(self):
        spec = spec_for(3)
        pts = np.random.default_rng(4).uniform(0, 2 * PI, size=(6, 2))
        v1 = oracle.sample(spec, pts, np.random.default_rng(99)).values
        v2 = oracle.sample(spec, pts, np.random.default_rng(99)).values
        np.testing.assert_array_equal(v1, v2)

    def test_type3_identity_correlation_reproduces_type2(self):
        # enormous decay rate underflows every off-diagonal correlation to 0,
        # making the correlation matrix exactly the identity
        pts = np.random.default_rng(5).uniform(0.5, 5.0, size=(8, 2))
        s3 = spec_for(3, correlation_decay=1e9)
        s2 = spec_for(2)
        v3 = oracle.realize(s3, pts, np.random.default_rng(7), n_draws=4)
        v2 = oracle.realize(s2, pts, np.random.default_rng(7), n_draws=4)
        np.testing.assert_array_equal(v3, v2)

    def test_type3_pairwise_correlation_monte_carlo(self):
        spec = spec_for(3)
        pts = np.array([[0.1, 0.2], [0.1 + PI / 2, 0.2]])
        rng = np.random.default_rng(11)
        draws = oracle.realize(spec, pts, rng, n_draws=10_000)
        resid = draws - oracle.mean_signal(pts)
        corr = np.corrcoef(resid[:, 0], resid[:, 1])[0, 1]
        assert abs(corr - np.exp(-1.0)) < 0.05

    def test_type2_empirical_variance(self):
        spec = spec_for(2)
        pts = np.array([[0.7, 1.3]])
        draws = oracle.realize(spec, pts, np.random.default_rng(13), n_draws=100_000)
        var = draws[:, 0].var()
        true_var = oracle.noise_std(spec, pts)[0] ** 2
        # variance of the sample variance of a gaussian: 2 sigma^4 / n
        se = np.sqrt(2.0 / 100_000) * true_var
        assert abs(var - true_var) < 3 * se

    def test_empty_points_rejected(self):
        with pytest.raises(ValueError):
            oracle.realize(spec_for(2), np.empty((0, 2)), np.random.default_rng(0))

    def test_draw_alignment_validated(self):
        with pytest.raises(ValueError):
            oracle.NoisyDraw(point_indices=[1, 2], values=np.array([0.5]))


class TestNoiseCovariance:
    def test_type1_zero(self):
        grid_pts = np.random.default_rng(0).uniform(0, 2 * PI, size=(5, 2))
        assert np.all(oracle.noise_covariance(spec_for(1), grid_pts) == 0.0)

    def test_type2_diagonal_value(self):
        cov = oracle.noise_covariance(spec_for(2), [(0.0, 0.0)])
        assert cov[0, 0] == pytest.approx(0.01, abs=1e-12)

    def test_type3_off_diagonal(self):
        pts = np.array([[0.0, 0.0], [PI / 2, 0.0]])  # both have zero signal
        cov = oracle.noise_covariance(spec_for(3), pts)
        assert cov[0, 1] == pytest.approx(0.01 * np.exp(-1.0), abs=1e-9)
        assert cov[0, 1] == pytest.approx(cov[1, 0])
