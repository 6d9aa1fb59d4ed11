"""Ensemble fitting, prediction summaries, and serialization."""

import numpy as np
import pytest

from aicau import ensemble
from aicau.ensemble import EnsembleConfig, PredictiveSummary
from aicau.oracle import OracleSpec, ProblemType, sample
from aicau.pool import LabeledPool, build_grid, init_pool


def pool_with_targets(grid, indices, values):
    pool = LabeledPool(n=grid.n, allow_repeats=True)
    for i, v in zip(indices, values):
        pool.observations[int(i)].append((float(v), 0))
    return pool


@pytest.fixture(scope="module")
def grid():
    return build_grid(8)


class TestFit:
    def test_constant_data_is_learned(self):
        # 20 constant observations covering every point of a 4x4 grid (four
        # repeats); trained to convergence the ensemble mean reproduces the
        # constant everywhere
        small = build_grid(4)
        rng = np.random.default_rng(0)
        order = list(rng.permutation(small.n)) + list(rng.choice(small.n, 4, replace=False))
        pool = pool_with_targets(small, order, np.full(20, 0.7))
        config = EnsembleConfig(max_epochs=3000, min_improvement=0.0, patience=3000)
        model = ensemble.fit(pool, small, config, np.random.SeedSequence(1))
        summary = ensemble.predict(model, small)
        assert np.max(np.abs(summary.mean - 0.7)) < 0.05

    def test_single_observation_rejected(self, grid):
        pool = pool_with_targets(grid, [3], [0.5])
        with pytest.raises(ValueError):
            ensemble.fit(pool, grid, EnsembleConfig(), np.random.SeedSequence(1))

    def test_bitwise_deterministic(self, grid):
        spec = OracleSpec(problem_type=ProblemType.UNCORRELATED)
        pool = init_pool(grid, 25, spec, np.random.default_rng(5))
        m1 = ensemble.fit(pool, grid, EnsembleConfig(), np.random.SeedSequence(42))
        m2 = ensemble.fit(pool, grid, EnsembleConfig(), np.random.SeedSequence(42))
        for a, b in zip(m1.members, m2.members):
            for pa, pb in zip(a, b):
                np.testing.assert_array_equal(pa, pb)

    def test_seed_changes_parameters(self, grid):
        spec = OracleSpec(problem_type=ProblemType.UNCORRELATED)
        pool = init_pool(grid, 25, spec, np.random.default_rng(5))
        m1 = ensemble.fit(pool, grid, EnsembleConfig(), np.random.SeedSequence(42))
        m2 = ensemble.fit(pool, grid, EnsembleConfig(), np.random.SeedSequence(43))
        assert any(
            np.any(pa != pb) for a, b in zip(m1.members, m2.members) for pa, pb in zip(a, b)
        )

    def test_members_differ_from_each_other(self, grid):
        spec = OracleSpec(problem_type=ProblemType.UNCORRELATED)
        pool = init_pool(grid, 30, spec, np.random.default_rng(6))
        model = ensemble.fit(pool, grid, EnsembleConfig(), np.random.SeedSequence(9))
        first, second = model.members[0], model.members[1]
        assert any(np.any(a != b) for a, b in zip(first, second))

    def test_linear_capacity(self, grid):
        # noiseless linear target; disable the plateau stopper to let it converge
        rng = np.random.default_rng(2)
        indices = rng.choice(grid.n, 50, replace=False)
        X = grid.points[indices]
        y = 0.15 * X[:, 0] - 0.2
        pool = pool_with_targets(grid, indices, y)
        config = EnsembleConfig(max_epochs=2000, patience=2000, min_improvement=0.0)
        model = ensemble.fit(pool, grid, config, np.random.SeedSequence(3))
        summary = ensemble.predict_points(model, X)
        assert np.mean((summary.mean - y) ** 2) < 1e-3

    def test_bags_are_eighty_percent(self, grid, monkeypatch):
        sizes = []
        real_train = ensemble.kernels.train_scalar_mlp

        def spy(X, y, *rest):
            sizes.append(X.shape[0])
            return real_train(X, y, *rest)

        monkeypatch.setattr(ensemble.kernels, "train_scalar_mlp", spy)
        spec = OracleSpec(problem_type=ProblemType.UNCORRELATED)
        pool = init_pool(grid, 30, spec, np.random.default_rng(8))
        ensemble.fit(pool, grid, EnsembleConfig(max_epochs=2), np.random.SeedSequence(1))
        assert sizes == [24, 24, 24, 24, 24]


class TestPredict:
    def test_degenerate_identical_members(self):
        member_matrix = np.full((4, 6), 1.5)
        summary = PredictiveSummary(
            mean=member_matrix.mean(axis=0),
            variance=member_matrix.var(axis=0, ddof=1),
            member_matrix=member_matrix,
        )
        np.testing.assert_array_equal(summary.mean, np.full(6, 1.5))
        np.testing.assert_array_equal(summary.variance, np.zeros(6))

    def test_sample_variance_divisor(self, grid):
        spec = OracleSpec(problem_type=ProblemType.UNCORRELATED)
        pool = init_pool(grid, 20, spec, np.random.default_rng(3))
        model = ensemble.fit(pool, grid, EnsembleConfig(max_epochs=5), np.random.SeedSequence(4))
        summary = ensemble.predict(model, grid)
        manual = summary.member_matrix.var(axis=0, ddof=1)
        np.testing.assert_allclose(summary.variance, manual)
        np.testing.assert_allclose(summary.mean, summary.member_matrix.mean(axis=0))
        assert np.all(summary.variance >= 0)

    def test_hand_variance(self):
        member_matrix = np.array([[1.0], [2.0], [3.0]])
        assert member_matrix.var(axis=0, ddof=1)[0] == pytest.approx(1.0)

    def test_variance_invariant_to_member_order(self, grid):
        spec = OracleSpec(problem_type=ProblemType.UNCORRELATED)
        pool = init_pool(grid, 20, spec, np.random.default_rng(3))
        model = ensemble.fit(pool, grid, EnsembleConfig(max_epochs=5), np.random.SeedSequence(4))
        summary = ensemble.predict(model, grid)
        model.members = model.members[::-1]
        flipped = ensemble.predict(model, grid)
        np.testing.assert_allclose(summary.variance, flipped.variance)


class TestConfig:
    def test_rejects_single_member(self):
        with pytest.raises(ValueError):
            EnsembleConfig(n_members=1)

    def test_rejects_wrong_depth(self):
        with pytest.raises(ValueError):
            EnsembleConfig(hidden_sizes=(32, 32))


class TestSerialization:
    def test_pack_unpack_roundtrip(self, grid):
        spec = OracleSpec(problem_type=ProblemType.UNCORRELATED)
        pool = init_pool(grid, 20, spec, np.random.default_rng(3))
        model = ensemble.fit(pool, grid, EnsembleConfig(max_epochs=5), np.random.SeedSequence(4))
        state = ensemble.pack_model(model)
        rebuilt = ensemble.unpack_model(state)
        for a, b in zip(model.members, rebuilt.members):
            for pa, pb in zip(a, b):
                np.testing.assert_array_equal(pa, pb)
        before = ensemble.predict(model, grid).mean
        after = ensemble.predict(rebuilt, grid).mean
        np.testing.assert_array_equal(before, after)
