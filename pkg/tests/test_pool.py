"""Grid construction and labeled-pool bookkeeping."""

import numpy as np
import pytest

from aicau import oracle
from aicau.oracle import OracleSpec, ProblemType
from aicau.pool import LabeledPool, RepeatQueryError, build_grid, init_pool


class TestBuildGrid:
    def test_paper_scale_count(self):
        assert build_grid(50).n == 2500

    def test_resolution_two_corners(self):
        grid = build_grid(2)
        expected = np.array(
            [[0, 0], [0, 2 * np.pi], [2 * np.pi, 0], [2 * np.pi, 2 * np.pi]]
        )
        np.testing.assert_allclose(grid.points, expected)

    def test_odd_resolution_contains_center(self):
        grid = build_grid(3)
        center = np.array([np.pi, np.pi])
        assert np.any(np.all(np.isclose(grid.points, center), axis=1))

    def test_row_major_indexing(self):
        grid = build_grid(4)
        axis = np.linspace(0, 2 * np.pi, 4)
        np.testing.assert_allclose(grid.points[1 * 4 + 2], [axis[1], axis[2]])

    def test_too_small_rejected(self):
        with pytest.raises(ValueError):
            build_grid(1)


class TestInitPool:
    def test_counts(self):
        grid = build_grid(10)
        spec = OracleSpec(problem_type=ProblemType.UNCORRELATED)
        pool = init_pool(grid, 10, spec, np.random.default_rng(42))
        assert pool.labeled_mask.sum() == 10
        assert pool.n_observations == 10
        assert pool.round == 0

    def test_exhaustive_init(self):
        grid = build_grid(3)
        spec = OracleSpec(problem_type=ProblemType.NOISELESS)
        pool = init_pool(grid, grid.n, spec, np.random.default_rng(0))
        assert pool.labeled_mask.all()

    def test_deterministic(self):
        grid = build_grid(10)
        spec = OracleSpec(problem_type=ProblemType.CORRELATED)
        p1 = init_pool(grid, 10, spec, np.random.default_rng(7))
        p2 = init_pool(grid, 10, spec, np.random.default_rng(7))
        np.testing.assert_array_equal(p1.labeled_indices, p2.labeled_indices)
        for i in p1.labeled_indices:
            assert p1.observations[i] == p2.observations[i]

    def test_type3_init_is_one_joint_draw(self):
        grid = build_grid(5)
        spec = OracleSpec(problem_type=ProblemType.CORRELATED)
        pool = init_pool(grid, 6, spec, np.random.default_rng(3))
        tags = {tag for obs in pool.observations for _, tag in obs}
        assert tags == {0}

    def test_oversized_init_rejected(self):
        grid = build_grid(3)
        with pytest.raises(ValueError):
            init_pool(grid, grid.n + 1, OracleSpec(), np.random.default_rng(0))


def _labeled_pool(grid, spec, n_init, seed=0):
    return init_pool(grid, n_init, spec, np.random.default_rng(seed))


class TestCommit:
    def test_append_and_round_increment(self):
        grid = build_grid(5)
        spec = OracleSpec(problem_type=ProblemType.UNCORRELATED)
        pool = _labeled_pool(grid, spec, 5)
        before = pool.labeled_mask.sum()
        fresh = [i for i in range(grid.n) if not pool.observations[i]][:3]
        draw = oracle.sample(spec, grid.points[fresh], np.random.default_rng(1), point_indices=fresh, round_tag=1)
        pool.commit(fresh, draw)
        assert pool.labeled_mask.sum() == before + 3
        assert pool.round == 1
        assert pool.history == [fresh]

    def test_repeat_observation_appends(self):
        grid = build_grid(5)
        spec = OracleSpec(problem_type=ProblemType.UNCORRELATED)
        pool = _labeled_pool(grid, spec, 5)
        idx = int(pool.labeled_indices[0])
        draw = oracle.sample(spec, grid.points[[idx]], np.random.default_rng(2), point_indices=[idx], round_tag=1)
        pool.commit([idx], draw)
        assert len(pool.observations[idx]) == 2

    def test_noiseless_repeat_rejected(self):
        grid = build_grid(5)
        spec = OracleSpec(problem_type=ProblemType.NOISELESS)
        pool = _labeled_pool(grid, spec, 5)
        idx = int(pool.labeled_indices[0])
        draw = oracle.sample(spec, grid.points[[idx]], np.random.default_rng(2), point_indices=[idx], round_tag=1)
        with pytest.raises(RepeatQueryError):
            pool.commit([idx], draw)

    def test_noiseless_within_batch_duplicate_rejected(self):
        grid = build_grid(5)
        spec = OracleSpec(problem_type=ProblemType.NOISELESS)
        pool = _labeled_pool(grid, spec, 2)
        fresh = [i for i in range(grid.n) if not pool.observations[i]][0]
        draw = oracle.sample(
            spec, grid.points[[fresh, fresh]], np.random.default_rng(2), point_indices=[fresh, fresh], round_tag=1
        )
        with pytest.raises(RepeatQueryError):
            pool.commit([fresh, fresh], draw)

    def test_misaligned_draw_rejected(self):
        grid = build_grid(5)
        spec = OracleSpec(problem_type=ProblemType.UNCORRELATED)
        pool = _labeled_pool(grid, spec, 2)
        draw = oracle.sample(spec, grid.points[[1]], np.random.default_rng(2), point_indices=[1], round_tag=1)
        with pytest.raises(ValueError):
            pool.commit([2], draw)

    def test_observation_count_invariant(self):
        grid = build_grid(6)
        spec = OracleSpec(problem_type=ProblemType.UNCORRELATED)
        pool = _labeled_pool(grid, spec, 8)
        rng = np.random.default_rng(5)
        total = 8
        for k in range(1, 4):
            indices = list(rng.integers(0, grid.n, size=4))
            indices = [int(i) for i in indices]
            draw = oracle.sample(spec, grid.points[indices], rng, point_indices=indices, round_tag=k)
            pool.commit(indices, draw)
            total += 4
        assert pool.n_observations == total


class TestSerialization:
    def test_json_roundtrip(self, tmp_path):
        grid = build_grid(6)
        spec = OracleSpec(problem_type=ProblemType.CORRELATED)
        pool = _labeled_pool(grid, spec, 7, seed=9)
        indices = [0, 3, 3]
        draw = oracle.sample(spec, grid.points[indices], np.random.default_rng(1), point_indices=indices, round_tag=1)
        pool.commit(indices, draw)

        path = tmp_path / "pool.json"
        pool.save(path)
        loaded = LabeledPool.load(path)
        assert loaded.to_state() == pool.to_state()
        np.testing.assert_array_equal(loaded.labeled_mask, pool.labeled_mask)

    def test_training_rows_expand_realizations(self):
        grid = build_grid(5)
        spec = OracleSpec(problem_type=ProblemType.UNCORRELATED)
        pool = _labeled_pool(grid, spec, 4)
        idx = int(pool.labeled_indices[0])
        draw = oracle.sample(spec, grid.points[[idx]], np.random.default_rng(2), point_indices=[idx], round_tag=1)
        pool.commit([idx], draw)
        X, y = pool.training_rows(grid)
        assert X.shape == (5, 2)
        assert y.shape == (5,)
