"""
二階感知器、hinge 損失與錯誤次數上界測試
"""
import math

import numpy as np
import pytest

from lattice_regression.services.errors import ConfigurationError, DimensionMismatchError
from lattice_regression.services.perceptron import (ClassifierState, classify_run, hinge_loss, mistake_bound,
                                                    rank_term, sop_predict, sop_run, sop_update)
from lattice_regression.services.sobolev_bridge import DomainGrid, SobolevParams, band_limited_probe


class TestSopPredict:
    def test_fresh_state_ties_to_plus(self):
        assert sop_predict(ClassifierState.fresh(2, 1.0), [0.3, -0.7]) == 1

    def test_single_mistake(self):
        state = sop_update(ClassifierState.fresh(2, 1.0), [1.0, 0.0], -1, 1)
        assert sop_predict(state, [1.0, 0.0]) == -1

    def test_orthogonal_query(self):
        state = sop_update(ClassifierState.fresh(2, 1.0), [1.0, 0.0], -1, 1)
        assert sop_predict(state, [0.0, 1.0]) == 1

    def test_positive_rescaling(self, rng):
        state = ClassifierState.fresh(3, 0.5)
        for r, y in zip(rng.standard_normal((5, 3)), [1, -1, -1, 1, -1]):
            state = sop_update(state, r, y, -y)
        for r in rng.standard_normal((20, 3)):
            assert sop_predict(state, r) == sop_predict(state, 7.5 * r)

    def test_flipped_vote_flips_prediction(self, rng):
        state = ClassifierState.fresh(3, 1.0)
        for r, y in zip(rng.standard_normal((4, 3)), [1, -1, 1, 1]):
            state = sop_update(state, r, y, -y)
        flipped = ClassifierState(accumulator=state.accumulator, vote=-state.vote, a=state.a)
        for r in rng.standard_normal((20, 3)):
            assert sop_predict(flipped, r) == -sop_predict(state, r)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            sop_predict(ClassifierState.fresh(2, 1.0), [1.0, 0.0, 0.0])


class TestSopUpdate:
    def test_correct_prediction_keeps_state(self):
        state = ClassifierState.fresh(2, 1.0)
        assert sop_update(state, [1.0, 1.0], 1, 1) is state

    def test_mistake_accumulates(self):
        state = sop_update(ClassifierState.fresh(2, 1.0), [0.0, 1.0], 1, -1, t=4)
        np.testing.assert_allclose(state.accumulator, np.diag([1.0, 2.0]))
        np.testing.assert_allclose(state.vote, [0.0, 1.0])
        assert state.mistakes == (4,)

    def test_mistakes_commute(self):
        fresh = ClassifierState.fresh(2, 1.0)
        one = sop_update(sop_update(fresh, [1.0, 2.0], 1, -1), [0.5, -1.0], -1, 1)
        two = sop_update(sop_update(fresh, [0.5, -1.0], -1, 1), [1.0, 2.0], 1, -1)
        np.testing.assert_allclose(one.accumulator, two.accumulator)
        np.testing.assert_allclose(one.vote, two.vote)

    @pytest.mark.parametrize("label", [0, 2, -2])
    def test_invalid_label(self, label):
        with pytest.raises(ConfigurationError):
            sop_update(ClassifierState.fresh(1, 1.0), [1.0], label, 1)


class TestHingeAndBound:
    @pytest.mark.parametrize("f_value, y, gamma, expected", [(2.0, 1, 1.0, 0.0), (0.0, 1, 1.0, 1.0),
                                                             (-1.0, 1, 0.5, 1.5), (1.0, -1, 0.5, 1.5)])
    def test_hinge_examples(self, f_value, y, gamma, expected):
        assert hinge_loss(f_value, y, gamma) == pytest.approx(expected)

    def test_hinge_requires_positive_gamma(self):
        with pytest.raises(ConfigurationError):
            hinge_loss(1.0, 1, 0.0)

    def test_rank_term(self):
        assert rank_term(16, 4.0) == pytest.approx(2.0)
        assert rank_term(100, 2.0) == pytest.approx(1.0)

    def test_bound_vanishes(self):
        assert mistake_bound(1.0, 0.0, 1.0, 1.0, [], 0.0, 0.0) == 0.0

    def test_separable_simplification(self):
        bound = mistake_bound(0.5, 2.0, 1.5, 2.0, [1.0, -1.0], 1.5, 0.0)
        r_sq = 1.5 ** 2 * (1.5 * 2.0 + 2.0 / 2.0)
        assert bound == pytest.approx(r_sq / 0.25)

    def test_hinge_increases_bound(self):
        assert mistake_bound(0.5, 1.0, 1.0, 1.0, [], 1.0, 2.0) > mistake_bound(0.5, 1.0, 1.0, 1.0, [], 1.0, 0.0)

    def test_larger_margin_shrinks_bound(self):
        assert mistake_bound(1.0, 1.0, 1.0, 1.0, [0.5], 1.0, 0.0) <= mistake_bound(0.5, 1.0, 1.0, 1.0, [0.5], 1.0, 0.0)

    def test_rejects_bad_parameters(self):
        with pytest.raises(ConfigurationError):
            mistake_bound(0.0, 1.0, 1.0, 1.0, [], 1.0, 0.0)
        with pytest.raises(ConfigurationError):
            mistake_bound(1.0, 1.0, 1.0, 0.0, [], 1.0, 0.0)


class TestSopRun:
    def test_single_example(self):
        trace = sop_run(np.array([[1.0, 2.0]]), [-1], 1.0)
        assert trace.mistake_count <= 1
        assert trace.mistakes == (0,)

    def test_repeated_input_stops_erring(self):
        trace = sop_run(np.tile([1.0, 0.5], (20, 1)), [-1] * 20, 1.0)
        assert trace.mistake_count == 1

    def test_label_count_checked(self):
        with pytest.raises(DimensionMismatchError):
            sop_run(np.ones((3, 2)), [1, 1], 1.0)


class TestClassifyRun:
    @pytest.fixture
    def setting(self):
        grid = DomainGrid(m=1, side=2 * math.pi, N=32)
        return grid, SobolevParams(s=1.0, p=2.0, m=1)

    def _dataset(self, grid, seed, size=30):
        rng = np.random.default_rng(seed)
        comparator = band_limited_probe(grid, seed=seed, max_mode=2)
        indices = [i for i in rng.permutation(grid.size) if abs(comparator.values[i]) > 1e-3][:size]
        indices = list(rng.choice(indices, size=size))
        points = [grid.coordinates()[i] for i in indices]
        labels = [1 if comparator.values[i] > 0 else -1 for i in indices]
        gamma = 0.5 * min(abs(comparator.values[i]) for i in indices)
        return points, labels, comparator, gamma

    def test_mistakes_within_bound(self, setting):
        grid, params = setting
        for seed in range(20):
            points, labels, comparator, gamma = self._dataset(grid, seed)
            result = classify_run(points, labels, grid, params, gamma, 1.0, comparator)
            assert result.hinge_total == pytest.approx(0.0, abs=1e-9)
            assert result.mistakes <= result.bound

    def test_rerun_keeps_rank(self, setting):
        grid, params = setting
        points, labels, comparator, gamma = self._dataset(grid, 99)
        first = classify_run(points, labels, grid, params, gamma, 1.0, comparator)
        second = classify_run(points, labels, grid, params, gamma, 1.0, comparator)
        assert first.n == second.n
        assert first.mistakes == second.mistakes
