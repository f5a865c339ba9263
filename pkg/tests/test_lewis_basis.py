"""
Lewis 基底：獨立子集合、不動點求解、核與距離估計測試
"""
import math

import numpy as np
import pytest

from lattice_regression.services.errors import ConvergenceError, DegenerateSignalError
from lattice_regression.services.lattice_core import MeasureSpace, Signal, lp_norm, make_signals
from lattice_regression.services.lewis_basis import (STALL_ACCEPT, blaar_kernel, brute_force_determinant,
                                                     build_lewis_basis, distance_bound, distance_estimate,
                                                     integral_kernel, john_bound, lewis_coordinates,
                                                     max_independent_subset, non_expansion_scale, solve_lewis)


def _random_game(rng, n, M):
    space = MeasureSpace(weights=rng.uniform(0.5, 1.5, M))
    return make_signals(rng.standard_normal((n, M)), space)


class TestMaxIndependentSubset:
    def test_first_occurrence_order(self):
        x, y = np.array([1.0, 0.0, 1.0]), np.array([0.0, 1.0, 1.0])
        indices, alphas = max_independent_subset(make_signals([x, 2 * x, y, x + y]))
        assert indices == (0, 2)
        np.testing.assert_allclose(alphas, [[1, 0], [2, 0], [0, 1], [1, 1]], atol=1e-12)

    def test_skips_leading_zero_signal(self):
        indices, _ = max_independent_subset(make_signals([[0.0, 0.0], [1.0, 1.0], [1.0, -1.0]]))
        assert indices == (1, 2)

    def test_all_zero_signals(self):
        with pytest.raises(DegenerateSignalError):
            max_independent_subset(make_signals(np.zeros((3, 4))))

    def test_reconstructs_every_signal(self, rng):
        base = rng.standard_normal((3, 10))
        matrix = rng.standard_normal((8, 3)) @ base
        indices, alphas = max_independent_subset(make_signals(matrix))
        assert len(indices) == 3
        np.testing.assert_allclose(alphas @ matrix[list(indices)], matrix, atol=1e-9)


class TestSolveLewis:
    @pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 4.0])
    def test_fixed_point_residual(self, rng, p):
        for _ in range(5):
            basis = build_lewis_basis(_random_game(rng, int(rng.integers(1, 7)), int(rng.integers(6, 33))), p)
            assert basis.residual <= 1e-6
            assert lp_norm(basis.gammaZ, p) == pytest.approx(1.0, rel=1e-9)

    @pytest.mark.parametrize("p", [1.5, 3.0, 4.0])
    def test_integral_kernel_matches_coordinate_kernel(self, rng, p):
        basis = build_lewis_basis(_random_game(rng, 3, 16), p)
        np.testing.assert_allclose(blaar_kernel(basis, safeguard=False).entries,
                                   integral_kernel(basis).entries, atol=1e-6)

    def test_self_dual_exponent_gives_l2_gram(self, random_signals):
        basis = build_lewis_basis(random_signals, 2.0)
        values = np.vstack([s.values for s in random_signals])
        weights = random_signals[0].space.weights
        np.testing.assert_allclose(blaar_kernel(basis).entries, (values * weights) @ values.T, atol=1e-9)

    def test_single_signal(self):
        basis = build_lewis_basis([Signal([3.0, 4.0])], 3.0)
        assert basis.n == 1
        assert basis.residual <= 1e-10

    def test_raises_with_last_residual(self, rng):
        signals = _random_game(rng, 3, 12)
        with pytest.raises(ConvergenceError) as exc_info:
            solve_lewis(signals, 3.0, tol=1e-300, max_iterations=0)
        assert exc_info.value.residual > 0
        assert exc_info.value.iterations == 0

    def test_stall_accepts_below_floor(self, rng):
        """tol 低於浮點精度時，停滯在 STALL_ACCEPT 以下的解被接受並標記"""
        basis = solve_lewis(_random_game(rng, 3, 12), 3.0, tol=1e-300)
        assert basis.residual <= STALL_ACCEPT
        assert basis.stalled or basis.residual == 0
        assert basis.to_dict()["stalled"] == basis.stalled

    def test_damping_recorded_for_large_exponent(self, rng):
        assert build_lewis_basis(_random_game(rng, 2, 10), 4.0).damping == pytest.approx(0.5)

    def test_to_dict(self, rng):
        payload = build_lewis_basis(_random_game(rng, 2, 8), 3.0).to_dict()
        assert payload["n"] == 2
        assert set(payload) >= {"indices", "C", "D", "residual", "iterations"}

    @pytest.mark.parametrize("p", [1.5, 3.0, 4.0])
    def test_determinant_matches_brute_force(self, rng, p):
        for _ in range(2):
            M = int(rng.integers(3, 9))
            signals = make_signals(rng.standard_normal((2, M)), MeasureSpace.uniform(M))
            solved = build_lewis_basis(signals, p).determinant
            oracle = brute_force_determinant(signals, p, seed=int(rng.integers(0, 2 ** 31 - 1)))
            assert solved == pytest.approx(oracle, rel=1e-4)


class TestNonExpansion:
    @pytest.mark.parametrize("p", [1.5, 1.2])
    def test_diagonal_bounded_by_norm(self, rng, p):
        for _ in range(10):
            signals = _random_game(rng, int(rng.integers(1, 7)), int(rng.integers(6, 20)))
            basis = build_lewis_basis(signals, p)
            diag = np.sum(lewis_coordinates(basis) ** 2, axis=1)
            for s, x in enumerate(signals):
                assert diag[s] <= lp_norm(x, p) ** 2 * (1 + 1e-8)

    @pytest.mark.parametrize("p", [2.0, 3.0, 4.0])
    def test_no_scaling_for_large_exponents(self, rng, p):
        assert non_expansion_scale(build_lewis_basis(_random_game(rng, 4, 16), p)) == 1.0


class TestDistance:
    def test_bound_examples(self):
        assert distance_bound(16, 4.0) == pytest.approx(2.0)
        assert distance_bound(16, 2.0) == pytest.approx(1.0)
        assert distance_bound(8, 1.5, q=3.0) == pytest.approx(8 ** (1.0 / 6.0))
        assert distance_bound(8, 1.5, q=3.0, Mp=2.0, Mq=1.5) == pytest.approx(3.0 * 8 ** (1.0 / 6.0))

    def test_john_bound(self):
        assert john_bound(9) == pytest.approx(3.0)

    @pytest.mark.parametrize("p", [1.5, 3.0, 4.0])
    def test_estimate_within_bound(self, rng, p):
        basis = build_lewis_basis(_random_game(rng, 4, 24), p)
        estimate = distance_estimate(basis, rng.standard_normal((500, basis.n)), safeguard=False)
        assert estimate.product <= estimate.bound * (1 + 1e-6)
        assert estimate.bound <= john_bound(basis.n) + 1e-12
        assert estimate.product >= 1.0 - 1e-9

    def test_sample_dimension_checked(self, rng):
        basis = build_lewis_basis(_random_game(rng, 2, 8), 3.0)
        with pytest.raises(ValueError):
            distance_estimate(basis, np.ones((2, 3)))


@pytest.mark.parametrize("p", [1.5, 3.0])
def test_scale_invariance(rng, p):
    """訊號整體乘上 λ 時 C → C/λ、D → λD、K̃ → λ²K̃，|det C| → λ^{−n}|det C|"""
    lam = 3.0
    matrix = rng.standard_normal((5, 12))
    matrix[3] = matrix[0] - 2.0 * matrix[1]
    space = MeasureSpace(weights=rng.uniform(0.5, 1.5, 12))
    basis = build_lewis_basis(make_signals(matrix, space), p)
    scaled = build_lewis_basis(make_signals(lam * matrix, space), p)
    assert scaled.indices == basis.indices
    np.testing.assert_allclose(scaled.alphas, basis.alphas, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(scaled.C, basis.C / lam, rtol=1e-6, atol=1e-12)
    np.testing.assert_allclose(scaled.D, lam * basis.D, rtol=1e-6, atol=1e-12)
    assert non_expansion_scale(scaled) == pytest.approx(non_expansion_scale(basis), rel=1e-6)
    np.testing.assert_allclose(blaar_kernel(scaled).entries, lam ** 2 * blaar_kernel(basis).entries,
                               rtol=1e-6, atol=1e-10)
    assert scaled.determinant == pytest.approx(basis.determinant / lam ** basis.n, rel=1e-6)
    assert math.isfinite(basis.determinant)
